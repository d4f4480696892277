//! Globally adaptive Gauss-Legendre integration of complex-valued functions.
//!
//! Each panel is integrated with a high- and a low-order rule; their
//! difference is the panel error. The worst panel is bisected until the
//! summed error drops below the requested tolerance or the evaluation budget
//! runs out.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Nodes and weights of an n-point Gauss-Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let nf = n as f64;
        for i in 0..n.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        GaussLegendre { nodes, weights }
    }

    /// Shared instance for the orders used by the integrator.
    pub fn cached(n: usize) -> &'static GaussLegendre {
        static RULES: OnceLock<Vec<(usize, GaussLegendre)>> = OnceLock::new();
        let rules = RULES.get_or_init(|| {
            [10, 15, 20, 30, 36, 48]
                .iter()
                .map(|&k| (k, GaussLegendre::new(k)))
                .collect()
        });
        &rules
            .iter()
            .find(|(k, _)| *k == n)
            .unwrap_or_else(|| panic!("no cached Gauss-Legendre rule of order {n}"))
            .1
    }
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveOptions {
    pub rel_tol: f64,
    /// Tolerance floor as a fraction of ∫|f|; stops the integrator from
    /// chasing relative accuracy on results that cancel to ~0.
    pub l1_floor: f64,
    pub max_evals: usize,
    /// (high, low) rule orders; both must be cached orders.
    pub orders: (usize, usize),
    /// Initial panels are no wider than this.
    pub max_panel_width: Option<f64>,
}

impl Default for AdaptiveOptions {
    fn default() -> Self {
        AdaptiveOptions {
            rel_tol: 1e-10,
            l1_floor: 1e-4,
            max_evals: 1_000_000,
            orders: (30, 20),
            max_panel_width: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: Complex64,
    pub error: f64,
    /// ∫|f| over the domain, from the high-order rule.
    pub l1: f64,
    pub evals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: Complex64,
    error: f64,
    l1: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .total_cmp(&other.error)
            .then_with(|| other.a.total_cmp(&self.a))
    }
}

fn apply<F: FnMut(f64) -> Complex64>(f: &mut F, rule: &GaussLegendre, a: f64, b: f64) -> (Complex64, f64) {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = Complex64::new(0.0, 0.0);
    let mut abs = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        let v = f(mid + half * x);
        sum += v * *w;
        abs += v.norm() * w;
    }
    (sum * half, abs * half.abs())
}

fn eval_panel<F: FnMut(f64) -> Complex64>(f: &mut F, hi: &GaussLegendre, lo: &GaussLegendre, a: f64, b: f64) -> Panel {
    let (value, l1) = apply(f, hi, a, b);
    let (coarse, _) = apply(f, lo, a, b);
    Panel {
        a,
        b,
        value,
        error: (value - coarse).norm(),
        l1,
    }
}

/// Integrates `f` over [a, b]. `breakpoints` inside (a, b) become panel
/// edges, which is where discontinuities of `f` must sit.
pub fn integrate<F: FnMut(f64) -> Complex64>(
    mut f: F,
    a: f64,
    b: f64,
    breakpoints: &[f64],
    opts: &AdaptiveOptions,
) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain {
            what: "integration limit",
            value: if a.is_finite() { b } else { a },
            rule: "limits must be finite",
        });
    }
    if a == b {
        return Ok(Estimate {
            value: Complex64::new(0.0, 0.0),
            error: 0.0,
            l1: 0.0,
            evals: 0,
        });
    }
    let (lo_lim, hi_lim, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };

    let hi = GaussLegendre::cached(opts.orders.0);
    let lo = GaussLegendre::cached(opts.orders.1);
    let per_panel = hi.nodes.len() + lo.nodes.len();

    let mut edges = vec![lo_lim];
    let mut inner: Vec<f64> = breakpoints
        .iter()
        .copied()
        .filter(|x| *x > lo_lim && *x < hi_lim)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(hi_lim);

    let mut heap = BinaryHeap::new();
    let mut evals = 0usize;
    for seg in edges.windows(2) {
        let (s0, s1) = (seg[0], seg[1]);
        let pieces = match opts.max_panel_width {
            Some(w) if w > 0.0 => ((s1 - s0) / w).ceil().max(1.0) as usize,
            _ => 1,
        };
        let h = (s1 - s0) / pieces as f64;
        for i in 0..pieces {
            let p0 = s0 + i as f64 * h;
            let p1 = if i + 1 == pieces { s1 } else { p0 + h };
            heap.push(eval_panel(&mut f, hi, lo, p0, p1));
            evals += per_panel;
        }
    }

    loop {
        let (value, error, l1) = totals(&heap);
        let scale = value.norm().max(opts.l1_floor * l1);
        let roundoff = 50.0 * f64::EPSILON * l1;
        if error <= (opts.rel_tol * scale).max(roundoff) {
            return Ok(Estimate {
                value: value * sign,
                error,
                l1,
                evals,
            });
        }
        if evals + 2 * per_panel > opts.max_evals {
            return Err(Error::Convergence {
                estimate_re: sign * value.re,
                estimate_im: sign * value.im,
                error_bound: error,
                evals,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further in floating point.
            return Err(Error::Convergence {
                estimate_re: sign * value.re,
                estimate_im: sign * value.im,
                error_bound: error,
                evals,
            });
        }
        heap.push(eval_panel(&mut f, hi, lo, worst.a, mid));
        heap.push(eval_panel(&mut f, hi, lo, mid, worst.b));
        evals += 2 * per_panel;
    }
}

/// Sums in panel order so the result does not depend on refinement history.
fn totals(heap: &BinaryHeap<Panel>) -> (Complex64, f64, f64) {
    let mut panels: Vec<&Panel> = heap.iter().collect();
    panels.sort_by(|p, q| p.a.total_cmp(&q.a));
    let mut value = Complex64::new(0.0, 0.0);
    let mut error = 0.0;
    let mut l1 = 0.0;
    for p in panels {
        value += p.value;
        error += p.error;
        l1 += p.l1;
    }
    (value, error, l1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real<F: Fn(f64) -> f64>(f: F) -> impl FnMut(f64) -> Complex64 {
        move |x| Complex64::new(f(x), 0.0)
    }

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [10, 15, 20, 30, 36, 48] {
            let r = GaussLegendre::cached(n);
            let wsum: f64 = r.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-14, "n={n}");
            for k in 0..(2 * n) {
                let got: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(k as i32)).sum();
                let exact = if k % 2 == 1 { 0.0 } else { 2.0 / (k as f64 + 1.0) };
                assert!((got - exact).abs() < 1e-13, "n={n} k={k}: {got}");
            }
        }
    }

    #[test]
    fn gaussian_integral() {
        let e = integrate(real(|x| (-x * x).exp()), -10.0, 10.0, &[], &AdaptiveOptions::default()).unwrap();
        assert!((e.value.re - PI.sqrt()).abs() < 1e-13);
        assert!(e.error < 1e-9);
    }

    #[test]
    fn discontinuity_at_breakpoint() {
        let f = |x: f64| if x.abs() <= 0.3 { 0.0 } else { (-x * x).exp() };
        let e = integrate(real(f), -8.0, 8.0, &[-0.3, 0.3], &AdaptiveOptions::default()).unwrap();
        let exact = PI.sqrt() * crate::special::erfc_real(0.3).unwrap();
        assert!((e.value.re - exact).abs() < 1e-13);
    }

    #[test]
    fn oscillatory_fourier_integral() {
        // ∫ exp(-x²) exp(-iβx) dx = √π exp(-β²/4)
        let beta = 40.0;
        let opts = AdaptiveOptions {
            rel_tol: 1e-10,
            orders: (48, 36),
            max_panel_width: Some(1.0),
            ..Default::default()
        };
        let e = integrate(
            |x| Complex64::new(0.0, -beta * x).exp() * (-x * x).exp(),
            -9.0,
            9.0,
            &[],
            &opts,
        )
        .unwrap();
        let exact = PI.sqrt() * (-beta * beta / 4.0).exp();
        // The exact value is ~1e-174; only the l1 floor is attainable.
        assert!((e.value.re - exact).abs() < 1e-12 * e.l1);
        assert!(e.value.im.abs() < 1e-12 * e.l1);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let opts = AdaptiveOptions::default();
        let a = integrate(real(|x| x.cos()), 0.0, 2.0, &[], &opts).unwrap();
        let b = integrate(real(|x| x.cos()), 2.0, 0.0, &[], &opts).unwrap();
        assert_eq!(a.value, -b.value);
        assert!((a.value.re - 2f64.sin()).abs() < 1e-14);
    }

    #[test]
    fn budget_exhaustion_reports_estimate() {
        let opts = AdaptiveOptions {
            rel_tol: 1e-11,
            max_evals: 200,
            ..Default::default()
        };
        let err = integrate(real(|x| (1.0 / (x + 1e-3)).sin()), 0.0, 1.0, &[], &opts).unwrap_err();
        match err {
            Error::Convergence { error_bound, evals, .. } => {
                assert!(error_bound > 0.0);
                assert!(evals <= 200);
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
