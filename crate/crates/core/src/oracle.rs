//! Brute-force evaluation of the coincidence integrals before any closed-form
//! reduction. Slow, independent of `models`, and used as ground truth.
//!
//! Interference: |∫∫ e^{-i(f/f_a)κ_s ρ_a} e^{-i(f/f_b)κ_as ρ_b} C⊥(κ_s+κ_as, κ_s-κ_as) T(λfκ_s/2π) dκ_s dκ_as|²
//! Imaging: the κ_as integral collapses onto κ_as = 2πρ_b/(λf).
//!
//! The integrand modulus is exp(-Q) with Q a positive quadratic form in
//! (κ_s, κ_as) (the block only removes mass). Integration windows are
//! ±truncation standard deviations of the corresponding Gaussian, marginal
//! for the outer variable and conditional for the inner one, so everything
//! dropped is below exp(-truncation²/2) of the local maximum.

use std::cell::Cell;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::domain::{ExperimentGeometry, TransverseCorrelation};
use crate::error::{require_finite, Error, Result};
use crate::quadrature::{integrate, AdaptiveOptions, Estimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    /// Half-width of the integration window in standard deviations.
    pub truncation: f64,
    pub rel_tol: f64,
    /// Total integrand evaluations allowed per oracle call.
    pub max_evals: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            truncation: 8.0,
            rel_tol: 1e-6,
            max_evals: 50_000_000,
        }
    }
}

impl QuadratureSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.truncation.is_finite() && self.truncation >= 4.0) {
            return Err(Error::Domain {
                what: "truncation",
                value: self.truncation,
                rule: "must be >= 4",
            });
        }
        if !(self.rel_tol > 1e-12 && self.rel_tol < 1e-2) {
            return Err(Error::Domain {
                what: "rel_tol",
                value: self.rel_tol,
                rule: "must lie in (1e-12, 1e-2)",
            });
        }
        if self.max_evals == 0 {
            return Err(Error::Domain {
                what: "max_evals",
                value: 0.0,
                rule: "must be > 0",
            });
        }
        Ok(())
    }
}

/// Oscillation cycles per initial panel of the outer integral.
const CYCLES_PER_PANEL: f64 = 8.0;

struct Setup {
    corr: TransverseCorrelation,
    /// Object-plane position per unit κ_s.
    scale: f64,
    /// Block half-width in κ_s.
    k_block: f64,
    /// T envelope exponent coefficient of κ_s².
    c: f64,
    w0: f64,
    wb: f64,
}

impl Setup {
    fn new(geometry: &ExperimentGeometry, sigma_plus: f64, sigma_minus: f64) -> Result<Self> {
        geometry.validate()?;
        let corr = TransverseCorrelation::new(sigma_plus, sigma_minus)?;
        let scale = geometry.object_scale();
        Ok(Setup {
            corr,
            scale,
            k_block: 0.5 * geometry.wb / scale,
            c: (scale / geometry.w0).powi(2),
            w0: geometry.w0,
            wb: geometry.wb,
        })
    }

    /// C⊥ · T at (κ_s, κ_as), without the C⊥ normalization.
    #[inline]
    fn modulus(&self, ks: f64, kas: f64) -> f64 {
        let rho_o = self.scale * ks;
        if rho_o.abs() <= 0.5 * self.wb {
            return 0.0;
        }
        let (ap, am) = self.corr.coefficients();
        let kp = ks + kas;
        let km = ks - kas;
        let r = rho_o / self.w0;
        (-(ap * kp * kp + am * km * km + r * r)).exp()
    }

    /// Q = a11 κ_s² + 2 a12 κ_s κ_as + a22 κ_as².
    fn form(&self) -> (f64, f64, f64) {
        let (ap, am) = self.corr.coefficients();
        (ap + am + self.c, ap - am, ap + am)
    }
}

/// Removes the block interval (-k, k) from [lo, hi].
fn open_segments(lo: f64, hi: f64, k: f64) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(2);
    if k <= 0.0 {
        out.push((lo, hi));
        return out;
    }
    if lo < -k {
        out.push((lo, hi.min(-k)));
    }
    if hi > k {
        out.push((lo.max(k), hi));
    }
    out
}

fn panel_width(freq: f64, window: f64) -> Option<f64> {
    if freq.abs() > 0.0 {
        Some((CYCLES_PER_PANEL * 2.0 * PI / freq.abs()).min(window))
    } else {
        None
    }
}

/// Shared evaluation budget and first inner failure across nested integrals.
struct Budget {
    used: Cell<usize>,
    limit: usize,
    failed: Cell<Option<f64>>,
}

impl Budget {
    fn new(limit: usize) -> Self {
        Budget {
            used: Cell::new(0),
            limit,
            failed: Cell::new(None),
        }
    }

    fn remaining(&self) -> usize {
        self.limit.saturating_sub(self.used.get())
    }

    fn charge(&self, n: usize) {
        self.used.set(self.used.get() + n);
    }
}

fn inner_options(quad: &QuadratureSpec, budget: &Budget, panel: Option<f64>) -> AdaptiveOptions {
    AdaptiveOptions {
        rel_tol: (quad.rel_tol * 1e-2).max(1e-13),
        l1_floor: 1e-4,
        max_evals: budget.remaining(),
        orders: (30, 20),
        max_panel_width: panel,
    }
}

/// ∫ over the inner variable on a list of segments; failures are recorded in
/// the budget and reported as zero so the outer pass can finish.
fn segmented<F: FnMut(f64) -> Complex64>(
    mut f: F,
    segments: &[(f64, f64)],
    opts: &AdaptiveOptions,
    budget: &Budget,
    outer_at: f64,
) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    for &(a, b) in segments {
        if budget.failed.get().is_some() {
            return total;
        }
        let o = AdaptiveOptions {
            max_evals: budget.remaining(),
            ..*opts
        };
        match integrate(&mut f, a, b, &[], &o) {
            Ok(Estimate { value, evals, .. }) => {
                budget.charge(evals);
                total += value;
            }
            Err(Error::Convergence { evals, .. }) => {
                budget.charge(evals);
                budget.failed.set(Some(outer_at));
            }
            Err(_) => budget.failed.set(Some(outer_at)),
        }
    }
    total
}

fn finish(outer: Result<Estimate>, budget: &Budget, norm: f64) -> Result<f64> {
    let estimate = match outer {
        Ok(e) => e,
        Err(Error::Convergence {
            estimate_re,
            estimate_im,
            error_bound,
            evals,
        }) => {
            let amp = Complex64::new(estimate_re, estimate_im) * norm;
            return Err(Error::Convergence {
                estimate_re: amp.norm_sqr(),
                estimate_im: 0.0,
                error_bound: 2.0 * amp.norm() * error_bound * norm,
                evals: evals + budget.used.get(),
            });
        }
        Err(e) => return Err(e),
    };
    let amp = estimate.value * norm;
    if budget.failed.get().is_some() {
        return Err(Error::Convergence {
            estimate_re: amp.norm_sqr(),
            estimate_im: 0.0,
            error_bound: f64::INFINITY,
            evals: estimate.evals + budget.used.get(),
        });
    }
    Ok(amp.norm_sqr())
}

fn check_inputs(rho_a: f64, rho_b: f64, quad: &QuadratureSpec) -> Result<()> {
    require_finite("rho_a", rho_a)?;
    require_finite("rho_b", rho_b)?;
    quad.validate()
}

/// Ghost-interference coincidence rate by 2-D quadrature over (κ_s, κ_as).
/// Inner integral over κ_s, outer over κ_as.
pub fn oracle_interference_g2(
    rho_a: f64,
    rho_b: f64,
    geometry: &ExperimentGeometry,
    sigma_plus: f64,
    sigma_minus: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_inputs(rho_a, rho_b, quad)?;
    let s = Setup::new(geometry, sigma_plus, sigma_minus)?;
    let gamma = geometry.f / geometry.f_a * rho_a;
    let beta = geometry.f / geometry.f_b * rho_b;
    let t = quad.truncation;
    let (a11, a12, a22) = s.form();
    let det = a11 * a22 - a12 * a12;
    let outer_half = t * (a11 / (2.0 * det)).sqrt();
    let inner_half = t / (2.0 * a11).sqrt();
    let budget = Budget::new(quad.max_evals);
    let inner_opts = inner_options(quad, &budget, panel_width(gamma, 2.0 * inner_half));

    let g = |kas: f64| -> Complex64 {
        let mu = -a12 / a11 * kas;
        let segs = open_segments(mu - inner_half, mu + inner_half, s.k_block);
        let inner = segmented(
            |ks| {
                let m = s.modulus(ks, kas);
                if gamma == 0.0 {
                    Complex64::new(m, 0.0)
                } else {
                    Complex64::from_polar(m, -gamma * ks)
                }
            },
            &segs,
            &inner_opts,
            &budget,
            kas,
        );
        inner * Complex64::from_polar(1.0, -beta * kas)
    };

    let outer_opts = AdaptiveOptions {
        rel_tol: 0.5 * quad.rel_tol,
        l1_floor: 1e-4,
        max_evals: quad.max_evals,
        orders: (48, 36),
        max_panel_width: panel_width(beta, 2.0 * outer_half),
    };
    let outer = integrate(g, -outer_half, outer_half, &[], &outer_opts);
    finish(outer, &budget, s.corr.norm())
}

/// Same integral in the rotated coordinates κ₊ = κ_s + κ_as, κ₋ = κ_s - κ_as
/// (Jacobian 1/2). Inner integral over κ₋, outer over κ₊.
pub fn oracle_interference_g2_rotated(
    rho_a: f64,
    rho_b: f64,
    geometry: &ExperimentGeometry,
    sigma_plus: f64,
    sigma_minus: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_inputs(rho_a, rho_b, quad)?;
    let s = Setup::new(geometry, sigma_plus, sigma_minus)?;
    let gamma = geometry.f / geometry.f_a * rho_a;
    let beta = geometry.f / geometry.f_b * rho_b;
    let t = quad.truncation;
    let (ap, am) = s.corr.coefficients();
    // Q = ap u² + am v² + c (u + v)²/4 with u = κ₊, v = κ₋.
    let b11 = ap + 0.25 * s.c;
    let b12 = 0.25 * s.c;
    let b22 = am + 0.25 * s.c;
    let det = b11 * b22 - b12 * b12;
    let outer_half = t * (b22 / (2.0 * det)).sqrt();
    let inner_half = t / (2.0 * b22).sqrt();
    let budget = Budget::new(quad.max_evals);
    // Phase along v: -(γ - β) v / 2.
    let inner_freq = 0.5 * (gamma - beta);
    let inner_opts = inner_options(quad, &budget, panel_width(inner_freq, 2.0 * inner_half));

    let g = |u: f64| -> Complex64 {
        let mu = -b12 / b22 * u;
        // Block |κ_s| ≤ K is |u + v| ≤ 2K.
        let segs = open_segments(mu - inner_half + u, mu + inner_half + u, 2.0 * s.k_block);
        let inner = segmented(
            |w| {
                // w = u + v = 2κ_s
                let v = w - u;
                let ks = 0.5 * w;
                let kas = 0.5 * (u - v);
                Complex64::from_polar(s.modulus(ks, kas), -inner_freq * v)
            },
            &segs,
            &inner_opts,
            &budget,
            u,
        );
        inner * Complex64::from_polar(0.5, -0.5 * (gamma + beta) * u)
    };

    let outer_opts = AdaptiveOptions {
        rel_tol: 0.5 * quad.rel_tol,
        l1_floor: 1e-4,
        max_evals: quad.max_evals,
        orders: (48, 36),
        max_panel_width: panel_width(0.5 * (gamma + beta), 2.0 * outer_half),
    };
    let outer = integrate(g, -outer_half, outer_half, &[], &outer_opts);
    finish(outer, &budget, s.corr.norm())
}

/// Ghost-imaging coincidence rate: κ_as pinned at 2πρ_b/(λf), 1-D quadrature over κ_s.
pub fn oracle_imaging_g2(
    rho_a: f64,
    rho_b: f64,
    geometry: &ExperimentGeometry,
    sigma_plus: f64,
    sigma_minus: f64,
    quad: &QuadratureSpec,
) -> Result<f64> {
    check_inputs(rho_a, rho_b, quad)?;
    let s = Setup::new(geometry, sigma_plus, sigma_minus)?;
    let gamma = geometry.f / geometry.f_a * rho_a;
    let kas = rho_b / s.scale;
    let (a11, a12, _) = s.form();
    let half = quad.truncation / (2.0 * a11).sqrt();
    let mu = -a12 / a11 * kas;
    let opts = AdaptiveOptions {
        rel_tol: 0.5 * quad.rel_tol,
        l1_floor: 1e-4,
        max_evals: quad.max_evals,
        orders: (30, 20),
        max_panel_width: panel_width(gamma, 2.0 * half),
    };
    let mut total = Complex64::new(0.0, 0.0);
    let mut evals = 0;
    for (a, b) in open_segments(mu - half, mu + half, s.k_block) {
        let o = AdaptiveOptions {
            max_evals: quad.max_evals.saturating_sub(evals).max(1),
            ..opts
        };
        let f = |ks: f64| Complex64::from_polar(s.modulus(ks, kas), -gamma * ks);
        match integrate(f, a, b, &[], &o) {
            Ok(e) => {
                total += e.value;
                evals += e.evals;
            }
            Err(Error::Convergence {
                estimate_re,
                estimate_im,
                error_bound,
                evals: used,
            }) => {
                let amp = (total + Complex64::new(estimate_re, estimate_im)) * s.corr.norm();
                return Err(Error::Convergence {
                    estimate_re: amp.norm_sqr(),
                    estimate_im: 0.0,
                    error_bound: 2.0 * amp.norm() * error_bound * s.corr.norm(),
                    evals: evals + used,
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((total * s.corr.norm()).norm_sqr())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        QuadratureSpec::default().validate().unwrap();
        for bad in [
            QuadratureSpec {
                truncation: 3.9,
                ..Default::default()
            },
            QuadratureSpec {
                rel_tol: 1e-12,
                ..Default::default()
            },
            QuadratureSpec {
                rel_tol: 1e-2,
                ..Default::default()
            },
            QuadratureSpec {
                max_evals: 0,
                ..Default::default()
            },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn gaussian_closed_form_without_block() {
        // With wb = 0 and ρ_a = ρ_b = 0 the integrand is a pure Gaussian:
        // ∫∫ exp(-xᵀAx) = π/√det A, det A = 4 a₊a₋ + c(a₊ + a₋),
        // a₊ = 1/(2σ₊²), a₋ = 1/(8σ₋²), c = (λf/2π w0)².
        let g = ExperimentGeometry {
            wb: 0.0,
            ..ExperimentGeometry::reference()
        };
        let (sp, sm) = (1.489, 51.63);
        let ap = 0.5 / (sp * sp);
        let am = 0.125 / (sm * sm);
        let c = (g.object_scale() / g.w0).powi(2);
        let norm = (PI * sp * sp).powf(-0.25) * (PI * sm * sm).powf(-0.25);
        let amp = norm * PI / (4.0 * ap * am + c * (ap + am)).sqrt();
        let exact = amp * amp;
        let got = oracle_interference_g2(0.0, 0.0, &g, sp, sm, &QuadratureSpec::default()).unwrap();
        assert!((got - exact).abs() < 2e-6 * exact, "{got} vs {exact}");
        let rot = oracle_interference_g2_rotated(0.0, 0.0, &g, sp, sm, &QuadratureSpec::default()).unwrap();
        assert!((rot - exact).abs() < 2e-6 * exact, "{rot} vs {exact}");
    }

    #[test]
    fn budget_exhaustion_is_a_convergence_error() {
        let quad = QuadratureSpec {
            max_evals: 500,
            ..Default::default()
        };
        let err = oracle_interference_g2(0.0, 0.02, &ExperimentGeometry::reference(), 1.489, 51.63, &quad).unwrap_err();
        assert!(matches!(err, Error::Convergence { .. }), "{err:?}");
    }

    #[test]
    fn imaging_depends_on_rho_b_only_through_pinned_kappa() {
        // Scaling f_b leaves the imaging oracle untouched: Bob's lens does
        // not enter once κ_as is pinned.
        let g = ExperimentGeometry::reference();
        let g2 = ExperimentGeometry { f_b: 50.0, ..g };
        let q = QuadratureSpec::default();
        for &x in &[0.0, 0.4, 1.1] {
            let a = oracle_imaging_g2(0.0, x, &g, 1.489, 51.63, &q).unwrap();
            let b = oracle_imaging_g2(0.0, x, &g2, 1.489, 51.63, &q).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn imaging_far_tail_is_negligible() {
        let g = ExperimentGeometry::reference();
        let q = QuadratureSpec::default();
        let peak = oracle_imaging_g2(0.0, 1.0, &g, 1.489, 51.63, &q).unwrap();
        for &x in &[5.0 * g.w0 + 0.1, -9.0] {
            let v = oracle_imaging_g2(0.0, x, &g, 1.489, 51.63, &q).unwrap();
            assert!(v < 1e-6 * peak, "x={x}: {v}");
        }
    }

    #[test]
    fn segments_skip_the_block() {
        assert_eq!(open_segments(-5.0, 5.0, 1.0), vec![(-5.0, -1.0), (1.0, 5.0)]);
        assert_eq!(open_segments(2.0, 5.0, 1.0), vec![(2.0, 5.0)]);
        assert!(open_segments(-0.5, 0.5, 1.0).is_empty());
        assert_eq!(open_segments(-0.5, 0.5, 0.0), vec![(-0.5, 0.5)]);
    }
}
