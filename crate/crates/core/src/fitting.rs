//! Weighted least-squares fits of the closed-form curves to normalized scans.
//!
//! Levenberg-Marquardt with Marquardt (diagonal) damping, box bounds by
//! projection and a forward-difference Jacobian. Internally the data are
//! divided by their largest value and the center is measured from the
//! initial guess, so the problem the minimizer sees does not depend on the
//! overall scale or a uniform shift of the scan.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::domain::{
    classify, joint_uncertainties_with_errors, CorrelationParams, ExperimentGeometry, UncertaintyPair, Verdict,
};
use crate::error::{Error, Result};
use crate::models::{check_scan, ModelKind, Profile};

pub const PARAM_NAMES: [&str; 5] = ["sigma_plus", "sigma_minus", "amplitude", "center", "background"];

/// Fewest points accepted: free parameters plus two.
pub const MIN_POINTS: usize = 7;

/// 1-σ upper Poisson limit for zero observed counts, -ln(1 - 0.6827).
pub const ZERO_COUNT_SIGMA: f64 = 1.148;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanData {
    pub positions: Vec<f64>,
    pub coincidences: Vec<u64>,
    pub singles_a: Vec<u64>,
    pub singles_b: Vec<u64>,
    /// Accumulation time per point (s).
    pub duration: Vec<f64>,
}

impl ScanData {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        for (name, len) in [
            ("coincidences", self.coincidences.len()),
            ("singles_a", self.singles_a.len()),
            ("singles_b", self.singles_b.len()),
            ("duration", self.duration.len()),
        ] {
            if len != n {
                return Err(Error::Data {
                    index: len.min(n),
                    reason: format!("{name} has {len} entries, positions has {n}"),
                });
            }
        }
        if n < MIN_POINTS {
            return Err(Error::Data {
                index: n,
                reason: format!("need at least {MIN_POINTS} points, got {n}"),
            });
        }
        check_scan(&self.positions)?;
        for (i, d) in self.duration.iter().enumerate() {
            if !(d.is_finite() && *d > 0.0) {
                return Err(Error::Data {
                    index: i,
                    reason: format!("duration {d} must be finite and > 0"),
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedPoint {
    pub position: f64,
    pub value: f64,
    pub sigma: f64,
}

/// Coincidences divided by the product of singles, with Poisson errors on
/// the coincidences only. Zero counts get the 1-σ upper limit as their error.
pub fn normalize_scan(scan: &ScanData) -> Result<Vec<NormalizedPoint>> {
    scan.validate()?;
    (0..scan.len())
        .map(|i| {
            let prod = scan.singles_a[i] as f64 * scan.singles_b[i] as f64;
            if prod <= 0.0 {
                return Err(Error::Data {
                    index: i,
                    reason: "product of singles is zero".into(),
                });
            }
            let c = scan.coincidences[i] as f64;
            let err = if c > 0.0 { c.sqrt() } else { ZERO_COUNT_SIGMA };
            Ok(NormalizedPoint {
                position: scan.positions[i],
                value: c / prod,
                sigma: err / prod,
            })
        })
        .collect()
}

/// Box constraints on (σ₊, σ₋, amplitude, center, background).
/// A parameter with equal bounds is frozen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lower: [f64; 5],
    pub upper: [f64; 5],
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            lower: [1e-3, 1e-2, f64::MIN_POSITIVE, f64::NEG_INFINITY, 0.0],
            upper: [1e3, 1e5, f64::INFINITY, f64::INFINITY, f64::INFINITY],
        }
    }
}

impl Bounds {
    pub fn free(&self) -> [bool; 5] {
        std::array::from_fn(|j| self.lower[j] < self.upper[j])
    }

    /// Freezes parameter `j` at `value`.
    pub fn freeze(mut self, j: usize, value: f64) -> Self {
        self.lower[j] = value;
        self.upper[j] = value;
        self
    }

    fn validate(&self, init: &CorrelationParams) -> Result<()> {
        let v = init.to_array();
        for j in 0..5 {
            if self.lower[j].is_nan() || self.upper[j].is_nan() || self.lower[j] > self.upper[j] {
                return Err(Error::Domain {
                    what: PARAM_NAMES[j],
                    value: self.lower[j],
                    rule: "bounds must satisfy lower <= upper",
                });
            }
            if v[j] < self.lower[j] || v[j] > self.upper[j] {
                return Err(Error::Domain {
                    what: PARAM_NAMES[j],
                    value: v[j],
                    rule: "initial value must lie within bounds",
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Stop when an accepted step lowers chi² by less than this fraction.
    pub ftol: f64,
    /// Stop when no parameter moves by more than this fraction.
    pub xtol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 300,
            ftol: 1e-14,
            xtol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub kind: ModelKind,
    pub estimator: Estimator,
    pub params: CorrelationParams,
    /// Over (σ₊, σ₋, amplitude, center, background); frozen rows are zero.
    pub covariance: [[f64; 5]; 5],
    /// Objective at the optimum: chi², or the deviance for [`Estimator::Poisson`].
    pub chi2: f64,
    pub dof: usize,
    pub converged: bool,
    pub iterations: usize,
    /// Parameters dominating directions the data do not constrain.
    pub degenerate: Vec<String>,
    /// chi² after each accepted step, starting with the initial value.
    pub trace: Vec<f64>,
}

impl FitResult {
    pub fn std_errors(&self) -> [f64; 5] {
        std::array::from_fn(|j| self.covariance[j][j].max(0.0).sqrt())
    }

    pub fn chi2_per_dof(&self) -> f64 {
        self.chi2 / self.dof as f64
    }
}

/// chi² of the model with `params` against normalized data.
pub fn chi2(
    data: &[NormalizedPoint],
    kind: ModelKind,
    geometry: &ExperimentGeometry,
    params: &CorrelationParams,
) -> Result<f64> {
    let profile = Profile::new(kind, geometry, params.sigma_plus, params.sigma_minus)?;
    let mut total = 0.0;
    for p in data {
        let m = params.amplitude * profile.eval(p.position - params.center)? + params.background;
        total += ((p.value - m) / p.sigma).powi(2);
    }
    Ok(total)
}

/// What the model is compared against, per point.
enum Target {
    /// (value, sigma), both divided by the data scale.
    Gaussian(Vec<(f64, f64)>),
    /// (counts, exposure): expected counts are the scaled model times exposure.
    Poisson(Vec<(f64, f64)>),
}

/// μ - c + c ln(c/μ), accurate when c is close to μ.
fn poisson_half_deviance(c: f64, mu: f64) -> f64 {
    if c == 0.0 {
        return mu;
    }
    let t = c / mu - 1.0;
    if t.abs() < 0.1 {
        // (1+t) ln(1+t) - t = Σ_{k≥2} (-1)^k t^k / (k(k-1))
        let mut sum = 0.0;
        let mut pow = t * t;
        for k in 2..40 {
            let term = pow / (k * (k - 1)) as f64;
            sum += if k % 2 == 0 { term } else { -term };
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
            pow *= t;
        }
        mu * sum
    } else {
        mu * ((1.0 + t) * t.ln_1p() - t)
    }
}

/// Signed square root of the Poisson deviance of one point.
fn deviance_residual(c: f64, mu: f64) -> f64 {
    let mu = mu.max(f64::MIN_POSITIVE);
    let d = (2.0 * poisson_half_deviance(c, mu)).max(0.0).sqrt();
    if c >= mu {
        d
    } else {
        -d
    }
}

/// The fit problem in internal coordinates.
struct Problem<'a> {
    /// Positions relative to `origin`.
    x: Vec<f64>,
    target: Target,
    kind: ModelKind,
    geometry: &'a ExperimentGeometry,
    /// Data scale: values were divided by this.
    scale: f64,
    /// Center reference: internal center is `center - origin`.
    origin: f64,
    lower: [f64; 5],
    upper: [f64; 5],
    free: [bool; 5],
}

impl<'a> Problem<'a> {
    fn new(
        positions: &[f64],
        target: Target,
        kind: ModelKind,
        geometry: &'a ExperimentGeometry,
        scale: f64,
        init: &CorrelationParams,
        bounds: &Bounds,
    ) -> Self {
        let mut prob = Problem {
            x: positions.iter().map(|x| x - init.center).collect(),
            target,
            kind,
            geometry,
            scale,
            origin: init.center,
            lower: [0.0; 5],
            upper: [0.0; 5],
            free: bounds.free(),
        };
        prob.lower = prob.to_internal(&CorrelationParams::from_array(bounds.lower));
        prob.upper = prob.to_internal(&CorrelationParams::from_array(bounds.upper));
        prob
    }

    fn to_internal(&self, p: &CorrelationParams) -> [f64; 5] {
        [
            p.sigma_plus,
            p.sigma_minus,
            p.amplitude / self.scale,
            p.center - self.origin,
            p.background / self.scale,
        ]
    }

    fn to_external(&self, t: &[f64; 5]) -> CorrelationParams {
        CorrelationParams {
            sigma_plus: t[0],
            sigma_minus: t[1],
            amplitude: t[2] * self.scale,
            center: t[3] + self.origin,
            background: t[4] * self.scale,
        }
    }

    /// Multiplies internal-coordinate variances into external units.
    fn unit(&self, j: usize) -> f64 {
        match j {
            2 | 4 => self.scale,
            _ => 1.0,
        }
    }

    fn residuals(&self, t: &[f64; 5]) -> Result<Vec<f64>> {
        let profile = Profile::new(self.kind, self.geometry, t[0], t[1])?;
        if !(t[2] > 0.0 && t[4] >= 0.0) {
            return Err(Error::Domain {
                what: "amplitude",
                value: t[2],
                rule: "amplitude > 0 and background >= 0",
            });
        }
        let model = |x: f64| -> Result<f64> { Ok(t[2] * profile.eval(x - t[3])? + t[4]) };
        match &self.target {
            Target::Gaussian(pts) => self
                .x
                .iter()
                .zip(pts)
                .map(|(&x, (y, s))| Ok((y - model(x)?) / s))
                .collect(),
            Target::Poisson(pts) => self
                .x
                .iter()
                .zip(pts)
                .map(|(&x, (c, e))| Ok(deviance_residual(*c, model(x)? * e)))
                .collect(),
        }
    }

    fn chi2(&self, t: &[f64; 5]) -> f64 {
        match self.residuals(t) {
            Ok(r) => r.iter().map(|v| v * v).sum(),
            Err(_) => f64::INFINITY,
        }
    }

    fn project(&self, t: &mut [f64; 5]) {
        for (j, v) in t.iter_mut().enumerate() {
            *v = v.clamp(self.lower[j], self.upper[j]);
        }
    }

    fn free_indices(&self) -> Vec<usize> {
        (0..5).filter(|&j| self.free[j]).collect()
    }

    /// Jacobian of the residuals over the free parameters.
    fn jacobian(&self, t: &[f64; 5], r0: &[f64], central: bool) -> Result<DMatrix<f64>> {
        let idx = self.free_indices();
        let mut jac = DMatrix::zeros(r0.len(), idx.len());
        for (col, &j) in idx.iter().enumerate() {
            let h = 1e-6 * (1.0 + t[j].abs());
            let mut tp = *t;
            tp[j] += h;
            // Step inward if the forward point leaves the box.
            let (step, r_plus) = if tp[j] <= self.upper[j] {
                (h, self.residuals(&tp)?)
            } else {
                tp[j] = t[j] - h;
                (-h, self.residuals(&tp)?)
            };
            if central && t[j] - h >= self.lower[j] && t[j] + h <= self.upper[j] {
                let mut tm = *t;
                tm[j] -= h;
                let r_minus = self.residuals(&tm)?;
                for i in 0..r0.len() {
                    jac[(i, col)] = (r_plus[i] - r_minus[i]) / (2.0 * h);
                }
            } else {
                for i in 0..r0.len() {
                    jac[(i, col)] = (r_plus[i] - r0[i]) / step;
                }
            }
        }
        Ok(jac)
    }
}

/// Minimizes Σ((y - model)/σ)² over the free parameters.
///
/// Invalid inputs are errors. Running out of iterations is not: the result
/// carries `converged = false` and the best parameters seen.
pub fn fit_curve(
    data: &[NormalizedPoint],
    kind: ModelKind,
    geometry: &ExperimentGeometry,
    init: &CorrelationParams,
    bounds: &Bounds,
    options: &FitOptions,
) -> Result<FitResult> {
    if kind.is_ideal() {
        return Err(Error::Domain {
            what: "mode",
            value: f64::NAN,
            rule: "only interference and imaging curves can be fitted",
        });
    }
    geometry.validate()?;
    init.validate()?;
    bounds.validate(init)?;
    let free = bounds.free();
    let n_free = free.iter().filter(|f| **f).count();
    if data.len() < MIN_POINTS || data.len() <= n_free {
        return Err(Error::Data {
            index: data.len(),
            reason: format!("{} points cannot constrain {n_free} free parameters", data.len()),
        });
    }
    let positions: Vec<f64> = data.iter().map(|p| p.position).collect();
    check_scan(&positions)?;
    for (i, p) in data.iter().enumerate() {
        if !(p.value.is_finite() && p.sigma.is_finite() && p.sigma > 0.0) {
            return Err(Error::Data {
                index: i,
                reason: format!("value {} / sigma {} must be finite with sigma > 0", p.value, p.sigma),
            });
        }
    }
    let scale = data.iter().map(|p| p.value.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        return Err(Error::Data {
            index: 0,
            reason: "all values are zero".into(),
        });
    }

    let prob = Problem::new(
        &positions,
        Target::Gaussian(data.iter().map(|p| (p.value / scale, p.sigma / scale)).collect()),
        kind,
        geometry,
        scale,
        init,
        bounds,
    );
    solve(prob, init, options)
}

/// Levenberg-Marquardt on a prepared problem, followed by the covariance.
fn solve(prob: Problem<'_>, init: &CorrelationParams, options: &FitOptions) -> Result<FitResult> {
    let n_points = prob.x.len();
    let n_free = prob.free.iter().filter(|f| **f).count();
    let mut theta = prob.to_internal(init);
    let mut r = prob.residuals(&theta)?;
    let mut current: f64 = r.iter().map(|v| v * v).sum();
    let mut trace = vec![current];
    let mut mu = 1e-3;
    let mut diag_max = vec![0.0; n_free];
    let mut converged = false;
    let mut iterations = 0;
    let idx = prob.free_indices();

    while iterations < options.max_iterations {
        iterations += 1;
        if current == 0.0 {
            converged = true;
            break;
        }
        let jac = prob.jacobian(&theta, &r, false)?;
        let jtj = jac.transpose() * &jac;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        for k in 0..n_free {
            diag_max[k] = f64::max(diag_max[k], jtj[(k, k)]).max(1e-300);
        }

        // Parameters on a bound whose descent direction points outward stay put.
        let pinned: Vec<bool> = idx
            .iter()
            .enumerate()
            .map(|(k, &j)| (theta[j] <= prob.lower[j] && grad[k] > 0.0) || (theta[j] >= prob.upper[j] && grad[k] < 0.0))
            .collect();
        let mut rhs = -&grad;
        for k in 0..n_free {
            if pinned[k] {
                rhs[k] = 0.0;
            }
        }

        let mut accepted = false;
        let mut stalled = false;
        for _ in 0..60 {
            let mut lhs = jtj.clone();
            for k in 0..n_free {
                lhs[(k, k)] += mu * diag_max[k];
                if pinned[k] {
                    for m in 0..n_free {
                        lhs[(k, m)] = 0.0;
                        lhs[(m, k)] = 0.0;
                    }
                    lhs[(k, k)] = 1.0;
                }
            }
            let Some(chol) = lhs.cholesky() else {
                mu *= 4.0;
                continue;
            };
            let delta = chol.solve(&rhs);
            let mut trial = theta;
            for (k, &j) in idx.iter().enumerate() {
                trial[j] += delta[k];
            }
            prob.project(&mut trial);
            if trial == theta {
                stalled = true;
                break;
            }
            let value = prob.chi2(&trial);
            if value < current {
                let reduction = (current - value) / current;
                let rel_step = idx
                    .iter()
                    .map(|&j| (trial[j] - theta[j]).abs() / (theta[j].abs() + 1e-12))
                    .fold(0.0, f64::max);
                theta = trial;
                current = value;
                r = prob.residuals(&theta)?;
                trace.push(current);
                mu = (mu / 3.0).max(1e-15);
                accepted = true;
                if reduction <= options.ftol || rel_step <= options.xtol {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
            if mu > 1e20 {
                stalled = true;
                break;
            }
        }
        if converged {
            break;
        }
        if !accepted {
            // No descent direction left at floating-point resolution.
            converged = stalled;
            break;
        }
    }

    let dof = n_points - n_free;
    let (covariance, degenerate) = covariance(&prob, &theta, &r, current, dof)?;
    Ok(FitResult {
        kind: prob.kind,
        estimator: match prob.target {
            Target::Gaussian(_) => Estimator::LeastSquares,
            Target::Poisson(_) => Estimator::Poisson,
        },
        params: prob.to_external(&theta),
        covariance,
        chi2: current,
        dof,
        converged,
        iterations,
        degenerate,
        trace,
    })
}

/// Inverse of the Gauss-Newton normal matrix from a central-difference
/// Jacobian, scaled by chi²/dof when that exceeds one.
#[allow(clippy::needless_range_loop)]
fn covariance(
    prob: &Problem<'_>,
    theta: &[f64; 5],
    r: &[f64],
    chi2: f64,
    dof: usize,
) -> Result<([[f64; 5]; 5], Vec<String>)> {
    let idx = prob.free_indices();
    let mut out = [[0.0; 5]; 5];
    if idx.is_empty() {
        return Ok((out, Vec::new()));
    }
    let jac = prob.jacobian(theta, r, true)?;
    let normal = jac.transpose() * &jac;
    let n = idx.len();
    // Correlation scaling keeps the eigenvalue test independent of units.
    let d: Vec<f64> = (0..n).map(|k| normal[(k, k)].max(1e-300).sqrt()).collect();
    let scaled = DMatrix::from_fn(n, n, |i, j| normal[(i, j)] / (d[i] * d[j]));
    let eig = SymmetricEigen::new(scaled);
    let largest = eig.eigenvalues.iter().copied().fold(0.0, f64::max);
    let mut degenerate = Vec::new();
    let mut inv = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        let v = eig.eigenvectors.column(k);
        if lambda <= 1e-12 * largest {
            let dominant = (0..n)
                .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()))
                .expect("non-empty");
            let name = PARAM_NAMES[idx[dominant]].to_string();
            if !degenerate.contains(&name) {
                degenerate.push(name);
            }
            continue;
        }
        inv += (v * v.transpose()) / lambda;
    }
    let inflate = (chi2 / dof as f64).max(1.0);
    for (a, &ja) in idx.iter().enumerate() {
        for (b, &jb) in idx.iter().enumerate() {
            let c = inv[(a, b)] / (d[a] * d[b]) * inflate;
            out[ja][jb] = c * prob.unit(ja) * prob.unit(jb);
        }
    }
    // Symmetrize exactly.
    for a in 0..5 {
        for b in (a + 1)..5 {
            let m = 0.5 * (out[a][b] + out[b][a]);
            out[a][b] = m;
            out[b][a] = m;
        }
    }
    Ok((out, degenerate))
}

/// Objective used by [`fit_scan`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    /// chi² with the √C errors of [`normalize_scan`].
    LeastSquares,
    /// Poisson deviance of the raw coincidences, started from the
    /// least-squares optimum. The reported `chi2` is the deviance.
    Poisson,
}

/// Fits raw counts. √C errors pull the curve towards downward
/// fluctuations, which at low counts biases the fringe contrast and with it
/// σ₊; the Poisson estimator does not have that bias.
pub fn fit_scan(
    scan: &ScanData,
    kind: ModelKind,
    geometry: &ExperimentGeometry,
    init: Option<&CorrelationParams>,
    bounds: &Bounds,
    options: &FitOptions,
    estimator: Estimator,
) -> Result<FitResult> {
    let observed = normalize_scan(scan)?;
    let init = match init {
        Some(p) => *p,
        None => initial_guess(&observed, kind, geometry)?,
    };
    let ls = fit_curve(&observed, kind, geometry, &init, bounds, options)?;
    if estimator == Estimator::LeastSquares {
        return Ok(ls);
    }
    // Same internal scale as the least-squares problem.
    let scale = observed.iter().map(|p| p.value).fold(0.0, f64::max);
    let target = (0..scan.len())
        .map(|i| {
            let prod = scan.singles_a[i] as f64 * scan.singles_b[i] as f64;
            (scan.coincidences[i] as f64, scale * prod)
        })
        .collect();
    let prob = Problem::new(
        &scan.positions,
        Target::Poisson(target),
        kind,
        geometry,
        scale,
        &ls.params,
        bounds,
    );
    let mut fit = solve(prob, &ls.params, options)?;
    fit.converged &= ls.converged;
    fit.iterations += ls.iterations;
    Ok(fit)
}

/// Uncertainty pair and verdict of a converged fit, including the σ₊-σ₋
/// covariance in the product error.
pub fn derive_verdict(fit: &FitResult) -> Result<(UncertaintyPair, Verdict)> {
    if !fit.converged {
        return Err(Error::Unconverged(format!(
            "fit stopped after {} iterations at chi2 = {:.6e} without meeting the convergence test",
            fit.iterations, fit.chi2
        )));
    }
    let c = &fit.covariance;
    let pair = joint_uncertainties_with_errors(
        fit.params.sigma_plus,
        fit.params.sigma_minus,
        c[0][0].max(0.0),
        c[1][1].max(0.0),
        c[0][1],
    )?;
    let verdict = classify(&pair)?;
    Ok((pair, verdict))
}

/// Starting point for a fit: center from the signal centroid, background
/// from the median of the outermost points, σ₊ and σ₋ from a coarse
/// logarithmic grid search with the amplitude solved by least squares.
pub fn initial_guess(
    data: &[NormalizedPoint],
    kind: ModelKind,
    geometry: &ExperimentGeometry,
) -> Result<CorrelationParams> {
    if data.len() < MIN_POINTS {
        return Err(Error::Data {
            index: data.len(),
            reason: format!("need at least {MIN_POINTS} points"),
        });
    }
    let n = data.len();
    let mut edges: Vec<f64> = data[..3].iter().chain(&data[n - 3..]).map(|p| p.value).collect();
    edges.sort_by(f64::total_cmp);
    let background = (0.5 * (edges[2] + edges[3])).max(0.0);

    let (mut wsum, mut xsum) = (0.0, 0.0);
    for p in data {
        let w = (p.value - background).max(0.0);
        wsum += w;
        xsum += w * p.position;
    }
    let center = if wsum > 0.0 {
        xsum / wsum
    } else {
        0.5 * (data[0].position + data[n - 1].position)
    };

    let grid = |lo: f64, hi: f64, k: usize| -> Vec<f64> {
        (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
    };
    let mut best: Option<(f64, CorrelationParams)> = None;
    for &sp in &grid(0.1, 20.0, 15) {
        for &sm in &grid(2.0, 300.0, 15) {
            let profile = Profile::new(kind, geometry, sp, sm)?;
            let shape: Vec<f64> = data
                .iter()
                .map(|p| profile.eval(p.position - center))
                .collect::<Result<_>>()?;
            // Weighted LS for y - b ≈ A·shape.
            let (mut num, mut den) = (0.0, 0.0);
            for (p, s) in data.iter().zip(&shape) {
                let w = 1.0 / (p.sigma * p.sigma);
                num += w * s * (p.value - background);
                den += w * s * s;
            }
            if !(den > 0.0 && num > 0.0) {
                continue;
            }
            let amp = num / den;
            let params = CorrelationParams {
                sigma_plus: sp,
                sigma_minus: sm,
                amplitude: amp,
                center,
                background,
            };
            let c2: f64 = data
                .iter()
                .zip(&shape)
                .map(|(p, s)| ((p.value - amp * s - background) / p.sigma).powi(2))
                .sum();
            if best.as_ref().is_none_or(|(b, _)| c2 < *b) {
                best = Some((c2, params));
            }
        }
    }
    best.map(|(_, p)| p).ok_or_else(|| Error::Data {
        index: 0,
        reason: "no signal above background to initialize the fit".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scan_points(kind: ModelKind, truth: &CorrelationParams, xs: &[f64]) -> Vec<NormalizedPoint> {
        let g = ExperimentGeometry::reference();
        let profile = Profile::new(kind, &g, truth.sigma_plus, truth.sigma_minus).unwrap();
        xs.iter()
            .map(|&x| {
                let v = truth.amplitude * profile.eval(x - truth.center).unwrap() + truth.background;
                NormalizedPoint {
                    position: x,
                    value: v,
                    sigma: 0.01 * v.abs().max(1e-3 * truth.amplitude),
                }
            })
            .collect()
    }

    #[test]
    fn normalize_arithmetic() {
        let mut scan = ScanData {
            positions: (0..7).map(f64::from).collect(),
            coincidences: vec![100, 0, 4, 9, 16, 25, 36],
            singles_a: vec![10_000; 7],
            singles_b: vec![10_000; 7],
            duration: vec![60.0; 7],
        };
        let pts = normalize_scan(&scan).unwrap();
        assert!((pts[0].value - 1e-6).abs() < 1e-21);
        assert!((pts[0].sigma - 1e-7).abs() < 1e-22);
        assert_eq!(pts[1].value, 0.0);
        assert!((pts[1].sigma - 1.148e-8).abs() < 1e-22);
        scan.singles_a = vec![20_000; 7];
        scan.singles_b = vec![20_000; 7];
        let q = normalize_scan(&scan).unwrap();
        assert!((q[0].value - pts[0].value / 4.0).abs() < 1e-22);
        assert!((q[0].sigma - pts[0].sigma / 4.0).abs() < 1e-22);
        scan.singles_b[3] = 0;
        assert!(matches!(normalize_scan(&scan), Err(Error::Data { index: 3, .. })));
    }

    #[test]
    fn zero_count_floor_is_poisson_upper_limit() {
        // P(0 | μ) = exp(-μ) = 1 - 0.6827 gives the 1-σ upper limit.
        let mu = -(1.0f64 - 0.6827).ln();
        assert!((mu - ZERO_COUNT_SIGMA).abs() < 1e-3);
    }

    #[test]
    fn scan_validation() {
        let scan = ScanData {
            positions: vec![0.0, 1.0, 2.0],
            coincidences: vec![1, 2, 3],
            singles_a: vec![1; 3],
            singles_b: vec![1; 3],
            duration: vec![1.0; 3],
        };
        assert!(scan.validate().is_err());
    }

    #[test]
    fn noiseless_imaging_recovery() {
        let truth = CorrelationParams {
            sigma_plus: 1.489,
            sigma_minus: 51.63,
            amplitude: 2.0e-7,
            center: 0.05,
            background: 1.0e-9,
        };
        let xs: Vec<f64> = (0..61).map(|i| -3.0 + 0.1 * i as f64).collect();
        let data = scan_points(ModelKind::Imaging, &truth, &xs);
        let init = CorrelationParams {
            sigma_plus: 1.2 * truth.sigma_plus,
            sigma_minus: 0.8 * truth.sigma_minus,
            amplitude: 1.2 * truth.amplitude,
            center: 0.08,
            background: 0.8 * truth.background,
        };
        let fit = fit_curve(
            &data,
            ModelKind::Imaging,
            &ExperimentGeometry::reference(),
            &init,
            &Bounds::default(),
            &FitOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        let got = fit.params.to_array();
        let want = truth.to_array();
        for j in 0..5 {
            assert!(
                (got[j] - want[j]).abs() <= 1e-3 * want[j].abs(),
                "{}: {} vs {}",
                PARAM_NAMES[j],
                got[j],
                want[j]
            );
        }
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn frozen_parameter_stays_put() {
        let truth = CorrelationParams::new(2.0, 30.0);
        let xs: Vec<f64> = (0..41).map(|i| -2.0 + 0.1 * i as f64).collect();
        let data = scan_points(ModelKind::Imaging, &truth, &xs);
        let init = CorrelationParams {
            sigma_minus: 25.0,
            ..truth
        };
        let bounds = Bounds::default().freeze(4, 0.0).freeze(0, 2.0);
        let fit = fit_curve(
            &data,
            ModelKind::Imaging,
            &ExperimentGeometry::reference(),
            &init,
            &bounds,
            &FitOptions::default(),
        )
        .unwrap();
        assert_eq!(fit.params.background, 0.0);
        assert_eq!(fit.params.sigma_plus, 2.0);
        assert_eq!(fit.dof, 41 - 3);
        assert_eq!(fit.covariance[4], [0.0; 5]);
        assert!((fit.params.sigma_minus - 30.0).abs() < 1e-3 * 30.0);
    }

    #[test]
    fn init_outside_bounds_rejected() {
        let truth = CorrelationParams::new(2.0, 30.0);
        let xs: Vec<f64> = (0..11).map(f64::from).collect();
        let data = scan_points(ModelKind::Imaging, &truth, &xs);
        let bounds = Bounds {
            lower: [3.0, 1.0, 1e-300, -10.0, 0.0],
            ..Bounds::default()
        };
        assert!(fit_curve(
            &data,
            ModelKind::Imaging,
            &ExperimentGeometry::reference(),
            &truth,
            &bounds,
            &FitOptions::default()
        )
        .is_err());
    }

    #[test]
    fn unconverged_fit_is_refused() {
        let fit = FitResult {
            kind: ModelKind::Interference,
            estimator: Estimator::LeastSquares,
            params: CorrelationParams::new(1.0, 10.0),
            covariance: [[0.0; 5]; 5],
            chi2: 1.0,
            dof: 5,
            converged: false,
            iterations: 3,
            degenerate: vec![],
            trace: vec![],
        };
        assert!(matches!(derive_verdict(&fit), Err(Error::Unconverged(_))));
    }

    #[test]
    fn verdict_error_scaling() {
        let mut fit = FitResult {
            kind: ModelKind::Interference,
            estimator: Estimator::LeastSquares,
            params: CorrelationParams::new(1.489, 51.63),
            covariance: [[0.0; 5]; 5],
            chi2: 1.0,
            dof: 5,
            converged: true,
            iterations: 3,
            degenerate: vec![],
            trace: vec![],
        };
        let (_, v0) = derive_verdict(&fit).unwrap();
        assert!((v0.product - 0.000208).abs() < 5e-7);
        assert!(v0.steerable && v0.entangled);
        assert_eq!(v0.product_err, 0.0);
        fit.covariance[0][0] = 1e-4;
        fit.covariance[1][1] = 0.25;
        fit.covariance[0][1] = 2e-3;
        fit.covariance[1][0] = 2e-3;
        let (_, v1) = derive_verdict(&fit).unwrap();
        for row in fit.covariance.iter_mut() {
            for c in row.iter_mut() {
                *c *= 100.0;
            }
        }
        let (_, v2) = derive_verdict(&fit).unwrap();
        assert!((v2.product_err / v1.product_err - 10.0).abs() < 1e-12);
    }

    #[test]
    fn deviance_residual_branches_agree() {
        // Series and closed form meet at |t| = 0.1.
        for &(c, mu) in &[(110.0, 100.0), (90.0, 100.0), (3.0, 2.0)] {
            let t: f64 = c / mu - 1.0;
            let direct = mu * ((1.0 + t) * t.ln_1p() - t);
            assert!((poisson_half_deviance(c, mu) - direct).abs() <= 1e-12 * direct);
        }
        let near = poisson_half_deviance(100.0 * (1.0 + 0.09999), 100.0);
        let far = poisson_half_deviance(100.0 * (1.0 + 0.10001), 100.0);
        assert!((far - near) / near < 1e-3);
        // Small offsets: d = √μ t √(1 - t/3 + t²/6 - ...) with t = c/μ - 1.
        let t: f64 = 1e-4;
        let d = deviance_residual(400.0 * (1.0 + t), 400.0);
        let want = 20.0 * t * (1.0 - t / 3.0 + t * t / 6.0).sqrt();
        assert!((d - want).abs() < 1e-12 * want, "{d} vs {want}");
        assert_eq!(deviance_residual(0.0, 2.0), -2.0);
        assert!(deviance_residual(5.0, 0.0).is_finite());
    }

    #[test]
    fn poisson_fit_of_exact_counts() {
        let truth = CorrelationParams {
            sigma_plus: 1.489,
            sigma_minus: 51.63,
            amplitude: 3.0e-6,
            center: 0.02,
            background: 2.0e-8,
        };
        let g = ExperimentGeometry::reference();
        let profile = Profile::new(ModelKind::Imaging, &g, truth.sigma_plus, truth.sigma_minus).unwrap();
        let positions: Vec<f64> = (0..61).map(|i| -3.0 + 0.1 * i as f64).collect();
        // Large singles make counts nearly continuous, so rounding barely moves the optimum.
        let scan = ScanData {
            coincidences: positions
                .iter()
                .map(|&x| {
                    ((truth.amplitude * profile.eval(x - truth.center).unwrap() + truth.background) * 1e14).round()
                        as u64
                })
                .collect(),
            singles_a: vec![10_000_000; 61],
            singles_b: vec![10_000_000; 61],
            duration: vec![60.0; 61],
            positions,
        };
        let fit = fit_scan(
            &scan,
            ModelKind::Imaging,
            &g,
            None,
            &Bounds::default(),
            &FitOptions::default(),
            Estimator::Poisson,
        )
        .unwrap();
        assert!(fit.converged);
        let (got, want) = (fit.params.to_array(), truth.to_array());
        for j in 0..5 {
            assert!(
                (got[j] - want[j]).abs() <= 1e-4 * want[j].abs(),
                "{}: {} vs {}",
                PARAM_NAMES[j],
                got[j],
                want[j]
            );
        }
        assert!(fit.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
