//! Physical model types: geometry, correlation widths, envelopes, the
//! object transfer function and the entanglement / steering classifiers.
//!
//! Units: lengths in mm, transverse wave numbers in 1/mm, ħ = 1.

use std::f64::consts::{PI, SQRT_2};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_non_negative, require_positive, Error, Result};
use crate::special::faddeeva;

/// Largest λ/f accepted before the paraxial relay description stops making sense.
pub const MAX_LAMBDA_OVER_F: f64 = 1e-3;

/// Operating wavelength used when a config omits it. Not stated by the
/// source experiment; reports flag it as a placeholder.
pub const DEFAULT_LAMBDA_MM: f64 = 7.95e-4;
/// Object-plane Gaussian envelope half-width used when a config omits it.
pub const DEFAULT_W0_MM: f64 = 1.6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGeometry {
    /// Relay lens focal length (mm).
    pub f: f64,
    /// Alice objective focal length (mm).
    pub f_a: f64,
    /// Bob lens focal length (mm).
    pub f_b: f64,
    /// Degenerate photon wavelength (mm).
    pub lambda: f64,
    /// Object-plane Gaussian envelope 1/e half-width (mm).
    pub w0: f64,
    /// Opaque block width (mm). Zero means no block.
    pub wb: f64,
}

impl ExperimentGeometry {
    /// Geometry of the reference setup, with the placeholder λ and w0.
    pub fn reference() -> Self {
        ExperimentGeometry {
            f: 400.0,
            f_a: 13.5,
            f_b: 25.4,
            lambda: DEFAULT_LAMBDA_MM,
            w0: DEFAULT_W0_MM,
            wb: 1.23,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("f", self.f)?;
        require_positive("f_a", self.f_a)?;
        require_positive("f_b", self.f_b)?;
        require_positive("lambda", self.lambda)?;
        require_positive("w0", self.w0)?;
        require_non_negative("wb", self.wb)?;
        let shortest = self.f.min(self.f_a).min(self.f_b);
        if self.lambda / shortest >= MAX_LAMBDA_OVER_F {
            return Err(Error::Domain {
                what: "lambda",
                value: self.lambda,
                rule: "paraxial: lambda / min(f, f_a, f_b) must be < 1e-3",
            });
        }
        Ok(())
    }

    /// Object-plane position per unit transverse wave number, λf/2π.
    pub fn object_scale(&self) -> f64 {
        self.lambda * self.f / (2.0 * PI)
    }
}

/// Fit target: correlation widths plus nuisance parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationParams {
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    pub amplitude: f64,
    pub center: f64,
    pub background: f64,
}

impl CorrelationParams {
    /// Unit amplitude, zero center, zero background.
    pub fn new(sigma_plus: f64, sigma_minus: f64) -> Self {
        CorrelationParams {
            sigma_plus,
            sigma_minus,
            amplitude: 1.0,
            center: 0.0,
            background: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        require_positive("sigma_plus", self.sigma_plus)?;
        require_positive("sigma_minus", self.sigma_minus)?;
        require_positive("amplitude", self.amplitude)?;
        require_finite("center", self.center)?;
        require_non_negative("background", self.background)?;
        Ok(())
    }

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.sigma_plus,
            self.sigma_minus,
            self.amplitude,
            self.center,
            self.background,
        ]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        CorrelationParams {
            sigma_plus: v[0],
            sigma_minus: v[1],
            amplitude: v[2],
            center: v[3],
            background: v[4],
        }
    }
}

/// Δp₊ (ħ/mm) and Δx₋ (mm) with 1-σ errors.
///
/// `err_correlation` is the correlation coefficient between the two errors;
/// it enters the propagated error of the product.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyPair {
    pub dp_plus: f64,
    pub dx_minus: f64,
    pub dp_plus_err: f64,
    pub dx_minus_err: f64,
    pub err_correlation: f64,
}

impl UncertaintyPair {
    pub fn validate(&self) -> Result<()> {
        require_positive("dp_plus", self.dp_plus)?;
        require_positive("dx_minus", self.dx_minus)?;
        require_non_negative("dp_plus_err", self.dp_plus_err)?;
        require_non_negative("dx_minus_err", self.dx_minus_err)?;
        if !(-1.0..=1.0).contains(&self.err_correlation) {
            return Err(Error::Domain {
                what: "err_correlation",
                value: self.err_correlation,
                rule: "must lie in [-1, 1]",
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// (Δx₋)²(Δp₊)² in ħ².
    pub product: f64,
    pub product_err: f64,
    pub entangled: bool,
    pub steerable: bool,
}

/// Separability bound on (Δx₋)²(Δp₊)², in ħ².
pub const SEPARABLE_BOUND: f64 = 1.0;
/// Steering bound on (Δx₋)²(Δp₊)², in ħ².
pub const STEERING_BOUND: f64 = 0.25;

impl Verdict {
    /// Re-derives the flags from `product`; used before anything is written out.
    pub fn check_consistent(&self) -> Result<()> {
        let entangled = self.product < SEPARABLE_BOUND;
        let steerable = self.product < STEERING_BOUND;
        if entangled != self.entangled || steerable != self.steerable {
            return Err(Error::Report(format!(
                "product {} implies entangled={entangled}, steerable={steerable}",
                self.product
            )));
        }
        Ok(())
    }
}

/// Normalized 1-D Gaussian envelope (πσ²)^(-1/4) exp(-κ²/2σ²), with the
/// normalization computed once.
#[derive(Debug, Clone, Copy)]
pub struct Envelope {
    norm: f64,
    inv_two_var: f64,
}

impl Envelope {
    pub fn new(sigma: f64) -> Result<Self> {
        require_positive("sigma", sigma)?;
        Ok(Envelope {
            norm: (PI * sigma * sigma).powf(-0.25),
            inv_two_var: 0.5 / (sigma * sigma),
        })
    }

    #[inline]
    pub fn eval(&self, kappa: f64) -> f64 {
        self.norm * (-kappa * kappa * self.inv_two_var).exp()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Coefficient of κ² in the exponent.
    pub fn inv_two_var(&self) -> f64 {
        self.inv_two_var
    }
}

/// Ẽ₊(κ₊).
pub fn envelope_plus(kappa_plus: f64, sigma_plus: f64) -> Result<f64> {
    Ok(Envelope::new(sigma_plus)?.eval(kappa_plus))
}

/// Ẽ₋ evaluated at its own argument, i.e. the caller passes |κ₋|/2.
pub fn envelope_minus(arg: f64, sigma_minus: f64) -> Result<f64> {
    Ok(Envelope::new(sigma_minus)?.eval(arg))
}

/// C⊥(κ₊, κ₋) = Ẽ₊(κ₊) Ẽ₋(κ₋/2).
pub fn transverse_correlation(kappa_plus: f64, kappa_minus: f64, sigma_plus: f64, sigma_minus: f64) -> Result<f64> {
    Ok(envelope_plus(kappa_plus, sigma_plus)? * envelope_minus(0.5 * kappa_minus, sigma_minus)?)
}

/// Precomputed C⊥ for repeated evaluation inside quadrature loops.
#[derive(Debug, Clone, Copy)]
pub struct TransverseCorrelation {
    norm: f64,
    a_plus: f64,
    a_minus: f64,
}

impl TransverseCorrelation {
    pub fn new(sigma_plus: f64, sigma_minus: f64) -> Result<Self> {
        let ep = Envelope::new(sigma_plus)?;
        let em = Envelope::new(sigma_minus)?;
        Ok(TransverseCorrelation {
            norm: ep.norm() * em.norm(),
            a_plus: ep.inv_two_var(),
            // Ẽ₋ takes κ₋/2.
            a_minus: 0.25 * em.inv_two_var(),
        })
    }

    #[inline]
    pub fn eval(&self, kappa_plus: f64, kappa_minus: f64) -> f64 {
        self.norm * (-(self.a_plus * kappa_plus * kappa_plus + self.a_minus * kappa_minus * kappa_minus)).exp()
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Exponent coefficients (κ₊², κ₋²).
    pub fn coefficients(&self) -> (f64, f64) {
        (self.a_plus, self.a_minus)
    }
}

fn check_object(w0: f64, wb: f64) -> Result<()> {
    require_positive("w0", w0)?;
    require_non_negative("wb", wb)?;
    Ok(())
}

/// T(ρ) = exp(-ρ²/w0²) outside the block, 0 on the closed interval |ρ| ≤ wb/2.
pub fn object_transmittance(rho_o: f64, w0: f64, wb: f64) -> Result<f64> {
    check_object(w0, wb)?;
    require_finite("rho_o", rho_o)?;
    Ok(transmittance_unchecked(rho_o, w0, wb))
}

#[inline]
pub(crate) fn transmittance_unchecked(rho_o: f64, w0: f64, wb: f64) -> f64 {
    if rho_o.abs() <= 0.5 * wb {
        0.0
    } else {
        (-(rho_o / w0).powi(2)).exp()
    }
}

/// T̃(q) = ∫ T(ρ) exp(-iqρ) dρ.
///
/// The Gaussian transform minus the transform of the part hidden by the
/// block. With x = wb/(2w0) and u = q w0/2 this collapses to
/// w0 √π Re[exp(-x² - 2ixu) w(-u + ix)], which stays bounded for any q.
/// T is real and even, so the imaginary part is zero.
pub fn object_transmittance_ft(q: f64, w0: f64, wb: f64) -> Result<Complex64> {
    check_object(w0, wb)?;
    require_finite("q", q)?;
    let x = 0.5 * wb / w0;
    let u = 0.5 * q * w0;
    let w = faddeeva(Complex64::new(-u, x))?;
    let phase = Complex64::new(-x * x, -2.0 * x * u).exp();
    Ok(Complex64::new(w0 * PI.sqrt() * (phase * w).re, 0.0))
}

pub fn joint_uncertainties(sigma_plus: f64, sigma_minus: f64) -> Result<UncertaintyPair> {
    require_positive("sigma_plus", sigma_plus)?;
    require_positive("sigma_minus", sigma_minus)?;
    Ok(UncertaintyPair {
        dp_plus: sigma_plus / SQRT_2,
        dx_minus: 1.0 / (SQRT_2 * sigma_minus),
        dp_plus_err: 0.0,
        dx_minus_err: 0.0,
        err_correlation: 0.0,
    })
}

/// Same as [`joint_uncertainties`] with first-order errors from the
/// (σ₊, σ₋) covariance entries.
pub fn joint_uncertainties_with_errors(
    sigma_plus: f64,
    sigma_minus: f64,
    var_plus: f64,
    var_minus: f64,
    cov: f64,
) -> Result<UncertaintyPair> {
    let mut pair = joint_uncertainties(sigma_plus, sigma_minus)?;
    require_non_negative("var_plus", var_plus)?;
    require_non_negative("var_minus", var_minus)?;
    require_finite("cov", cov)?;
    // dp = σ₊/√2, dx = 1/(√2 σ₋): dx has derivative -1/(√2 σ₋²).
    pair.dp_plus_err = var_plus.sqrt() / SQRT_2;
    pair.dx_minus_err = var_minus.sqrt() / (SQRT_2 * sigma_minus * sigma_minus);
    let denom = (var_plus * var_minus).sqrt();
    pair.err_correlation = if denom > 0.0 {
        (-cov / denom).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    Ok(pair)
}

pub fn classify(pair: &UncertaintyPair) -> Result<Verdict> {
    pair.validate()?;
    let product = (pair.dx_minus * pair.dp_plus).powi(2);
    let rp = pair.dp_plus_err / pair.dp_plus;
    let rx = pair.dx_minus_err / pair.dx_minus;
    let rel_var = (rp * rp + rx * rx + 2.0 * pair.err_correlation * rp * rx).max(0.0);
    Ok(Verdict {
        product,
        product_err: 2.0 * product * rel_var.sqrt(),
        entangled: product < SEPARABLE_BOUND,
        steerable: product < STEERING_BOUND,
    })
}
