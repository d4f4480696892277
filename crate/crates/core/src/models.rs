//! Closed-form coincidence curves for ghost interference and ghost imaging,
//! and their ideal (perfectly correlated) limits.
//!
//! All curves are defined only up to an overall constant. `amplitude`,
//! `center` and `background` from [`CorrelationParams`] are applied as
//! `amplitude * profile(rho_b - center) + background`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{object_transmittance_ft, transmittance_unchecked, CorrelationParams, ExperimentGeometry};
use crate::error::{require_finite, require_positive, Error, Result};
use crate::special::{erfc_complex_scaled, erfc_real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Interference,
    Imaging,
    IdealInterference,
    IdealImaging,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Interference => "interference",
            ModelKind::Imaging => "imaging",
            ModelKind::IdealInterference => "ideal-interference",
            ModelKind::IdealImaging => "ideal-imaging",
        }
    }

    pub fn is_ideal(self) -> bool {
        matches!(self, ModelKind::IdealInterference | ModelKind::IdealImaging)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "interference" => Ok(ModelKind::Interference),
            "imaging" => Ok(ModelKind::Imaging),
            "ideal-interference" => Ok(ModelKind::IdealInterference),
            "ideal-imaging" => Ok(ModelKind::IdealImaging),
            other => Err(format!(
                "unknown mode `{other}` (expected interference, imaging, ideal-interference or ideal-imaging)"
            )),
        }
    }
}

/// Unscaled curve shape with all ρ_b-independent constants folded in.
#[derive(Debug, Clone, Copy)]
pub enum Profile {
    Interference {
        /// ln of the prefactor σ₊σ₋w0/√D.
        ln_pref: f64,
        /// Gaussian exponent coefficient of ρ_b².
        gauss: f64,
        /// Real part of both erfc arguments.
        re: f64,
        /// Imaginary part of the erfc arguments per unit ρ_b.
        im_slope: f64,
    },
    Imaging {
        pref: f64,
        gauss: f64,
        /// erf arguments are b0 ± b1·ρ_b.
        b0: f64,
        b1: f64,
    },
    IdealInterference {
        /// Spatial frequency per unit ρ_b, 2π/(λ f_b).
        q_slope: f64,
        w0: f64,
        wb: f64,
    },
    IdealImaging {
        w0: f64,
        wb: f64,
    },
}

impl Profile {
    pub fn new(kind: ModelKind, geometry: &ExperimentGeometry, sigma_plus: f64, sigma_minus: f64) -> Result<Self> {
        geometry.validate()?;
        let ExperimentGeometry {
            f,
            f_a,
            f_b,
            lambda,
            w0,
            wb,
        } = *geometry;
        if kind.is_ideal() {
            return Ok(match kind {
                ModelKind::IdealInterference => Profile::IdealInterference {
                    q_slope: 2.0 * PI / (lambda * f_b),
                    w0,
                    wb,
                },
                _ => Profile::IdealImaging { w0, wb },
            });
        }
        require_positive("sigma_plus", sigma_plus)?;
        require_positive("sigma_minus", sigma_minus)?;
        let sp2 = sigma_plus * sigma_plus;
        let sm2 = sigma_minus * sigma_minus;
        let pi2 = PI * PI;
        let s = sp2 + 4.0 * sm2;
        let d = 8.0 * pi2 * w0 * w0 + f * f * s * lambda * lambda;
        let cross = f * f * sp2 * sm2 * lambda * lambda;
        let profile = match kind {
            ModelKind::Interference => {
                let den = 2.0 * f * f_b * w0 * lambda * (s * d).sqrt();
                Profile::Interference {
                    ln_pref: (sigma_plus * sigma_minus * w0).ln() - 0.5 * d.ln(),
                    gauss: f * f * (pi2 * s * w0 * w0 + 2.0 * cross) / (f_b * f_b * d),
                    re: f_b * wb * d / den,
                    im_slope: 2.0 * f * f * PI * (sp2 - 4.0 * sm2) * w0 * w0 * lambda / den,
                }
            }
            _ => {
                let e = 2.0 * pi2 * s * w0 * w0 + 4.0 * cross;
                let den = 4.0 * f * f_a * sigma_plus * sigma_minus * w0 * lambda * e.sqrt();
                Profile::Imaging {
                    pref: sigma_plus * sigma_minus * w0 / e.sqrt(),
                    gauss: 2.0 * pi2 * d / (f * f * lambda * lambda * e),
                    b0: (2.0 * f_a * pi2 * w0 * w0 * s * wb + 4.0 * f_a * cross * wb) / den,
                    b1: 4.0 * f_a * pi2 * w0 * w0 * (sp2 - 4.0 * sm2) / den,
                }
            }
        };
        Ok(profile)
    }

    /// Profile value at scan offset `x = rho_b - center`.
    pub fn eval(&self, x: f64) -> Result<f64> {
        require_finite("rho_b", x)?;
        let v = match *self {
            Profile::Interference {
                ln_pref,
                gauss,
                re,
                im_slope,
            } => {
                let im = im_slope * x;
                let minus = erfc_complex_scaled(Complex64::new(re, -im))?;
                let plus = erfc_complex_scaled(Complex64::new(re, im))?;
                // Both arguments share Re and |Im|, hence the same log scale.
                let sum = minus.value + plus.value;
                let m = sum.norm();
                if m == 0.0 {
                    return Ok(0.0);
                }
                let log = 2.0 * ln_pref - 2.0 * gauss * x * x + 2.0 * plus.log_scale + 2.0 * m.ln();
                if log.is_nan() {
                    return Err(Error::NonFinite {
                        subterm: "interference exponent",
                        rho_b: x,
                    });
                }
                log.exp()
            }
            Profile::Imaging { pref, gauss, b0, b1 } => {
                // 2 - erf(B1) - erf(B2) written as erfc(B1) + erfc(B2).
                let bracket = erfc_real(b0 + b1 * x)? + erfc_real(b0 - b1 * x)?;
                let amp = pref * (-gauss * x * x).exp() * bracket;
                amp * amp
            }
            Profile::IdealInterference { q_slope, w0, wb } => object_transmittance_ft(q_slope * x, w0, wb)?.norm_sqr(),
            Profile::IdealImaging { w0, wb } => transmittance_unchecked(-x, w0, wb).powi(2),
        };
        if !v.is_finite() {
            return Err(Error::NonFinite {
                subterm: "curve value",
                rho_b: x,
            });
        }
        Ok(v)
    }
}

fn apply_params(profile: &Profile, rho_b: f64, params: &CorrelationParams) -> Result<f64> {
    Ok(params.amplitude * profile.eval(rho_b - params.center)? + params.background)
}

pub fn ghost_interference_g2(rho_b: f64, geometry: &ExperimentGeometry, params: &CorrelationParams) -> Result<f64> {
    params.validate()?;
    let p = Profile::new(ModelKind::Interference, geometry, params.sigma_plus, params.sigma_minus)?;
    apply_params(&p, rho_b, params)
}

pub fn ghost_imaging_g2(rho_b: f64, geometry: &ExperimentGeometry, params: &CorrelationParams) -> Result<f64> {
    params.validate()?;
    let p = Profile::new(ModelKind::Imaging, geometry, params.sigma_plus, params.sigma_minus)?;
    apply_params(&p, rho_b, params)
}

/// |T̃(q)|² at q = 2πρ_b/(λ f_b).
pub fn ideal_interference_g2(rho_b: f64, geometry: &ExperimentGeometry) -> Result<f64> {
    Profile::new(ModelKind::IdealInterference, geometry, 1.0, 1.0)?.eval(rho_b)
}

/// |T(-ρ_b)|².
pub fn ideal_imaging_g2(rho_b: f64, geometry: &ExperimentGeometry) -> Result<f64> {
    Profile::new(ModelKind::IdealImaging, geometry, 1.0, 1.0)?.eval(rho_b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRequest {
    pub geometry: ExperimentGeometry,
    pub params: CorrelationParams,
    pub kind: ModelKind,
    pub scan: Vec<f64>,
}

impl CurveRequest {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.params.validate()?;
        check_scan(&self.scan)
    }
}

pub(crate) fn check_scan(scan: &[f64]) -> Result<()> {
    if scan.is_empty() {
        return Err(Error::Data {
            index: 0,
            reason: "scan is empty".into(),
        });
    }
    for (i, x) in scan.iter().enumerate() {
        if !x.is_finite() {
            return Err(Error::Data {
                index: i,
                reason: format!("position {x} is not finite"),
            });
        }
        if i > 0 && *x <= scan[i - 1] {
            return Err(Error::Data {
                index: i,
                reason: format!("positions must be strictly increasing ({} then {x})", scan[i - 1]),
            });
        }
    }
    Ok(())
}

/// Evaluates the requested curve at every scan position, in order.
/// Points are computed in parallel; each value depends only on its own position.
pub fn evaluate_curve(request: &CurveRequest) -> Result<Vec<(f64, f64)>> {
    request.validate()?;
    let profile = Profile::new(
        request.kind,
        &request.geometry,
        request.params.sigma_plus,
        request.params.sigma_minus,
    )?;
    let values: Vec<Result<f64>> = request
        .scan
        .par_iter()
        .map(|&x| apply_params(&profile, x, &request.params))
        .collect();
    request
        .scan
        .iter()
        .zip(values)
        .enumerate()
        .map(|(index, (&x, v))| {
            v.map(|g| (x, g)).map_err(|e| Error::Evaluation {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// Divides by the largest value. An all-zero curve is returned unchanged.
pub fn normalize_peak(values: &[f64]) -> Vec<f64> {
    let peak = values.iter().copied().fold(0.0_f64, f64::max);
    if peak > 0.0 {
        values.iter().map(|v| v / peak).collect()
    } else {
        values.to_vec()
    }
}

/// max |a_i - b_i| after normalizing each curve by its own peak.
pub fn normalized_sup_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "curves must share a grid");
    normalize_peak(a)
        .iter()
        .zip(normalize_peak(b))
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Shape of the central fringes of the interference curve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FringeMetrics {
    pub first_min_position: f64,
    pub side_max_position: f64,
    /// (max - min)/(max + min) with max the central peak and min the first minimum.
    pub visibility: f64,
    /// Side maximum over central peak.
    pub side_contrast: f64,
}

/// Locates the first minimum and first side maximum of the unscaled
/// interference profile on (0, x_max] and refines both by golden-section search.
pub fn interference_fringes(
    geometry: &ExperimentGeometry,
    sigma_plus: f64,
    sigma_minus: f64,
    x_max: f64,
    samples: usize,
) -> Result<FringeMetrics> {
    let profile = Profile::new(ModelKind::Interference, geometry, sigma_plus, sigma_minus)?;
    let h = x_max / samples as f64;
    let ys: Vec<f64> = (0..=samples)
        .map(|i| profile.eval(i as f64 * h))
        .collect::<Result<_>>()?;
    let min_i = (1..samples)
        .find(|&i| ys[i] <= ys[i - 1] && ys[i] < ys[i + 1])
        .ok_or_else(|| Error::Range(format!("no fringe minimum on (0, {x_max}]")))?;
    let max_i = (min_i + 1..samples)
        .find(|&i| ys[i] >= ys[i - 1] && ys[i] > ys[i + 1])
        .ok_or_else(|| Error::Range(format!("no side maximum on (0, {x_max}]")))?;
    let eval = |x: f64| profile.eval(x).unwrap_or(f64::NAN);
    let x_min = golden(eval, (min_i - 1) as f64 * h, (min_i + 1) as f64 * h);
    let x_side = golden(|x| -eval(x), (max_i - 1) as f64 * h, (max_i + 1) as f64 * h);
    let peak = ys[0];
    let lo = eval(x_min).min(ys[min_i]);
    let side = eval(x_side).max(ys[max_i]);
    Ok(FringeMetrics {
        first_min_position: x_min,
        side_max_position: x_side,
        visibility: (peak - lo) / (peak + lo),
        side_contrast: side / peak,
    })
}

fn golden(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-15 * (a.abs() + b.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}
