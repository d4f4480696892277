//! Real and complex error functions.
//!
//! Everything is built on the Faddeeva function `w(z) = exp(-z²) erfc(-iz)`,
//! evaluated with the Gautschi / Poppe–Wijers scheme: a truncated Taylor
//! series in a small ellipse around the origin and a Laplace continued
//! fraction (with Gautschi's convergence acceleration in the intermediate
//! region) everywhere else. The lower half plane is reached through
//! `w(z) = 2 exp(-z²) - w(-z)`.
//!
//! Measured against the committed 60-digit tables in `data/`, the relative
//! error stays below 1e-13 for |z| ≤ 100 away from the zeros of `w`.

use num_complex::Complex64;

use crate::error::{require_finite, Error, Result};

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

/// Largest argument accepted by `exp` without overflow.
const MAX_EXP_ARG: f64 = 708.503_061_461_606;
/// Beyond this, `sin`/`cos` of the phase carry no correct digits.
const MAX_PHASE: f64 = 3.537_118_876_014_22e15;
/// Guards the squares taken below against overflow.
const MAX_COMPONENT: f64 = 0.5e154;

/// erfc(z) = exp(log_scale) · value. Used where the two factors would
/// overflow or underflow separately but their product is representable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledComplex {
    pub log_scale: f64,
    pub value: Complex64,
}

impl ScaledComplex {
    pub fn to_complex(self) -> Complex64 {
        self.value * self.log_scale.exp()
    }
}

fn check_complex(z: Complex64) -> Result<()> {
    require_finite("Re z", z.re)?;
    require_finite("Im z", z.im)?;
    Ok(())
}

/// Faddeeva function `w(z) = exp(-z²) erfc(-iz)`.
///
/// Returns a range error when the result overflows, which can only happen
/// deep in the lower half plane where `|w| ~ 2 exp(Im(z)² - Re(z)²)`.
pub fn faddeeva(z: Complex64) -> Result<Complex64> {
    check_complex(z)?;
    let (xi, yi) = (z.re, z.im);
    let xabs = xi.abs();
    let yabs = yi.abs();
    if xabs > MAX_COMPONENT || yabs > MAX_COMPONENT {
        return Err(Error::Range(format!("|z| too large for w(z) at z = {z}")));
    }

    // Region boundaries are ellipses in units of (6.3, 4.4).
    let xs = xabs / 6.3;
    let ys = yabs / 4.4;
    let qrho0 = xs * xs + ys * ys;
    let xquad = xabs * xabs - yabs * yabs;
    let yquad = 2.0 * xabs * yabs;

    let use_series = qrho0 < 0.085_264;
    let (mut u, mut v);
    // exp(-z²) for z in the first quadrant; only set on the series path.
    let (mut u2, mut v2) = (0.0, 0.0);

    if use_series {
        let qrho = (1.0 - 0.85 * ys) * qrho0.sqrt();
        let n = (6.0 + 72.0 * qrho).round() as i32;
        let mut j = 2 * n + 1;
        let mut xsum = 1.0 / f64::from(j);
        let mut ysum = 0.0;
        for i in (1..=n).rev() {
            j -= 2;
            let fi = f64::from(i);
            let xaux = (xsum * xquad - ysum * yquad) / fi;
            ysum = (xsum * yquad + ysum * xquad) / fi;
            xsum = xaux + 1.0 / f64::from(j);
        }
        let u1 = -TWO_OVER_SQRT_PI * (xsum * yabs + ysum * xabs) + 1.0;
        let v1 = TWO_OVER_SQRT_PI * (xsum * xabs - ysum * yabs);
        let daux = (-xquad).exp();
        u2 = daux * yquad.cos();
        v2 = -daux * yquad.sin();
        u = u1 * u2 - v1 * v2;
        v = u1 * v2 + v1 * u2;
    } else {
        let (h, kapn, nu) = if qrho0 > 1.0 {
            let qrho = qrho0.sqrt();
            (0.0, 0, (3.0 + 1442.0 / (26.0 * qrho + 77.0)) as i32)
        } else {
            let qrho = (1.0 - ys) * (1.0 - qrho0).sqrt();
            (
                1.88 * qrho,
                (7.0 + 34.0 * qrho).round() as i32,
                (16.0 + 26.0 * qrho).round() as i32,
            )
        };
        let h2 = 2.0 * h;
        let mut qlambda = if h > 0.0 { h2.powi(kapn) } else { 0.0 };
        let (mut rx, mut ry, mut sx, mut sy) = (0.0_f64, 0.0_f64, 0.0_f64, 0.0_f64);
        for n in (0..=nu).rev() {
            let np1 = f64::from(n + 1);
            let tx = yabs + h + np1 * rx;
            let ty = xabs - np1 * ry;
            let c = 0.5 / (tx * tx + ty * ty);
            rx = c * tx;
            ry = c * ty;
            if h > 0.0 && n <= kapn {
                let tx = qlambda + sx;
                sx = rx * tx - ry * sy;
                sy = ry * tx + rx * sy;
                qlambda /= h2;
            }
        }
        if h == 0.0 {
            u = TWO_OVER_SQRT_PI * rx;
            v = TWO_OVER_SQRT_PI * ry;
        } else {
            u = TWO_OVER_SQRT_PI * sx;
            v = TWO_OVER_SQRT_PI * sy;
        }
        if yabs == 0.0 {
            u = (-xabs * xabs).exp();
        }
    }

    if yi < 0.0 {
        if use_series {
            u2 *= 2.0;
            v2 *= 2.0;
        } else {
            let xq = -xquad;
            if yquad > MAX_PHASE || xq > MAX_EXP_ARG {
                return Err(Error::Range(format!("w(z) overflows at z = {z}")));
            }
            let w1 = 2.0 * xq.exp();
            u2 = w1 * yquad.cos();
            v2 = -w1 * yquad.sin();
        }
        u = u2 - u;
        v = v2 - v;
        if xi > 0.0 {
            v = -v;
        }
    } else if xi < 0.0 {
        v = -v;
    }

    let w = Complex64::new(u, v);
    if !(w.re.is_finite() && w.im.is_finite()) {
        return Err(Error::Range(format!("w(z) not representable at z = {z}")));
    }
    Ok(w)
}

/// Complementary error function of a complex argument.
pub fn erfc_complex(z: Complex64) -> Result<Complex64> {
    check_complex(z)?;
    let value = if z.re >= 0.0 {
        erfc_complex_scaled(z)?.to_complex()
    } else {
        Complex64::new(2.0, 0.0) - erfc_complex_scaled(-z)?.to_complex()
    };
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::Range(format!("erfc(z) overflows at z = {z}")));
    }
    Ok(value)
}

/// erfc(z) for Re z ≥ 0 as `exp(log_scale) · value` with `|value| ≤ 1`.
///
/// From erfc(z) = exp(-z²) w(iz): `log_scale = Im(z)² - Re(z)²` and the
/// phase of exp(-z²) is folded into `value`.
pub fn erfc_complex_scaled(z: Complex64) -> Result<ScaledComplex> {
    check_complex(z)?;
    if z.re < 0.0 {
        return Err(Error::Domain {
            what: "Re z",
            value: z.re,
            rule: "scaled erfc requires Re z >= 0",
        });
    }
    let w = faddeeva(Complex64::new(-z.im, z.re))?;
    let log_scale = (z.im - z.re) * (z.im + z.re);
    let phase = Complex64::from_polar(1.0, -2.0 * z.re * z.im);
    Ok(ScaledComplex {
        log_scale,
        value: phase * w,
    })
}

fn erf_series(x: f64) -> f64 {
    // Maclaurin series; only used for |x| < 0.5 where it converges in < 20 terms.
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -x2 / n;
        let contribution = term / (2.0 * n + 1.0);
        sum += contribution;
        if contribution.abs() <= 1e-17 * sum.abs() || n > 60.0 {
            break;
        }
    }
    TWO_OVER_SQRT_PI * sum
}

/// erfc for x ≥ 0.5 through the scaled complementary function erfcx(x) = w(ix).
fn erfc_tail(x: f64) -> Result<f64> {
    if x > 30.0 {
        return Ok(0.0);
    }
    let erfcx = faddeeva(Complex64::new(0.0, x))?.re;
    Ok((-x * x).exp() * erfcx)
}

pub fn erf_real(x: f64) -> Result<f64> {
    require_finite("x", x)?;
    if x.abs() < 0.5 {
        return Ok(erf_series(x));
    }
    let tail = erfc_tail(x.abs())?;
    Ok((1.0 - tail).copysign(x))
}

pub fn erfc_real(x: f64) -> Result<f64> {
    require_finite("x", x)?;
    if x >= 0.5 {
        erfc_tail(x)
    } else if x > -0.5 {
        Ok(1.0 - erf_series(x))
    } else {
        Ok(2.0 - erfc_tail(-x)?)
    }
}
