//! Run configuration from TOML. See `docs/formats.md` for the schema.

use std::path::Path;

use log::info;
use serde::Deserialize;

use crate::domain::{ExperimentGeometry, DEFAULT_LAMBDA_MM, DEFAULT_W0_MM};
use crate::error::{Error, Result};
use crate::models::ModelKind;
use crate::oracle::QuadratureSpec;

/// Most points a scan grid may have.
pub const MAX_SCAN_POINTS: f64 = 1e5;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub geometry: ExperimentGeometry,
    pub mode: ModelKind,
    pub scan_min: f64,
    pub scan_max: f64,
    pub scan_step: f64,
    pub seed: u64,
    pub quad: QuadratureSpec,
    /// Geometry fields that fell back to placeholder defaults.
    pub placeholders: Vec<String>,
    /// Every default applied while loading, as logged.
    pub notices: Vec<String>,
}

pub const DEFAULT_SEED: u64 = 42;

/// Default scan window per mode: (min, max, step) in mm.
pub fn default_scan(mode: ModelKind) -> (f64, f64, f64) {
    match mode {
        ModelKind::Interference | ModelKind::IdealInterference => (-0.03, 0.03, 0.001),
        ModelKind::Imaging | ModelKind::IdealImaging => (-3.0, 3.0, 0.1),
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<String>,
    seed: Option<u64>,
    geometry: Option<RawGeometry>,
    scan: Option<RawScan>,
    quadrature: Option<RawQuad>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGeometry {
    f: Option<f64>,
    f_a: Option<f64>,
    f_b: Option<f64>,
    lambda: Option<f64>,
    w0: Option<f64>,
    wb: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScan {
    min: Option<f64>,
    max: Option<f64>,
    step: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuad {
    truncation: Option<f64>,
    rel_tol: Option<f64>,
    max_evals: Option<u64>,
}

fn config_err(field: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn required(value: Option<f64>, field: &str) -> Result<f64> {
    value.ok_or_else(|| config_err(field, "required field is missing"))
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T: Copy + std::fmt::Display>(&mut self, value: Option<T>, field: &str, default: T) -> T {
        value.unwrap_or_else(|| {
            let msg = format!("{field} not set, using default {default}");
            info!("{msg}");
            self.0.push(msg);
            default
        })
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let field = e
            .span()
            .map(|s| text[s].trim().chars().take(40).collect::<String>())
            .unwrap_or_else(|| "<document>".into());
        config_err(&field, e.message().to_string())
    })?;
    let mut notes = Defaults(Vec::new());

    let g = raw
        .geometry
        .ok_or_else(|| config_err("geometry", "required table is missing"))?;
    let mut placeholders = Vec::new();
    if g.lambda.is_none() {
        placeholders.push("lambda".to_string());
    }
    if g.w0.is_none() {
        placeholders.push("w0".to_string());
    }
    let geometry = ExperimentGeometry {
        f: required(g.f, "geometry.f")?,
        f_a: required(g.f_a, "geometry.f_a")?,
        f_b: required(g.f_b, "geometry.f_b")?,
        wb: required(g.wb, "geometry.wb")?,
        lambda: notes.take(g.lambda, "geometry.lambda", DEFAULT_LAMBDA_MM),
        w0: notes.take(g.w0, "geometry.w0", DEFAULT_W0_MM),
    };
    geometry.validate().map_err(|e| match e {
        Error::Domain { what, rule, value } => config_err(&format!("geometry.{what}"), format!("{value}: {rule}")),
        other => other,
    })?;

    let mode_name = notes.take(raw.mode.as_deref(), "mode", "interference");
    let mode: ModelKind = mode_name.parse().map_err(|e: String| config_err("mode", e))?;

    let (dmin, dmax, dstep) = default_scan(mode);
    let scan = raw.scan.unwrap_or(RawScan {
        min: None,
        max: None,
        step: None,
    });
    let scan_min = notes.take(scan.min, "scan.min", dmin);
    let scan_max = notes.take(scan.max, "scan.max", dmax);
    let scan_step = notes.take(scan.step, "scan.step", dstep);
    check_scan_window(scan_min, scan_max, scan_step)?;

    let seed = notes.take(raw.seed, "seed", DEFAULT_SEED);

    let dq = QuadratureSpec::default();
    let q = raw.quadrature.unwrap_or(RawQuad {
        truncation: None,
        rel_tol: None,
        max_evals: None,
    });
    let quad = QuadratureSpec {
        truncation: notes.take(q.truncation, "quadrature.truncation", dq.truncation),
        rel_tol: notes.take(q.rel_tol, "quadrature.rel_tol", dq.rel_tol),
        max_evals: notes.take(q.max_evals, "quadrature.max_evals", dq.max_evals as u64) as usize,
    };
    quad.validate().map_err(|e| match e {
        Error::Domain { what, rule, value } => config_err(&format!("quadrature.{what}"), format!("{value}: {rule}")),
        other => other,
    })?;

    Ok(RunConfig {
        geometry,
        mode,
        scan_min,
        scan_max,
        scan_step,
        seed,
        quad,
        placeholders,
        notices: notes.0,
    })
}

/// Checks the scan window rules: min < max, step > 0, at most 1e5 steps.
pub fn check_scan_window(min: f64, max: f64, step: f64) -> Result<()> {
    if !(min.is_finite() && max.is_finite() && min < max) {
        return Err(config_err(
            "scan",
            format!("rule scan_min < scan_max violated ({min} >= {max})"),
        ));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(config_err("scan.step", format!("rule scan_step > 0 violated ({step})")));
    }
    if (max - min) / step > MAX_SCAN_POINTS {
        return Err(config_err(
            "scan.step",
            format!(
                "rule (scan_max - scan_min)/scan_step <= 1e5 violated ({})",
                (max - min) / step
            ),
        ));
    }
    Ok(())
}

impl RunConfig {
    /// Scan positions min, min + step, ... up to max (inclusive within 1e-9 steps).
    pub fn scan_positions(&self) -> Vec<f64> {
        scan_grid(self.scan_min, self.scan_max, self.scan_step)
    }

    pub fn with_scan(mut self, min: f64, max: f64, step: f64) -> Result<Self> {
        check_scan_window(min, max, step)?;
        self.scan_min = min;
        self.scan_max = max;
        self.scan_step = step;
        Ok(self)
    }
}

/// Positions are rounded to 12 significant digits of the window scale so
/// that e.g. -0.03 + 1 * 0.001 prints as -0.029.
pub fn scan_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize;
    let scale = min.abs().max(max.abs());
    let digits = 12 - scale.log10().ceil() as i32;
    let quantum = 10f64.powi(digits.abs());
    let round = |x: f64| {
        if digits >= 0 {
            (x * quantum).round() / quantum
        } else {
            (x / quantum).round() * quantum
        }
    };
    (0..=n)
        .map(|i| {
            let x = round(min + i as f64 * step);
            if x.abs() < 1e-9 * step {
                0.0
            } else {
                x
            }
        })
        .collect()
}

/// Parses `MIN:MAX:STEP`.
pub fn parse_scan_spec(spec: &str) -> Result<(f64, f64, f64)> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(config_err("--scan", format!("expected MIN:MAX:STEP, got `{spec}`")));
    }
    let num = |s: &str, what: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|e| config_err("--scan", format!("{what} `{s}`: {e}")))
    };
    let (min, max, step) = (num(parts[0], "MIN")?, num(parts[1], "MAX")?, num(parts[2], "STEP")?);
    check_scan_window(min, max, step)?;
    Ok((min, max, step))
}
