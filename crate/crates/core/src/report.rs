//! Fit reports (JSON) and plot data (CSV). Schemas are in `docs/formats.md`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::domain::{classify, joint_uncertainties_with_errors, UncertaintyPair, Verdict};
use crate::error::{Error, Result};
use crate::fitting::{derive_verdict, Estimator, FitResult, NormalizedPoint};
use crate::models::ModelKind;

pub const TOOL_NAME: &str = env!("CARGO_PKG_NAME");
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub tool_version: String,
    /// Hash of the config file bytes; `None` when running on built-in defaults.
    pub config_sha256: Option<String>,
    pub data_sha256: Option<String>,
    /// Geometry fields that were not in the config and used placeholder defaults.
    pub placeholders: Vec<String>,
}

impl Provenance {
    pub fn new(config: Option<&[u8]>, data: Option<&[u8]>, placeholders: Vec<String>) -> Self {
        Provenance {
            tool: TOOL_NAME.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config_sha256: config.map(sha256_hex),
            data_sha256: data.map(sha256_hex),
            placeholders,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub mode: ModelKind,
    pub estimator: Estimator,
    pub sigma_plus_per_mm: f64,
    pub sigma_plus_err: f64,
    pub sigma_minus_per_mm: f64,
    pub sigma_minus_err: f64,
    pub amplitude: f64,
    pub amplitude_err: f64,
    pub center_mm: f64,
    pub center_err: f64,
    pub background: f64,
    pub background_err: f64,
    /// Over (σ₊, σ₋, amplitude, center, background).
    pub covariance: [[f64; 5]; 5],
    pub dp_plus_hbar_per_mm: f64,
    pub dp_plus_err: f64,
    pub dx_minus_mm: f64,
    pub dx_minus_err: f64,
    pub err_correlation: f64,
    pub product_hbar2: f64,
    pub product_err_hbar2: f64,
    pub entangled: bool,
    pub steerable: bool,
    pub chi2: f64,
    pub dof: usize,
    pub chi2_per_dof: f64,
    pub converged: bool,
    pub iterations: usize,
    pub degenerate: Vec<String>,
    pub provenance: Provenance,
}

impl Report {
    /// Builds a report from a converged fit.
    pub fn from_fit(fit: &FitResult, provenance: Provenance) -> Result<Self> {
        let (pair, verdict) = derive_verdict(fit)?;
        let err = fit.std_errors();
        let p = &fit.params;
        let report = Report {
            mode: fit.kind,
            estimator: fit.estimator,
            sigma_plus_per_mm: p.sigma_plus,
            sigma_plus_err: err[0],
            sigma_minus_per_mm: p.sigma_minus,
            sigma_minus_err: err[1],
            amplitude: p.amplitude,
            amplitude_err: err[2],
            center_mm: p.center,
            center_err: err[3],
            background: p.background,
            background_err: err[4],
            covariance: fit.covariance,
            dp_plus_hbar_per_mm: pair.dp_plus,
            dp_plus_err: pair.dp_plus_err,
            dx_minus_mm: pair.dx_minus,
            dx_minus_err: pair.dx_minus_err,
            err_correlation: pair.err_correlation,
            product_hbar2: verdict.product,
            product_err_hbar2: verdict.product_err,
            entangled: verdict.entangled,
            steerable: verdict.steerable,
            chi2: fit.chi2,
            dof: fit.dof,
            chi2_per_dof: fit.chi2_per_dof(),
            converged: fit.converged,
            iterations: fit.iterations,
            degenerate: fit.degenerate.clone(),
            provenance,
        };
        report.check()?;
        Ok(report)
    }

    pub fn pair(&self) -> UncertaintyPair {
        UncertaintyPair {
            dp_plus: self.dp_plus_hbar_per_mm,
            dx_minus: self.dx_minus_mm,
            dp_plus_err: self.dp_plus_err,
            dx_minus_err: self.dx_minus_err,
            err_correlation: self.err_correlation,
        }
    }

    pub fn verdict(&self) -> Verdict {
        Verdict {
            product: self.product_hbar2,
            product_err: self.product_err_hbar2,
            entangled: self.entangled,
            steerable: self.steerable,
        }
    }

    /// Re-derives the pair and verdict from the sigma and covariance fields
    /// and rejects the report if anything disagrees.
    pub fn check(&self) -> Result<()> {
        self.verdict().check_consistent()?;
        let c = &self.covariance;
        let pair = joint_uncertainties_with_errors(
            self.sigma_plus_per_mm,
            self.sigma_minus_per_mm,
            c[0][0].max(0.0),
            c[1][1].max(0.0),
            c[0][1],
        )?;
        let verdict = classify(&pair)?;
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12 * a.abs().max(b.abs()) + 1e-300;
        let fields = [
            ("dp_plus_hbar_per_mm", self.dp_plus_hbar_per_mm, pair.dp_plus),
            ("dx_minus_mm", self.dx_minus_mm, pair.dx_minus),
            ("dp_plus_err", self.dp_plus_err, pair.dp_plus_err),
            ("dx_minus_err", self.dx_minus_err, pair.dx_minus_err),
            ("product_hbar2", self.product_hbar2, verdict.product),
            ("product_err_hbar2", self.product_err_hbar2, verdict.product_err),
        ];
        for (name, have, want) in fields {
            if !close(have, want) {
                return Err(Error::Report(format!(
                    "{name} = {have} but the sigma fields give {want}"
                )));
            }
        }
        if verdict.entangled != self.entangled || verdict.steerable != self.steerable {
            return Err(Error::Report("verdict flags disagree with the sigma fields".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        to_json(self)
    }
}

/// Certification of externally supplied widths, without a fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub sigma_plus_per_mm: f64,
    pub sigma_minus_per_mm: f64,
    pub dp_plus_hbar_per_mm: f64,
    pub dx_minus_mm: f64,
    pub product_hbar2: f64,
    pub entangled: bool,
    pub steerable: bool,
    pub provenance: Provenance,
}

impl CriteriaReport {
    pub fn new(sigma_plus: f64, sigma_minus: f64, provenance: Provenance) -> Result<Self> {
        let pair = joint_uncertainties_with_errors(sigma_plus, sigma_minus, 0.0, 0.0, 0.0)?;
        let v = classify(&pair)?;
        v.check_consistent()?;
        Ok(CriteriaReport {
            sigma_plus_per_mm: sigma_plus,
            sigma_minus_per_mm: sigma_minus,
            dp_plus_hbar_per_mm: pair.dp_plus,
            dx_minus_mm: pair.dx_minus,
            product_hbar2: v.product,
            entangled: v.entangled,
            steerable: v.steerable,
            provenance,
        })
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| Error::Report(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_report(report: &Report, path: &Path) -> Result<()> {
    report.check()?;
    write_text(path, &report.to_json()?)
}

pub fn read_report(path: &Path) -> Result<Report> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let report: Report = serde_json::from_str(&text).map_err(|e| Error::Report(format!("{}: {e}", path.display())))?;
    report.check()?;
    Ok(report)
}

pub const PLOT_HEADER: [&str; 4] = ["position_mm", "data_value", "data_sigma", "model_value"];

pub fn plot_csv(data: &[NormalizedPoint], model: &[f64]) -> Result<String> {
    if data.len() != model.len() {
        return Err(Error::Report(format!(
            "{} data points but {} model values",
            data.len(),
            model.len()
        )));
    }
    let rows = data.iter().zip(model).map(|(p, m)| [p.position, p.value, p.sigma, *m]);
    csv_text(&PLOT_HEADER, rows)
}

pub fn emit_plot_data(data: &[NormalizedPoint], model: &[f64], path: &Path) -> Result<()> {
    write_text(path, &plot_csv(data, model)?)
}

/// Model curve as `position_mm,g2`.
pub fn curve_csv(curve: &[(f64, f64)]) -> Result<String> {
    csv_text(&["position_mm", "g2"], curve.iter().map(|(x, g)| [*x, *g]))
}

fn csv_text<const N: usize>(header: &[&str; N], rows: impl Iterator<Item = [f64; N]>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|v| format!("{v:e}"))).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}
