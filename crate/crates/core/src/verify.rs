//! Closed form vs. quadrature oracle on a config's scan grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::domain::CorrelationParams;
use crate::error::{Error, Result};
use crate::models::{evaluate_curve, normalized_sup_distance, CurveRequest, ModelKind};
use crate::oracle::{oracle_imaging_g2, oracle_interference_g2};

pub const VERIFY_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub mode: ModelKind,
    pub sigma_plus_per_mm: f64,
    pub sigma_minus_per_mm: f64,
    pub points: usize,
    /// Peak-normalized sup-norm distance; absent when the oracle did not converge.
    pub sup_distance: Option<f64>,
    pub tolerance: f64,
    pub outcome: Outcome,
    pub detail: Option<String>,
}

/// Only σ₊ and σ₋ of `params` matter: both curves are compared by shape.
pub fn run_verify(config: &RunConfig, params: &CorrelationParams) -> Result<VerifyReport> {
    config.geometry.validate()?;
    config.quad.validate()?;
    params.validate()?;
    let oracle = match config.mode {
        ModelKind::Interference => oracle_interference_g2,
        ModelKind::Imaging => oracle_imaging_g2,
        other => {
            return Err(Error::Config {
                field: "mode".into(),
                reason: format!("verify needs interference or imaging, got {other}"),
            })
        }
    };
    let scan = config.scan_positions();
    let (sp, sm) = (params.sigma_plus, params.sigma_minus);
    let analytic: Vec<f64> = evaluate_curve(&CurveRequest {
        geometry: config.geometry,
        params: CorrelationParams::new(sp, sm),
        kind: config.mode,
        scan: scan.clone(),
    })?
    .into_iter()
    .map(|(_, g)| g)
    .collect();
    let numeric: Vec<Result<f64>> = scan
        .par_iter()
        .map(|&x| oracle(0.0, x, &config.geometry, sp, sm, &config.quad))
        .collect();

    let mut report = VerifyReport {
        mode: config.mode,
        sigma_plus_per_mm: sp,
        sigma_minus_per_mm: sm,
        points: scan.len(),
        sup_distance: None,
        tolerance: VERIFY_TOLERANCE,
        outcome: Outcome::Inconclusive,
        detail: None,
    };
    let mut values = Vec::with_capacity(scan.len());
    for (i, r) in numeric.into_iter().enumerate() {
        match r {
            Ok(v) => values.push(v),
            Err(e @ Error::Convergence { .. }) => {
                report.detail = Some(format!("oracle at position {} (index {i}): {e}", scan[i]));
                return Ok(report);
            }
            Err(e) => {
                return Err(Error::Evaluation {
                    index: i,
                    source: Box::new(e),
                })
            }
        }
    }
    let d = normalized_sup_distance(&analytic, &values);
    report.sup_distance = Some(d);
    report.outcome = if d <= VERIFY_TOLERANCE {
        Outcome::Pass
    } else {
        Outcome::Fail
    };
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    fn config(extra: &str) -> RunConfig {
        parse_config(&format!(
            "{extra}\n[geometry]\nf = 400.0\nf_a = 13.5\nf_b = 25.4\nwb = 1.23\n[scan]\nmin = -3.0\nmax = 3.0\nstep = 0.5\n"
        ))
        .unwrap()
    }

    #[test]
    fn imaging_passes() {
        let r = run_verify(&config("mode = \"imaging\""), &CorrelationParams::new(1.489, 51.63)).unwrap();
        assert_eq!(r.outcome, Outcome::Pass, "{r:?}");
        assert_eq!(r.points, 13);
    }

    #[test]
    fn starved_oracle_is_inconclusive() {
        let mut c = config("mode = \"imaging\"");
        c.quad.max_evals = 10;
        let r = run_verify(&c, &CorrelationParams::new(1.489, 51.63)).unwrap();
        assert_eq!(r.outcome, Outcome::Inconclusive);
        assert!(r.sup_distance.is_none());
    }

    #[test]
    fn ideal_mode_rejected() {
        let mut c = config("");
        c.mode = ModelKind::IdealImaging;
        assert!(run_verify(&c, &CorrelationParams::new(1.0, 10.0))
            .unwrap_err()
            .is_validation());
    }
}
