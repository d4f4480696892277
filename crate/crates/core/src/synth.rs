//! Seeded synthetic scans.
//!
//! Singles are fixed at 10⁴ per detector and each point is accumulated for
//! 60 s. Coincidences are Poisson draws around the model curve scaled so
//! its largest expectation equals `peak_counts`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::config::RunConfig;
use crate::domain::CorrelationParams;
use crate::error::{Error, Result};
use crate::fitting::ScanData;
use crate::models::{evaluate_curve, CurveRequest};

pub const SYNTH_SINGLES: u64 = 10_000;
pub const SYNTH_DURATION_S: f64 = 60.0;

/// Expected coincidences per scan point, peaking at `peak_counts`.
pub fn expected_counts(config: &RunConfig, params: &CorrelationParams, peak_counts: u64) -> Result<Vec<f64>> {
    let curve = evaluate_curve(&CurveRequest {
        geometry: config.geometry,
        params: *params,
        kind: config.mode,
        scan: config.scan_positions(),
    })?;
    let peak = curve.iter().map(|(_, g)| *g).fold(0.0, f64::max);
    if peak <= 0.0 || peak.is_nan() {
        return Err(Error::Data {
            index: 0,
            reason: "model curve is zero over the whole scan".into(),
        });
    }
    Ok(curve.iter().map(|(_, g)| g / peak * peak_counts as f64).collect())
}

/// One Poisson draw per expectation, in order, from a generator seeded with `seed`.
pub fn draw_counts(expected: &[f64], seed: u64) -> Result<Vec<u64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    expected
        .iter()
        .enumerate()
        .map(|(i, &lambda)| {
            if lambda == 0.0 {
                return Ok(0);
            }
            let dist = Poisson::new(lambda).map_err(|e| Error::Data {
                index: i,
                reason: format!("expectation {lambda}: {e}"),
            })?;
            Ok(dist.sample(&mut rng) as u64)
        })
        .collect()
}

pub fn synthesize_scan(config: &RunConfig, params: &CorrelationParams, peak_counts: u64) -> Result<ScanData> {
    let positions = config.scan_positions();
    let expected = expected_counts(config, params, peak_counts)?;
    let n = positions.len();
    let scan = ScanData {
        positions,
        coincidences: draw_counts(&expected, config.seed)?,
        singles_a: vec![SYNTH_SINGLES; n],
        singles_b: vec![SYNTH_SINGLES; n],
        duration: vec![SYNTH_DURATION_S; n],
    };
    scan.validate()?;
    Ok(scan)
}
