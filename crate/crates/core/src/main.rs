use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use ghost_epr::config::{default_scan, load_config, parse_config, parse_scan_spec, RunConfig};
use ghost_epr::domain::CorrelationParams;
use ghost_epr::error::{Error, Result};
use ghost_epr::fitting::{fit_scan, initial_guess, normalize_scan, Bounds, Estimator, FitOptions};
use ghost_epr::models::{evaluate_curve, CurveRequest, ModelKind};
use ghost_epr::report::{curve_csv, emit_plot_data, to_json, write_text, CriteriaReport, Provenance, Report};
use ghost_epr::scan_io::{parse_scan, scan_to_csv};
use ghost_epr::synth::synthesize_scan;
use ghost_epr::verify::{run_verify, Outcome};

const EXIT_FAIL: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_UNCONVERGED: u8 = 3;
const EXIT_INCONCLUSIVE: u8 = 4;

/// Used when no --config is given.
const BUILTIN_CONFIG: &str = "[geometry]\nf = 400.0\nf_a = 13.5\nf_b = 25.4\nwb = 1.23\n";

#[derive(Parser)]
#[command(
    name = "ghost-epr",
    version,
    about = "Ghost interference / imaging fits and EPR certification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a model curve on the scan grid.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sigmas: Sigmas,
        /// Evaluate the ideal (perfect correlation) limit instead.
        #[arg(long)]
        ideal: bool,
    },
    /// Generate a Poisson-noised scan CSV.
    Synth {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sigmas: Sigmas,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = 400)]
        peak_counts: u64,
    },
    /// Fit a scan and write the report.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Initial σ₊ (1/mm); otherwise chosen by grid search.
        #[arg(long)]
        sigma_plus: Option<f64>,
        /// Initial σ₋ (1/mm).
        #[arg(long)]
        sigma_minus: Option<f64>,
        /// Also write `position_mm,data_value,data_sigma,model_value` here.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "poisson")]
        estimator: EstimatorArg,
        /// Iteration cap per minimizer pass.
        #[arg(long, default_value_t = FitOptions::default().max_iterations)]
        max_iterations: usize,
    },
    /// Classify given correlation widths.
    Criteria {
        #[command(flatten)]
        sigmas: Sigmas,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare the closed form against the quadrature oracle.
    Verify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        sigmas: Sigmas,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    /// MIN:MAX:STEP in mm.
    #[arg(long, allow_hyphen_values = true)]
    scan: Option<String>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct Sigmas {
    #[arg(long)]
    sigma_plus: f64,
    #[arg(long)]
    sigma_minus: f64,
}

impl Sigmas {
    fn params(&self) -> CorrelationParams {
        CorrelationParams::new(self.sigma_plus, self.sigma_minus)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    /// Poisson deviance of the raw coincidences.
    Poisson,
    /// chi² with √C errors.
    LeastSquares,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Interference,
    Imaging,
}

impl From<Mode> for ModelKind {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Interference => ModelKind::Interference,
            Mode::Imaging => ModelKind::Imaging,
        }
    }
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loaded config plus the raw bytes it came from, if any.
fn resolve(common: &Common) -> Result<(RunConfig, Option<Vec<u8>>)> {
    let (mut config, bytes) = match &common.config {
        Some(path) => (load_config(path)?, Some(read_bytes(path)?)),
        None => {
            info!("no --config given, using the built-in geometry");
            (parse_config(BUILTIN_CONFIG)?, None)
        }
    };
    if let Some(mode) = common.mode {
        let kind = ModelKind::from(mode);
        if kind != config.mode {
            config.mode = kind;
            // A window taken from defaults follows the mode.
            if config.notices.iter().any(|n| n.starts_with("scan.")) {
                let (a, b, s) = default_scan(kind);
                config = config.with_scan(a, b, s)?;
            }
        }
    }
    if let Some(spec) = &common.scan {
        let (a, b, s) = parse_scan_spec(spec)?;
        config = config.with_scan(a, b, s)?;
    }
    for p in &config.placeholders {
        warn!("geometry.{p} not set; using placeholder default");
    }
    Ok((config, bytes))
}

fn emit(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => write_text(path, text),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| Error::Io {
            path: PathBuf::from("<stdout>"),
            source: e,
        }),
    }
}

fn run(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate { common, sigmas, ideal } => {
            let (config, _) = resolve(&common)?;
            let kind = match (config.mode, ideal) {
                (ModelKind::Interference, true) => ModelKind::IdealInterference,
                (ModelKind::Imaging, true) => ModelKind::IdealImaging,
                (k, _) => k,
            };
            let curve = evaluate_curve(&CurveRequest {
                geometry: config.geometry,
                params: sigmas.params(),
                kind,
                scan: config.scan_positions(),
            })?;
            emit(common.out.as_deref(), &curve_csv(&curve)?)?;
        }
        Command::Synth {
            common,
            sigmas,
            seed,
            peak_counts,
        } => {
            let (mut config, _) = resolve(&common)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let scan = synthesize_scan(&config, &sigmas.params(), peak_counts)?;
            emit(common.out.as_deref(), &scan_to_csv(&scan)?)?;
        }
        Command::Fit {
            common,
            data,
            sigma_plus,
            sigma_minus,
            plot,
            estimator,
            max_iterations,
        } => {
            let (config, config_bytes) = resolve(&common)?;
            let data_bytes = read_bytes(&data)?;
            let text = String::from_utf8(data_bytes.clone()).map_err(|e| Error::Parse {
                line: 0,
                reason: format!("{}: not UTF-8: {e}", data.display()),
            })?;
            let scan = parse_scan(&text)?;
            let points = normalize_scan(&scan)?;
            let mut init = initial_guess(&points, config.mode, &config.geometry)?;
            if let Some(sp) = sigma_plus {
                init.sigma_plus = sp;
            }
            if let Some(sm) = sigma_minus {
                init.sigma_minus = sm;
            }
            info!("initial guess {init:?}");
            let estimator = match estimator {
                EstimatorArg::Poisson => Estimator::Poisson,
                EstimatorArg::LeastSquares => Estimator::LeastSquares,
            };
            let fit = fit_scan(
                &scan,
                config.mode,
                &config.geometry,
                Some(&init),
                &Bounds::default(),
                &FitOptions {
                    max_iterations,
                    ..FitOptions::default()
                },
                estimator,
            )?;
            if !fit.converged {
                eprintln!(
                    "fit did not converge after {} iterations (chi2 = {:e}, params {:?})",
                    fit.iterations, fit.chi2, fit.params
                );
                return Ok(EXIT_UNCONVERGED);
            }
            if !fit.degenerate.is_empty() {
                warn!("poorly constrained directions: {}", fit.degenerate.join(", "));
            }
            if let Some(path) = plot {
                let model: Vec<f64> = evaluate_curve(&CurveRequest {
                    geometry: config.geometry,
                    params: fit.params,
                    kind: config.mode,
                    scan: scan.positions.clone(),
                })?
                .into_iter()
                .map(|(_, g)| g)
                .collect();
                emit_plot_data(&points, &model, &path)?;
            }
            let provenance = Provenance::new(config_bytes.as_deref(), Some(&data_bytes), config.placeholders.clone());
            let report = Report::from_fit(&fit, provenance)?;
            emit(common.out.as_deref(), &report.to_json()?)?;
        }
        Command::Criteria { sigmas, out } => {
            let report = CriteriaReport::new(
                sigmas.sigma_plus,
                sigmas.sigma_minus,
                Provenance::new(None, None, vec![]),
            )?;
            emit(out.as_deref(), &to_json(&report)?)?;
        }
        Command::Verify { common, sigmas } => {
            let (config, _) = resolve(&common)?;
            let report = run_verify(&config, &sigmas.params())?;
            emit(common.out.as_deref(), &to_json(&report)?)?;
            return Ok(match report.outcome {
                Outcome::Pass => 0,
                Outcome::Fail => EXIT_FAIL,
                Outcome::Inconclusive => EXIT_INCONCLUSIVE,
            });
        }
    }
    Ok(0)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Unconverged(_) => EXIT_UNCONVERGED,
        Error::Convergence { .. } => EXIT_INCONCLUSIVE,
        Error::Evaluation { source, .. } => exit_code(source),
        e if e.is_validation() => EXIT_VALIDATION,
        _ => EXIT_FAIL,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EPR_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
