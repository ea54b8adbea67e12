//! `okid` command-line front end.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::analysis::{self, ComparisonReport, FrequencyResponse};
use crate::benchmark::{self, BenchmarkScenario, PAPER_IV_HORIZON, PAPER_IV_ORDER};
use crate::era::{self, EraOptions, OrderSelection, DEFAULT_THRESHOLD};
use crate::error::{Error, Result};
use crate::io::{self, ModelJson};
use crate::okid::OkidConfig;

#[derive(Debug, Parser)]
#[command(name = "okid", version, about = "Observer/Kalman filter identification with colored noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Identify a state-space model and observer gain from a dataset.
    Identify(IdentifyArgs),
    /// Generate a synthetic seek dataset with colored runout.
    Benchmark(BenchmarkArgs),
    /// Evaluate a model's frequency response.
    Bode(BodeArgs),
    /// Compare two frequency-response CSV files.
    Compare(CompareArgs),
    /// Score a model's one-step observer predictor on a dataset.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct IdentifyArgs {
    /// Dataset CSV (`k,u_0..,y_0..`).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Observer horizon in samples.
    #[arg(long)]
    pub p: Option<usize>,
    /// Model order.
    #[arg(long, conflicts_with = "threshold")]
    pub order: Option<usize>,
    /// Keep singular values above this fraction of the largest.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Hankel block rows (default p/2).
    #[arg(long)]
    pub alpha: Option<usize>,
    /// Hankel block columns (default p/2).
    #[arg(long)]
    pub beta: Option<usize>,
    /// Overrides the manifest sample rate.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Subtract per-channel means before identification.
    #[arg(long)]
    pub mean_removal: bool,
    /// Preset: p = 800, order 10, 38520 Hz.
    #[arg(long)]
    pub paper_iv: bool,
    /// Truth model JSON; writes a comparison on the default grid.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub output_dir: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Record length in samples.
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Output signal-to-runout ratio.
    #[arg(long, default_value_t = benchmark::DEFAULT_SNR_DB)]
    pub snr_db: f64,
    /// Leave the output noise-free.
    #[arg(long)]
    pub zero_noise: bool,
    /// Samples per acceleration pulse.
    #[arg(long)]
    pub pulse_width: Option<usize>,
    /// Peak acceleration (arbitrary units).
    #[arg(long)]
    pub amplitude: Option<f64>,
    /// Preset: 1600 samples at 38520 Hz.
    #[arg(long)]
    pub paper_iv: bool,
    /// Truth plant JSON replacing the default plant.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BodeArgs {
    /// Model JSON.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Overrides the model's sample rate.
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Explicit comma-separated frequencies in Hz.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["points", "f_min", "f_max"])]
    pub frequencies: Option<Vec<f64>>,
    /// Number of log-spaced points.
    #[arg(long)]
    pub points: Option<usize>,
    #[arg(long)]
    pub f_min: Option<f64>,
    #[arg(long)]
    pub f_max: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Estimated response CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Reference response CSV.
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Sample rate of both grids; defaults to twice the highest frequency.
    #[arg(long)]
    pub sample_rate: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    /// Dataset CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Model JSON with observer gain.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub output_dir: PathBuf,
    /// Burn-in in samples; defaults to the model's horizon, else 0.
    #[arg(long)]
    pub p: Option<usize>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub mean_removal: bool,
}

/// Parse `args` (including the program name) and run. Returns the process
/// exit status.
pub fn run_from<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

pub fn main() -> ExitCode {
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("OKID_LOG", "warn")).try_init();
    run_from(std::env::args_os())
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Identify(a) => cmd_identify(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Bode(a) => cmd_bode(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn say(line: &str) {
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{line}");
}

pub fn cmd_identify(a: &IdentifyArgs) -> Result<()> {
    let p = a
        .p
        .or(a.paper_iv.then_some(PAPER_IV_HORIZON))
        .ok_or_else(|| Error::InvalidArgument("--p is required unless --paper-iv is given".into()))?;
    let selection = match (a.order, a.threshold) {
        (Some(n), _) => OrderSelection::Order(n),
        (None, Some(t)) => OrderSelection::Threshold(t),
        (None, None) if a.paper_iv => OrderSelection::Order(PAPER_IV_ORDER),
        (None, None) => OrderSelection::Threshold(DEFAULT_THRESHOLD),
    };
    let rate = a.sample_rate.or(a.paper_iv.then_some(benchmark::DEFAULT_SAMPLE_RATE));
    let mut data = io::read_dataset(&a.input, rate)?;
    if data.len() <= p {
        return Err(Error::Stage {
            stage: "regressors",
            source: Box::new(Error::Horizon { p, len: data.len() }),
        });
    }
    if a.mean_removal {
        data = data.mean_removed();
    }
    let opts = EraOptions {
        selection,
        alpha: a.alpha,
        beta: a.beta,
        ..EraOptions::default()
    };
    let ident = era::identify(&data, &OkidConfig::new(p), &opts)?;
    ensure_dir(&a.output_dir)?;
    let json = ModelJson::from_identified(&ident).with_sample_rate(data.sample_rate());
    io::write_json(&a.output_dir.join("model.json"), &json)?;
    let mut sv = String::from("index,singular_value\n");
    for (i, s) in ident.singular_values.iter().enumerate() {
        sv.push_str(&format!("{i},{}\n", io::fmt_f64(*s)));
    }
    io::write_text(&a.output_dir.join("singular_values.csv"), &sv)?;
    say(&format!(
        "identified order {} model, observer spectral radius {:.6}",
        ident.order(),
        ident.observer_spectral_radius()
    ));
    if let Some(truth_path) = &a.truth {
        let truth = io::read_model(truth_path)?.model()?;
        let grid = analysis::default_grid(data.sample_rate());
        let est = analysis::frequency_response(&ident.model, &grid, data.sample_rate())?;
        let reference = analysis::frequency_response(&truth, &grid, data.sample_rate())?;
        let report = analysis::compare_frequency_responses(&est, &reference)?;
        write_comparison(&a.output_dir, &report)?;
    }
    Ok(())
}

fn write_comparison(dir: &Path, report: &ComparisonReport) -> Result<()> {
    io::write_text(&dir.join("comparison.csv"), &report.to_csv())?;
    say(&format!(
        "max magnitude error {:.6} dB, mean {:.6} dB, max phase error {:.6} deg, {} non-finite points",
        report.max_mag_err_db, report.mean_mag_err_db, report.max_phase_err_deg, report.non_finite_points
    ));
    Ok(())
}

pub fn cmd_benchmark(a: &BenchmarkArgs) -> Result<()> {
    let mut s = if a.paper_iv {
        BenchmarkScenario::paper_iv(a.seed)?
    } else {
        BenchmarkScenario::new(a.seed)?
    };
    if let Some(l) = a.length {
        s.length = l;
    }
    if let Some(fs) = a.sample_rate {
        s.sample_rate = fs;
        s.truth = benchmark::default_truth_plant(fs)?;
    }
    if let Some(w) = a.pulse_width {
        s.input.pulse_width = w;
    }
    if let Some(amp) = a.amplitude {
        s.input.amplitude = amp;
    }
    if let Some(path) = &a.truth {
        let json = io::read_model(path)?;
        s.truth = json.model()?;
        s.truth.require_stable("truth plant")?;
        if let Some(c) = json.coloring_filter()? {
            s.coloring = c;
        }
    }
    s.snr_db = (!a.zero_noise).then_some(a.snr_db);
    let b = benchmark::generate(&s)?;
    ensure_dir(&a.output_dir)?;
    io::write_dataset(&a.output_dir.join("dataset.csv"), &b.dataset)?;
    let mut truth = ModelJson::from_model(&b.truth).with_sample_rate(s.sample_rate);
    if let Some(c) = &b.coloring {
        truth = truth.with_coloring(c);
    }
    io::write_json(&a.output_dir.join("truth.json"), &truth)?;
    say(&format!(
        "wrote {} samples at {} Hz (seed {})",
        b.dataset.len(),
        s.sample_rate,
        a.seed
    ));
    Ok(())
}

pub fn cmd_bode(a: &BodeArgs) -> Result<()> {
    let json = io::read_model(&a.input)?;
    let model = json.model()?;
    let fs = a
        .sample_rate
        .or(json.sample_rate)
        .ok_or_else(|| Error::InvalidArgument("no sample rate: pass --sample-rate or add sample_rate to the model".into()))?;
    let grid = match &a.frequencies {
        Some(f) => f.clone(),
        None => {
            let lo = a.f_min.unwrap_or(fs / 1e4);
            let hi = a.f_max.unwrap_or(0.95 * fs / 2.0);
            analysis::log_grid(lo, hi, a.points.unwrap_or(analysis::DEFAULT_GRID_POINTS))
        }
    };
    let fr = analysis::frequency_response(&model, &grid, fs)?;
    ensure_dir(&a.output_dir)?;
    io::write_text(&a.output_dir.join("bode.csv"), &fr.to_csv())?;
    say(&format!("wrote {} frequencies", fr.len()));
    Ok(())
}

fn read_response(path: &Path, rate: Option<f64>) -> Result<FrequencyResponse> {
    let text = io::read_text(path)?;
    let rate = match rate {
        Some(r) => r,
        None => {
            let probe = FrequencyResponse::from_csv(&text, path, f64::MAX)?;
            2.0 * probe.frequencies().iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE)
        }
    };
    FrequencyResponse::from_csv(&text, path, rate)
}

pub fn cmd_compare(a: &CompareArgs) -> Result<()> {
    let est = read_response(&a.input, a.sample_rate)?;
    let reference = read_response(&a.truth, a.sample_rate.or(Some(est.sample_rate())))?;
    let report = analysis::compare_frequency_responses(&est, &reference)?;
    ensure_dir(&a.output_dir)?;
    write_comparison(&a.output_dir, &report)
}

pub fn cmd_validate(a: &ValidateArgs) -> Result<()> {
    let json = io::read_model(&a.model)?;
    let ident = json.identified()?;
    let mut data = io::read_dataset(&a.input, a.sample_rate.or(json.sample_rate))?;
    if a.mean_removal {
        data = data.mean_removed();
    }
    let burn_in = a.p.or(ident.diagnostics.horizon).unwrap_or(0);
    let report = analysis::validate_kalman(&ident, &data, burn_in)?;
    ensure_dir(&a.output_dir)?;
    io::write_json(&a.output_dir.join("validation.json"), &report)?;
    let lag1: Vec<String> = report.residual_autocorr.iter().map(|r| format!("{:.6}", r[0])).collect();
    say(&format!(
        "one-step RMSE {:.6e}, residual lag-1 autocorrelation [{}], observer spectral radius {:.6}{}",
        report.one_step_rmse,
        lag1.join(", "),
        report.observer_spectral_radius,
        if report.divergent { " (divergent)" } else { "" }
    ));
    Ok(())
}
