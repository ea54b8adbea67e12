//! Synthetic seek-and-runout benchmark.
//!
//! The input is three back-to-back bang-bang seeks built from raised-cosine
//! acceleration pulses. The default plant and runout filter are synthetic;
//! amplitudes carry no physical unit.

use std::f64::consts::PI;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::{generate_colored_noise, simulate, ColoringFilter, NoiseSpec, StateSpaceModel, TimeSeriesDataset};

pub const DEFAULT_SAMPLE_RATE: f64 = 38520.0;
pub const DEFAULT_LENGTH: usize = 4000;
pub const DEFAULT_SNR_DB: f64 = 20.0;
pub const PAPER_IV_LENGTH: usize = 1600;
pub const PAPER_IV_HORIZON: usize = 800;
pub const PAPER_IV_ORDER: usize = 10;

/// Seek starts as fractions of the record length.
const SEEK_STARTS: [f64; 3] = [0.05, 0.35, 0.65];

#[derive(Debug, Clone, PartialEq)]
pub struct SeekInput {
    /// Samples per acceleration (and per deceleration) pulse.
    pub pulse_width: usize,
    pub amplitude: f64,
}

impl Default for SeekInput {
    fn default() -> Self {
        Self {
            pulse_width: 10,
            amplitude: 1.0,
        }
    }
}

impl SeekInput {
    /// `1 x length`. Seek `i` accelerates for one pulse and decelerates for
    /// the next; direction alternates between seeks.
    pub fn generate(&self, length: usize) -> Result<DMatrix<f64>> {
        let w = self.pulse_width;
        if w == 0 {
            return Err(Error::InvalidArgument("seek pulse width must be at least 1".into()));
        }
        if !self.amplitude.is_finite() {
            return Err(Error::InvalidArgument("seek amplitude must be finite".into()));
        }
        let mut u = DMatrix::zeros(1, length);
        for (i, frac) in SEEK_STARTS.iter().enumerate() {
            let start = (frac * length as f64).floor() as usize;
            let dir = if i % 2 == 0 { 1.0 } else { -1.0 };
            for k in 0..2 * w {
                let at = start + k;
                if at >= length {
                    break;
                }
                let phase = (k % w) as f64 + 1.0;
                let shape = 0.5 * (1.0 - (2.0 * PI * phase / (w as f64 + 1.0)).cos());
                let sign = if k < w { 1.0 } else { -1.0 };
                u[(0, at)] = dir * sign * self.amplitude * shape;
            }
        }
        Ok(u)
    }
}

fn resonance(r: f64, hz: f64, fs: f64) -> [f64; 4] {
    let theta = 2.0 * PI * hz / fs;
    [2.0 * r * theta.cos(), -r * r, 1.0, 0.0]
}

/// Fourth-order plant with lightly damped modes at 1.2 kHz (|z| = 0.98)
/// and 5.5 kHz (|z| = 0.99) for the given sample rate.
pub fn default_truth_plant(sample_rate: f64) -> Result<StateSpaceModel> {
    let m1 = resonance(0.98, 1200.0, sample_rate);
    let m2 = resonance(0.99, 5500.0, sample_rate);
    #[rustfmt::skip]
    let a = [
        m1[0], m1[1], 0.0, 0.0,
        m1[2], m1[3], 0.0, 0.0,
        0.0, 0.0, m2[0], m2[1],
        0.0, 0.0, m2[2], m2[3],
    ];
    StateSpaceModel::from_rows(4, 1, 1, &a, &[1.0, 0.0, 1.0, 0.0], &[0.02, 0.015, 0.03, -0.02], &[0.0])
}

/// Two-state low-frequency runout: real poles at 0.95 and 0.6 plus a
/// direct white term.
pub fn default_runout_filter() -> Result<ColoringFilter> {
    ColoringFilter::new(
        DMatrix::from_row_slice(2, 2, &[1.55, -0.57, 1.0, 0.0]),
        DMatrix::from_row_slice(1, 2, &[1.0, -0.3]),
        DMatrix::from_row_slice(1, 2, &[0.5, 0.0]),
        vec![1.0, 0.0],
    )
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkScenario {
    pub length: usize,
    pub sample_rate: f64,
    pub seed: u64,
    /// Output SNR in dB; `None` disables noise.
    pub snr_db: Option<f64>,
    pub input: SeekInput,
    pub truth: StateSpaceModel,
    /// Shape of the runout. Its drive is rescaled to meet `snr_db`.
    pub coloring: ColoringFilter,
}

impl BenchmarkScenario {
    pub fn new(seed: u64) -> Result<Self> {
        Ok(Self {
            length: DEFAULT_LENGTH,
            sample_rate: DEFAULT_SAMPLE_RATE,
            seed,
            snr_db: Some(DEFAULT_SNR_DB),
            input: SeekInput::default(),
            truth: default_truth_plant(DEFAULT_SAMPLE_RATE)?,
            coloring: default_runout_filter()?,
        })
    }

    /// Record length 1600 at 38520 Hz.
    pub fn paper_iv(seed: u64) -> Result<Self> {
        Ok(Self {
            length: PAPER_IV_LENGTH,
            ..Self::new(seed)?
        })
    }

    pub fn noise_free(mut self) -> Self {
        self.snr_db = None;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub dataset: TimeSeriesDataset,
    pub truth: StateSpaceModel,
    /// Runout filter after SNR scaling; `None` when noise-free.
    pub coloring: Option<ColoringFilter>,
    /// Achieved `20 log10(rms(clean) / rms(noise))`.
    pub snr_db: Option<f64>,
}

pub fn generate(scenario: &BenchmarkScenario) -> Result<Benchmark> {
    let truth = &scenario.truth;
    truth.require_stable("truth plant")?;
    if truth.inputs() != 1 {
        return Err(Error::InvalidArgument(format!(
            "seek input drives one channel, truth plant has {} inputs",
            truth.inputs()
        )));
    }
    if scenario.length < 2 {
        return Err(Error::InvalidArgument("benchmark length must be at least 2".into()));
    }
    let u = scenario.input.generate(scenario.length)?;
    let clean = simulate(truth, &u, &NoiseSpec::none(), None, scenario.sample_rate)?;
    let Some(snr) = scenario.snr_db else {
        return Ok(Benchmark {
            dataset: clean,
            truth: truth.clone(),
            coloring: None,
            snr_db: None,
        });
    };
    if !snr.is_finite() {
        return Err(Error::InvalidArgument(format!("SNR {snr} dB is not finite")));
    }
    let signal_rms = rms(clean.y());
    let base_rms = rms(&generate_colored_noise(&scenario.coloring, scenario.length, scenario.seed)?);
    if !(signal_rms > 0.0 && base_rms > 0.0) {
        return Err(Error::InvalidArgument("cannot scale noise: zero signal or zero runout".into()));
    }
    let factor = signal_rms / base_rms / 10f64.powf(snr / 20.0);
    let coloring = scenario.coloring.scaled(factor)?;
    let noisy = simulate(truth, &u, &NoiseSpec::colored(coloring.clone(), scenario.seed), None, scenario.sample_rate)?;
    let noise = noisy.y() - clean.y();
    let achieved = 20.0 * (signal_rms / rms(&noise)).log10();
    Ok(Benchmark {
        dataset: noisy,
        truth: truth.clone(),
        coloring: Some(coloring),
        snr_db: Some(achieved),
    })
}

fn rms(x: &DMatrix<f64>) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
