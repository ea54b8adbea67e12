//! Frequency responses, response comparison, and one-step predictor
//! validation.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::era::IdentifiedModel;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{StateSpaceModel, TimeSeriesDataset};

/// Distance from an eigenvalue of `A` below which `zI - A` counts as singular.
pub const SINGULAR_TOL: f64 = 1e-12;
pub const DEFAULT_GRID_POINTS: usize = 200;
pub const MAX_AUTOCORR_LAG: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyResponse {
    frequencies: Vec<f64>,
    response: Vec<DMatrix<Complex64>>,
    sample_rate: f64,
}

impl FrequencyResponse {
    pub fn new(frequencies: Vec<f64>, response: Vec<DMatrix<Complex64>>, sample_rate: f64) -> Result<Self> {
        check_grid(&frequencies, sample_rate)?;
        if frequencies.len() != response.len() {
            return Err(Error::dims(
                "frequencies",
                "response",
                format!("{} frequencies, {} response matrices", frequencies.len(), response.len()),
            ));
        }
        if let Some(first) = response.first() {
            if response.iter().any(|r| r.shape() != first.shape()) {
                return Err(Error::dims("response", "response", "response matrices differ in shape"));
            }
        }
        Ok(Self {
            frequencies,
            response,
            sample_rate,
        })
    }

    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }
    pub fn response(&self) -> &[DMatrix<Complex64>] {
        &self.response
    }
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    pub fn len(&self) -> usize {
        self.frequencies.len()
    }
    pub fn is_empty(&self) -> bool {
        self.frequencies.is_empty()
    }
    /// `(outputs, inputs)`; `(0, 0)` for an empty grid.
    pub fn shape(&self) -> (usize, usize) {
        self.response.first().map_or((0, 0), |r| r.shape())
    }

    /// Magnitude in dB of channel `(output, input)` across the grid.
    pub fn magnitude_db(&self, output: usize, input: usize) -> Vec<f64> {
        self.response.iter().map(|r| mag_db(r[(output, input)])).collect()
    }

    /// Long-format CSV: one row per frequency and channel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_hz,output,input,re,im,mag_db,phase_deg\n");
        let (q, m) = self.shape();
        for (f, r) in self.frequencies.iter().zip(&self.response) {
            for i in 0..q {
                for j in 0..m {
                    let h = r[(i, j)];
                    let _ = writeln!(
                        out,
                        "{f:.16e},{i},{j},{:.16e},{:.16e},{:.16e},{:.16e}",
                        h.re,
                        h.im,
                        mag_db(h),
                        h.arg().to_degrees()
                    );
                }
            }
        }
        out
    }

    /// Parse the CSV written by [`FrequencyResponse::to_csv`]. Only the
    /// frequency, channel, and `re`/`im` columns are read back.
    pub fn from_csv(text: &str, source: &Path, sample_rate: f64) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| csv_error(source, &e))?.clone();
        let col = |name: &str| -> Result<usize> {
            header.iter().position(|h| h.trim() == name).ok_or_else(|| Error::Parse {
                path: source.to_path_buf(),
                line: 1,
                column: 0,
                message: format!("missing column `{name}`"),
            })
        };
        let (cf, co, ci, cre, cim) = (col("frequency_hz")?, col("output")?, col("input")?, col("re")?, col("im")?);
        let mut rows: Vec<(f64, usize, usize, Complex64)> = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(|e| csv_error(source, &e))?;
            let line = rec.position().map_or(0, |p| p.line());
            let field = |c: usize| -> Result<&str> {
                rec.get(c).ok_or_else(|| Error::Parse {
                    path: source.to_path_buf(),
                    line,
                    column: c + 1,
                    message: "missing field".into(),
                })
            };
            let num = |c: usize| -> Result<f64> {
                let s = field(c)?;
                s.trim().parse::<f64>().map_err(|_| Error::Parse {
                    path: source.to_path_buf(),
                    line,
                    column: c + 1,
                    message: format!("not a number: `{s}`"),
                })
            };
            let idx = |c: usize| -> Result<usize> {
                let s = field(c)?;
                s.trim().parse::<usize>().map_err(|_| Error::Parse {
                    path: source.to_path_buf(),
                    line,
                    column: c + 1,
                    message: format!("not a channel index: `{s}`"),
                })
            };
            rows.push((num(cf)?, idx(co)?, idx(ci)?, Complex64::new(num(cre)?, num(cim)?)));
        }
        let q = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let m = rows.iter().map(|r| r.2 + 1).max().unwrap_or(0);
        let per = q * m;
        if per == 0 || !rows.len().is_multiple_of(per) {
            return Err(bad_layout(source, format!("rows do not form complete {q}x{m} channel sets")));
        }
        let mut freqs = Vec::new();
        let mut resp = Vec::new();
        for chunk in rows.chunks(per) {
            let f = chunk[0].0;
            let mut h = DMatrix::from_element(q, m, Complex64::new(f64::NAN, f64::NAN));
            for &(fr, i, j, v) in chunk {
                if fr != f {
                    return Err(bad_layout(source, format!("channel rows for {f} Hz are not contiguous")));
                }
                h[(i, j)] = v;
            }
            if h.iter().any(|v| v.re.is_nan() && v.im.is_nan()) {
                return Err(bad_layout(source, format!("missing channel at {f} Hz")));
            }
            freqs.push(f);
            resp.push(h);
        }
        Self::new(freqs, resp, sample_rate)
    }
}

fn csv_error(source: &Path, e: &csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        path: source.to_path_buf(),
        line,
        column: 0,
        message: e.to_string(),
    }
}

fn bad_layout(source: &Path, message: String) -> Error {
    Error::Parse {
        path: source.to_path_buf(),
        line: 0,
        column: 0,
        message,
    }
}

fn mag_db(h: Complex64) -> f64 {
    20.0 * h.norm().log10()
}

fn check_grid(frequencies: &[f64], sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidArgument(format!("sample rate {sample_rate} must be positive")));
    }
    let nyquist = sample_rate / 2.0;
    for &f in frequencies {
        if !(f.is_finite() && (0.0..=nyquist).contains(&f)) {
            return Err(Error::FrequencyOutOfRange { hz: f, nyquist });
        }
    }
    Ok(())
}

/// `count` log-spaced points from `fs / 1e4` to `0.95 fs / 2`.
pub fn default_grid(sample_rate: f64) -> Vec<f64> {
    log_grid(sample_rate / 1e4, 0.95 * sample_rate / 2.0, DEFAULT_GRID_POINTS)
}

pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let (a, b) = (lo.log10(), hi.log10());
            (0..count)
                .map(|i| 10f64.powf(a + (b - a) * i as f64 / (count - 1) as f64))
                .collect()
        }
    }
}

pub fn linear_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect(),
    }
}

/// `C (zI - A)^-1 B + D` at `z = exp(j 2 pi f / fs)`.
pub fn frequency_response(model: &StateSpaceModel, frequencies: &[f64], sample_rate: f64) -> Result<FrequencyResponse> {
    check_grid(frequencies, sample_rate)?;
    let n = model.states();
    let to_c = |m: &DMatrix<f64>| m.map(|v| Complex64::new(v, 0.0));
    let (a, b, c, d) = (to_c(model.a()), to_c(model.b()), to_c(model.c()), to_c(model.d()));
    let eigs = linalg::eigenvalues(model.a());
    let mut response = Vec::with_capacity(frequencies.len());
    for &f in frequencies {
        let z = Complex64::from_polar(1.0, 2.0 * PI * f / sample_rate);
        if eigs.iter().any(|l| (z - l).norm() < SINGULAR_TOL) {
            return Err(Error::SingularFrequency { hz: f });
        }
        let h = if n == 0 {
            d.clone()
        } else {
            let resolvent = DMatrix::from_diagonal_element(n, n, z) - &a;
            let x = resolvent.lu().solve(&b).ok_or(Error::SingularFrequency { hz: f })?;
            &c * x + &d
        };
        response.push(h);
    }
    FrequencyResponse::new(frequencies.to_vec(), response, sample_rate)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonPoint {
    pub frequency_hz: f64,
    pub output: usize,
    pub input: usize,
    /// `20 log10(|a| / |b|)`.
    pub mag_err_db: f64,
    /// `arg(a) - arg(b)` wrapped to `(-180, 180]`.
    pub phase_err_deg: f64,
    pub finite: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    /// Largest absolute magnitude error over finite points.
    pub max_mag_err_db: f64,
    /// Mean absolute magnitude error over finite points.
    pub mean_mag_err_db: f64,
    pub max_phase_err_deg: f64,
    pub non_finite_points: usize,
    pub points: Vec<ComparisonPoint>,
}

impl ComparisonReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_hz,output,input,mag_err_db,phase_err_deg,finite\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{:.16e},{},{},{:.16e},{:.16e},{}",
                p.frequency_hz, p.output, p.input, p.mag_err_db, p.phase_err_deg, p.finite
            );
        }
        out
    }

    /// Aggregates restricted to frequencies inside `[lo, hi]`.
    pub fn max_mag_err_db_in(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .iter()
            .filter(|p| p.finite && p.frequency_hz >= lo && p.frequency_hz <= hi)
            .map(|p| p.mag_err_db.abs())
            .fold(0.0, f64::max)
    }
}

pub fn compare_frequency_responses(a: &FrequencyResponse, b: &FrequencyResponse) -> Result<ComparisonReport> {
    if a.frequencies != b.frequencies {
        return Err(Error::GridMismatch(format!(
            "frequency grids differ ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::GridMismatch(format!(
            "sample rates differ ({} vs {} Hz)",
            a.sample_rate, b.sample_rate
        )));
    }
    if a.shape() != b.shape() {
        return Err(Error::GridMismatch(format!("channel shapes differ ({:?} vs {:?})", a.shape(), b.shape())));
    }
    let (q, m) = a.shape();
    let mut points = Vec::with_capacity(a.len() * q * m);
    let (mut max_mag, mut sum_mag, mut max_phase, mut finite_count) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for ((f, ra), rb) in a.frequencies.iter().zip(&a.response).zip(&b.response) {
        for i in 0..q {
            for j in 0..m {
                let (ha, hb) = (ra[(i, j)], rb[(i, j)]);
                let mag = 20.0 * (ha.norm() / hb.norm()).log10();
                let phase = wrap_degrees((ha * hb.conj()).arg().to_degrees());
                let finite = mag.is_finite() && phase.is_finite() && hb.norm() > 0.0;
                if finite {
                    max_mag = max_mag.max(mag.abs());
                    sum_mag += mag.abs();
                    max_phase = max_phase.max(phase.abs());
                    finite_count += 1;
                }
                points.push(ComparisonPoint {
                    frequency_hz: *f,
                    output: i,
                    input: j,
                    mag_err_db: mag,
                    phase_err_deg: phase,
                    finite,
                });
            }
        }
    }
    Ok(ComparisonReport {
        max_mag_err_db: max_mag,
        mean_mag_err_db: if finite_count > 0 { sum_mag / finite_count as f64 } else { 0.0 },
        max_phase_err_deg: max_phase,
        non_finite_points: points.len() - finite_count,
        points,
    })
}

/// Wrap to `(-180, 180]`.
pub fn wrap_degrees(x: f64) -> f64 {
    let r = x.rem_euclid(360.0);
    if r > 180.0 {
        r - 360.0
    } else {
        r
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    /// Pooled over outputs and samples `k >= burn_in`.
    pub one_step_rmse: f64,
    /// `residual_autocorr[i][lag - 1]` for output `i`, lags `1..=20`.
    pub residual_autocorr: Vec<Vec<f64>>,
    pub observer_spectral_radius: f64,
    pub divergent: bool,
    pub burn_in: usize,
    pub samples: usize,
}

/// Run the observer predictor from a zero state and score `y - y^`.
pub fn validate_kalman(model: &IdentifiedModel, data: &TimeSeriesDataset, burn_in: usize) -> Result<PredictionReport> {
    let residuals = predictor_residuals(model, data)?;
    let l = data.len();
    if burn_in >= l {
        return Err(Error::InsufficientData { rows: 0, min_rows: 1 });
    }
    let window = residuals.columns(burn_in, l - burn_in);
    let count = window.len() as f64;
    let one_step_rmse = (window.iter().map(|e| e * e).sum::<f64>() / count).sqrt();
    let residual_autocorr = window
        .row_iter()
        .map(|row| autocorrelation(&row.iter().copied().collect::<Vec<_>>(), MAX_AUTOCORR_LAG))
        .collect();
    let radius = linalg::spectral_radius(&model.observer_matrix());
    let divergent = radius >= 1.0;
    if divergent {
        log::warn!("observer spectral radius {radius:.6} >= 1; predictor is divergent");
    }
    Ok(PredictionReport {
        one_step_rmse,
        residual_autocorr,
        observer_spectral_radius: radius,
        divergent,
        burn_in,
        samples: l - burn_in,
    })
}

/// `y(k) - y^(k)` for every sample, `q x l`.
pub fn predictor_residuals(model: &IdentifiedModel, data: &TimeSeriesDataset) -> Result<DMatrix<f64>> {
    let sys = &model.model;
    if data.inputs() != sys.inputs() || data.outputs() != sys.outputs() {
        return Err(Error::dims(
            "dataset",
            "model",
            format!(
                "dataset has {} inputs / {} outputs, model has {} / {}",
                data.inputs(),
                data.outputs(),
                sys.inputs(),
                sys.outputs()
            ),
        ));
    }
    let f = model.observer_matrix();
    let h = sys.b() - &model.gain * sys.d();
    let k = &model.gain;
    let mut x = DVector::zeros(sys.states());
    let mut res = DMatrix::zeros(sys.outputs(), data.len());
    for t in 0..data.len() {
        let u = data.u().column(t);
        let y = data.y().column(t);
        let yhat = sys.c() * &x + sys.d() * u;
        res.set_column(t, &(y - yhat));
        x = &f * x + &h * u + k * y;
    }
    Ok(res)
}

/// Normalized autocorrelation at lags `1..=max_lag` after mean removal.
/// Lags at or beyond the series length are zero.
pub fn autocorrelation(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return vec![0.0; max_lag];
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let r0: f64 = c.iter().map(|v| v * v).sum();
    (1..=max_lag)
        .map(|lag| {
            if lag >= n || r0 == 0.0 {
                0.0
            } else {
                c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / r0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(a: f64, b: f64, c: f64, d: f64) -> StateSpaceModel {
        StateSpaceModel::from_rows(1, 1, 1, &[a], &[b], &[c], &[d]).unwrap()
    }

    #[test]
    fn dc_gain_by_hand() {
        let fr = frequency_response(&scalar(0.5, 1.0, 1.0, 0.0), &[0.0], 100.0).unwrap();
        assert!((fr.response()[0][(0, 0)] - Complex64::new(2.0, 0.0)).norm() < 1e-15);
        assert!((fr.magnitude_db(0, 0)[0] - 6.020599913279624).abs() < 1e-12);
    }

    #[test]
    fn feedthrough_only() {
        let m = StateSpaceModel::new(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 1),
            DMatrix::zeros(1, 2),
            DMatrix::from_element(1, 1, -3.0),
        )
        .unwrap();
        let fr = frequency_response(&m, &linear_grid(0.0, 50.0, 7), 100.0).unwrap();
        for h in fr.response() {
            assert_eq!(h[(0, 0)], Complex64::new(-3.0, 0.0));
        }
    }

    #[test]
    fn singular_and_out_of_band() {
        let m = scalar(1.0, 1.0, 1.0, 0.0);
        assert!(matches!(frequency_response(&m, &[0.0], 10.0), Err(Error::SingularFrequency { hz }) if hz == 0.0));
        let m = scalar(0.5, 1.0, 1.0, 0.0);
        assert!(matches!(frequency_response(&m, &[6.0], 10.0), Err(Error::FrequencyOutOfRange { .. })));
    }

    #[test]
    fn self_and_doubled_comparison() {
        let m = scalar(0.7, 1.0, 0.3, 0.1);
        let grid = log_grid(0.1, 40.0, 30);
        let a = frequency_response(&m, &grid, 100.0).unwrap();
        let rep = compare_frequency_responses(&a, &a).unwrap();
        assert_eq!((rep.max_mag_err_db, rep.mean_mag_err_db, rep.max_phase_err_deg), (0.0, 0.0, 0.0));
        let doubled = FrequencyResponse::new(
            grid.clone(),
            a.response().iter().map(|h| h * Complex64::new(2.0, 0.0)).collect(),
            100.0,
        )
        .unwrap();
        let rep = compare_frequency_responses(&doubled, &a).unwrap();
        assert!((rep.max_mag_err_db - 6.020599913279624).abs() < 1e-12);
        assert!((rep.mean_mag_err_db - 6.020599913279624).abs() < 1e-12);
        assert_eq!(rep.max_phase_err_deg, 0.0);
    }

    #[test]
    fn zero_reference_point_is_flagged() {
        let a = FrequencyResponse::new(
            vec![1.0, 2.0],
            vec![DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)); 2],
            10.0,
        )
        .unwrap();
        let b = FrequencyResponse::new(
            vec![1.0, 2.0],
            vec![
                DMatrix::from_element(1, 1, Complex64::new(0.0, 0.0)),
                DMatrix::from_element(1, 1, Complex64::new(0.5, 0.0)),
            ],
            10.0,
        )
        .unwrap();
        let rep = compare_frequency_responses(&a, &b).unwrap();
        assert_eq!(rep.non_finite_points, 1);
        assert!(!rep.points[0].finite);
        assert!((rep.max_mag_err_db - 6.020599913279624).abs() < 1e-12);
    }

    #[test]
    fn grid_mismatch() {
        let m = scalar(0.5, 1.0, 1.0, 0.0);
        let a = frequency_response(&m, &[1.0, 2.0], 10.0).unwrap();
        let b = frequency_response(&m, &[1.0, 3.0], 10.0).unwrap();
        assert!(matches!(compare_frequency_responses(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn wrapping() {
        assert_eq!(wrap_degrees(180.0), 180.0);
        assert_eq!(wrap_degrees(-180.0), 180.0);
        assert_eq!(wrap_degrees(190.0), -170.0);
        assert_eq!(wrap_degrees(-190.0), 170.0);
    }

    #[test]
    fn csv_round_trip() {
        let m = StateSpaceModel::from_rows(1, 2, 2, &[0.4], &[1.0, -1.0], &[1.0, 2.0], &[0.0, 0.1, 0.2, 0.3]).unwrap();
        let fr = frequency_response(&m, &log_grid(1.0, 400.0, 9), 1000.0).unwrap();
        let back = FrequencyResponse::from_csv(&fr.to_csv(), Path::new("mem"), 1000.0).unwrap();
        assert_eq!(back, fr);
    }

    #[test]
    fn zero_gain_is_open_loop() {
        let sys = scalar(0.8, 1.0, 0.5, 0.0);
        let ident = IdentifiedModel::from_parts(sys.clone(), DMatrix::zeros(1, 1)).unwrap();
        let u = DMatrix::from_fn(1, 50, |_, k| ((k * 13) % 7) as f64 - 3.0);
        let y = DMatrix::from_fn(1, 50, |_, k| (k as f64 * 0.37).cos());
        let data = TimeSeriesDataset::new(u.clone(), y.clone(), 1.0).unwrap();
        let res = predictor_residuals(&ident, &data).unwrap();
        let mut x = 0.0;
        for k in 0..50 {
            let sim = 0.5 * x;
            assert_eq!(res[(0, k)], y[(0, k)] - sim);
            x = 0.8 * x + u[(0, k)];
        }
    }

    #[test]
    fn autocorrelation_of_alternating_sequence() {
        let x: Vec<f64> = (0..1000).map(|k| if k % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let r = autocorrelation(&x, 2);
        assert!((r[0] + 0.999).abs() < 1e-12);
        assert!((r[1] - 0.998).abs() < 1e-12);
    }
}
