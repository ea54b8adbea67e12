//! Dataset CSV, manifest, and model JSON files.
//!
//! Dataset CSV has header `k,u_0..u_{m-1},y_0..y_{q-1}` and one row per
//! sample. The sample rate lives in a sidecar manifest with the same stem and
//! a `.json` extension. Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::era::{IdentifiedModel, IdentifyDiagnostics};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{ColoringFilter, StateSpaceModel, TimeSeriesDataset};

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Format a float so that parsing it back gives the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn dataset_to_csv(data: &TimeSeriesDataset) -> String {
    let (m, q) = (data.inputs(), data.outputs());
    let mut out = String::from("k");
    for j in 0..m {
        let _ = write!(out, ",u_{j}");
    }
    for i in 0..q {
        let _ = write!(out, ",y_{i}");
    }
    out.push('\n');
    for k in 0..data.len() {
        let _ = write!(out, "{k}");
        for v in data.u().column(k).iter().chain(data.y().column(k).iter()) {
            out.push(',');
            out.push_str(&fmt_f64(*v));
        }
        out.push('\n');
    }
    out
}

fn parse_err(path: &Path, line: u64, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        column,
        message: message.into(),
    }
}

/// Parse dataset CSV text. `path` is only used in error messages.
pub fn parse_dataset_csv(text: &str, path: &Path, sample_rate: f64) -> Result<TimeSeriesDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| parse_err(path, 1, 0, e.to_string()))?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.first() != Some(&"k") {
        return Err(parse_err(path, 1, 1, "first column must be `k`"));
    }
    let mut m = 0;
    while names.get(1 + m) == Some(&format!("u_{m}").as_str()) {
        m += 1;
    }
    let mut q = 0;
    while names.get(1 + m + q) == Some(&format!("y_{q}").as_str()) {
        q += 1;
    }
    if 1 + m + q != names.len() {
        return Err(parse_err(
            path,
            1,
            2 + m + q,
            format!("unexpected column `{}`; expected k,u_0..,y_0..", names[1 + m + q]),
        ));
    }
    if m == 0 || q == 0 {
        return Err(parse_err(path, 1, 0, "header needs at least one u_ and one y_ column"));
    }

    let mut u_cols: Vec<f64> = Vec::new();
    let mut y_cols: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, 0, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != names.len() {
            return Err(parse_err(
                path,
                line,
                rec.len().min(names.len()) + 1,
                format!("expected {} fields, found {}", names.len(), rec.len()),
            ));
        }
        let k = rec[0].trim();
        if k.parse::<u64>().is_err() {
            return Err(parse_err(path, line, 1, format!("sample index `{k}` is not a non-negative integer")));
        }
        for (c, field) in rec.iter().enumerate().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| parse_err(path, line, c + 1, format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, c + 1, format!("`{field}` is not finite")));
            }
            if c <= m {
                u_cols.push(v);
            } else {
                y_cols.push(v);
            }
        }
        count += 1;
    }
    if count == 0 {
        return Err(parse_err(path, 2, 0, "no samples"));
    }
    TimeSeriesDataset::new(
        DMatrix::from_vec(m, count, u_cols),
        DMatrix::from_vec(q, count, y_cols),
        sample_rate,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub data: String,
    pub sample_rate: f64,
    pub inputs: usize,
    pub outputs: usize,
    pub samples: usize,
}

pub fn manifest_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Write `csv_path` and its manifest.
pub fn write_dataset(csv_path: &Path, data: &TimeSeriesDataset) -> Result<()> {
    write_text(csv_path, &dataset_to_csv(data))?;
    let manifest = DatasetManifest {
        data: csv_path
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sample_rate: data.sample_rate(),
        inputs: data.inputs(),
        outputs: data.outputs(),
        samples: data.len(),
    };
    write_json(&manifest_path(csv_path), &manifest)
}

/// Read a dataset. The sample rate comes from `sample_rate` if given,
/// otherwise from the manifest next to `csv_path`.
pub fn read_dataset(csv_path: &Path, sample_rate: Option<f64>) -> Result<TimeSeriesDataset> {
    let rate = match sample_rate {
        Some(r) => r,
        None => {
            let mpath = manifest_path(csv_path);
            if !mpath.exists() {
                return Err(Error::InvalidArgument(format!(
                    "no sample rate given and no manifest at {}",
                    mpath.display()
                )));
            }
            let manifest: DatasetManifest = read_json(&mpath)?;
            manifest.sample_rate
        }
    };
    parse_dataset_csv(&read_text(csv_path)?, csv_path, rate)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })?;
    text.push('\n');
    write_text(path, &text)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| Error::Json {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Model file layout. Matrices are arrays of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelJson {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    #[serde(rename = "K", default, skip_serializing_if = "Option::is_none")]
    pub k: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub singular_values: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<IdentifyDiagnostics>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coloring: Option<ColoringJson>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColoringJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "C")]
    pub c: Vec<Vec<f64>>,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub sigma: Vec<f64>,
}

impl ModelJson {
    pub fn from_model(model: &StateSpaceModel) -> Self {
        Self {
            n: model.states(),
            m: model.inputs(),
            q: model.outputs(),
            a: linalg::to_rows(model.a()),
            b: linalg::to_rows(model.b()),
            c: linalg::to_rows(model.c()),
            d: linalg::to_rows(model.d()),
            k: None,
            singular_values: None,
            sample_rate: None,
            diagnostics: None,
            coloring: None,
        }
    }

    pub fn from_identified(model: &IdentifiedModel) -> Self {
        Self {
            k: Some(linalg::to_rows(&model.gain)),
            singular_values: Some(model.singular_values.clone()),
            diagnostics: Some(model.diagnostics.clone()),
            ..Self::from_model(&model.model)
        }
    }

    pub fn with_coloring(mut self, f: &ColoringFilter) -> Self {
        self.coloring = Some(ColoringJson {
            a: linalg::to_rows(f.a()),
            c: linalg::to_rows(f.c()),
            d: linalg::to_rows(f.d()),
            sigma: f.sigma().to_vec(),
        });
        self
    }

    pub fn with_sample_rate(mut self, rate: f64) -> Self {
        self.sample_rate = Some(rate);
        self
    }

    pub fn model(&self) -> Result<StateSpaceModel> {
        let (n, m, q) = (self.n, self.m, self.q);
        let a = matrix("A", &self.a, n, n)?;
        let b = matrix("B", &self.b, n, m)?;
        let c = matrix("C", &self.c, q, n)?;
        let d = matrix("D", &self.d, q, m)?;
        StateSpaceModel::new(a, b, c, d)
    }

    /// Identified model with its gain; fails when the file carries no `K`.
    pub fn identified(&self) -> Result<IdentifiedModel> {
        let k = self
            .k
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("model file has no observer gain K".into()))?;
        let gain = matrix("K", k, self.n, self.q)?;
        let mut out = IdentifiedModel::from_parts(self.model()?, gain)?;
        if let Some(sv) = &self.singular_values {
            out.singular_values = sv.clone();
        }
        if let Some(diag) = &self.diagnostics {
            let radius = out.diagnostics.observer_spectral_radius;
            out.diagnostics = diag.clone();
            out.diagnostics.observer_spectral_radius = radius;
        }
        Ok(out)
    }

    pub fn coloring_filter(&self) -> Result<Option<ColoringFilter>> {
        let Some(cj) = &self.coloring else { return Ok(None) };
        let nc = cj.sigma.len();
        let a = matrix("coloring.A", &cj.a, nc, nc)?;
        let c = matrix("coloring.C", &cj.c, self.q, nc)?;
        let d = matrix("coloring.D", &cj.d, self.q, nc)?;
        ColoringFilter::new(a, c, d, cj.sigma.clone()).map(Some)
    }
}

fn matrix(name: &str, rows: &[Vec<f64>], r: usize, c: usize) -> Result<DMatrix<f64>> {
    let shape_err = || Error::InvalidArgument(format!("model JSON: {name} must be {r}x{c}"));
    if rows.len() != r {
        return Err(shape_err());
    }
    if r == 0 {
        return Ok(DMatrix::zeros(0, c));
    }
    linalg::from_rows(rows, c).ok_or_else(shape_err)
}

pub fn read_model(path: &Path) -> Result<ModelJson> {
    read_json(path)
}
