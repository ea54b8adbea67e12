//! Observer Markov parameter estimation.
//!
//! The observer predictor with gain `K` is
//!
//! ```text
//! x^(k+1) = F x^(k) + L [u(k); y(k)],   F = A - K C,  L = [B - K D,  K]
//! y^(k)   = C x^(k) + D u(k)
//! ```
//!
//! Unrolling `p` steps and dropping `F^p` gives `y(k) = Phi nu(k) + e(k)` with
//! `Phi = [D, C L, C F L, ..., C F^(p-1) L]` and
//! `nu(k) = [u(k); u(k-1); y(k-1); ...; u(k-p); y(k-p)]`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{StateSpaceModel, TimeSeriesDataset};

pub const DEFAULT_SOLVER_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OkidConfig {
    /// Observer horizon `p` in samples.
    pub horizon: usize,
    /// Minimum number of usable equations `l - p`.
    pub min_rows: usize,
    /// Relative singular-value cutoff for the pseudo-inverse.
    pub solver_tolerance: f64,
}

impl OkidConfig {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            min_rows: 1,
            solver_tolerance: DEFAULT_SOLVER_TOLERANCE,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidArgument("horizon p must be at least 1".into()));
        }
        if self.min_rows == 0 {
            return Err(Error::InvalidArgument("min_rows must be at least 1".into()));
        }
        if !(self.solver_tolerance.is_finite() && self.solver_tolerance > 0.0) {
            return Err(Error::InvalidArgument("solver tolerance must be positive".into()));
        }
        Ok(())
    }
}

/// Stacked least-squares problem `Y = Phi V + E`.
#[derive(Debug, Clone, PartialEq)]
pub struct Regressors {
    /// `q x (l - p)`; column `t` is `y(p + t)`.
    pub y: DMatrix<f64>,
    /// `(m + p (m + q)) x (l - p)`; column `t` is `nu(p + t)`.
    pub v: DMatrix<f64>,
}

pub fn build_regressors(data: &TimeSeriesDataset, cfg: &OkidConfig) -> Result<Regressors> {
    cfg.validate()?;
    let l = data.len();
    let p = cfg.horizon;
    if l <= p {
        return Err(Error::Horizon { p, len: l });
    }
    let rows = l - p;
    if rows < cfg.min_rows {
        return Err(Error::InsufficientData { rows, min_rows: cfg.min_rows });
    }
    let m = data.inputs();
    let q = data.outputs();
    let u = data.u();
    let y = data.y();
    let width = m + q;
    let mut v = DMatrix::zeros(m + p * width, rows);
    for t in 0..rows {
        let k = p + t;
        let mut col = v.column_mut(t);
        col.rows_mut(0, m).copy_from(&u.column(k));
        for lag in 1..=p {
            let at = m + (lag - 1) * width;
            col.rows_mut(at, m).copy_from(&u.column(k - lag));
            col.rows_mut(at + m, q).copy_from(&y.column(k - lag));
        }
    }
    Ok(Regressors {
        y: y.columns(p, rows).into_owned(),
        v,
    })
}

/// How the stacked least-squares problem was solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveMethod {
    /// `V` has full row rank: the unique least-squares solution `Y V^+`.
    FullRank,
    /// More unknowns than equations: the minimum-norm solution `Y V^+`.
    MinimumNorm,
    /// `V` is row-rank deficient with at least as many equations as
    /// unknowns. Regressor rows that are numerically dependent on newer-lag
    /// rows get zero weight and the rest are solved by `Y V_S^+`.
    LagOrdered,
    /// `V` is identically zero.
    Degenerate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovDiagnostics {
    pub method: SolveMethod,
    /// Numerical rank of `V` used by the solve.
    pub rank: usize,
    pub unknowns: usize,
    pub equations: usize,
    /// Frobenius norm of `Y - Phi V`.
    pub residual_norm: f64,
    pub warnings: Vec<String>,
}

/// Estimated `Phi = [D, C L, C F L, ..., C F^(p-1) L]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovParameterSet {
    d: DMatrix<f64>,
    blocks: Vec<DMatrix<f64>>,
    inputs: usize,
    outputs: usize,
    pub diagnostics: Option<MarkovDiagnostics>,
}

impl MarkovParameterSet {
    /// `d` is `q x m`; every block must be `q x (m + q)`.
    pub fn new(d: DMatrix<f64>, blocks: Vec<DMatrix<f64>>) -> Result<Self> {
        let (q, m) = d.shape();
        if q == 0 || m == 0 {
            return Err(Error::InvalidArgument("D block must be non-empty".into()));
        }
        if blocks.is_empty() {
            return Err(Error::InvalidArgument("at least one observer block required".into()));
        }
        if let Some((i, b)) = blocks.iter().enumerate().find(|(_, b)| b.shape() != (q, m + q)) {
            return Err(Error::dims(
                "observer block",
                "D",
                format!("block {i} is {}x{}, expected {q}x{}", b.nrows(), b.ncols(), m + q),
            ));
        }
        Ok(Self {
            d,
            blocks,
            inputs: m,
            outputs: q,
            diagnostics: None,
        })
    }

    /// Split a full `q x (m + p (m + q))` row into `D` and `p` blocks.
    pub fn from_phi(phi: &DMatrix<f64>, inputs: usize) -> Result<Self> {
        let q = phi.nrows();
        let width = inputs + q;
        if phi.ncols() < inputs + width || !(phi.ncols() - inputs).is_multiple_of(width) {
            return Err(Error::dims(
                "Phi",
                "m, q",
                format!("{} columns do not split as m + p (m + q) with m = {inputs}, q = {q}", phi.ncols()),
            ));
        }
        let p = (phi.ncols() - inputs) / width;
        let d = phi.columns(0, inputs).into_owned();
        let blocks = (0..p)
            .map(|i| phi.columns(inputs + i * width, width).into_owned())
            .collect();
        Self::new(d, blocks)
    }

    pub fn horizon(&self) -> usize {
        self.blocks.len()
    }
    pub fn inputs(&self) -> usize {
        self.inputs
    }
    pub fn outputs(&self) -> usize {
        self.outputs
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn phi(&self) -> DMatrix<f64> {
        let mut parts: Vec<&DMatrix<f64>> = Vec::with_capacity(self.blocks.len() + 1);
        parts.push(&self.d);
        parts.extend(self.blocks.iter());
        linalg::hstack(&parts)
    }

    /// `Phi V`: predicted outputs for stacked regressors.
    pub fn predict(&self, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let phi = self.phi();
        if v.nrows() != phi.ncols() {
            return Err(Error::dims("V", "Phi", format!("V has {} rows, Phi has {} columns", v.nrows(), phi.ncols())));
        }
        Ok(phi * v)
    }

    pub fn to_json(&self) -> MarkovJson {
        MarkovJson {
            p: self.horizon(),
            m: self.inputs,
            q: self.outputs,
            d: linalg::to_rows(&self.d),
            blocks: self.blocks.iter().map(linalg::to_rows).collect(),
        }
    }

    pub fn from_json(json: &MarkovJson) -> Result<Self> {
        let bad = |what: &str| Error::InvalidArgument(format!("Markov JSON: {what}"));
        let d = linalg::from_rows(&json.d, json.m).ok_or_else(|| bad("ragged D"))?;
        if d.shape() != (json.q, json.m) {
            return Err(bad("D shape disagrees with m, q"));
        }
        if json.blocks.len() != json.p {
            return Err(bad("block count disagrees with p"));
        }
        let blocks = json
            .blocks
            .iter()
            .map(|b| linalg::from_rows(b, json.m + json.q).ok_or_else(|| bad("ragged block")))
            .collect::<Result<Vec<_>>>()?;
        Self::new(d, blocks)
    }
}

/// Serialized layout: `{p, m, q, D, blocks}` with every matrix as an array
/// of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkovJson {
    pub p: usize,
    pub m: usize,
    pub q: usize,
    #[serde(rename = "D")]
    pub d: Vec<Vec<f64>>,
    pub blocks: Vec<Vec<Vec<f64>>>,
}

/// Solve `Y = Phi V` for `Phi` and split it into observer blocks.
pub fn estimate_markov_parameters(y: &DMatrix<f64>, v: &DMatrix<f64>, cfg: &OkidConfig) -> Result<MarkovParameterSet> {
    cfg.validate()?;
    if y.ncols() != v.ncols() {
        return Err(Error::dims("Y", "V", format!("Y has {} columns, V has {}", y.ncols(), v.ncols())));
    }
    let q = y.nrows();
    let p = cfg.horizon;
    let unknowns = v.nrows();
    let equations = v.ncols();
    // unknowns = m + p (m + q)
    let m = match unknowns.checked_sub(p * q) {
        Some(rest) if rest % (p + 1) == 0 && rest > 0 => rest / (p + 1),
        _ => {
            return Err(Error::dims(
                "V",
                "horizon",
                format!("{unknowns} regressor rows do not match p = {p} with q = {q}"),
            ))
        }
    };

    let mut warnings = Vec::new();
    let tol = cfg.solver_tolerance;
    let (phi, method, rank) = if v.iter().all(|x| *x == 0.0) {
        warnings.push("regressor matrix is identically zero; Markov parameters set to zero".to_string());
        (DMatrix::zeros(q, unknowns), SolveMethod::Degenerate, 0)
    } else if unknowns > equations {
        warnings.push(format!(
            "underdetermined: {unknowns} unknowns from {equations} equations, using the minimum-norm solution; \
             a well-posed fit wants l >= {} samples",
            4 * p * (m + q)
        ));
        let (pinv, rank) = linalg::pseudo_inverse(v, tol);
        (y * pinv, SolveMethod::MinimumNorm, rank)
    } else {
        let r = v.transpose().qr().r();
        let sv = linalg::singular_values(&r);
        let smax = sv.first().copied().unwrap_or(0.0);
        let smin = sv.last().copied().unwrap_or(0.0);
        if smin > tol * smax {
            let (pinv, rank) = linalg::pseudo_inverse(v, tol);
            (y * pinv, SolveMethod::FullRank, rank)
        } else {
            let rank = sv.iter().take_while(|s| **s > tol * smax).count();
            // middle of the gap, on a log scale, between kept and discarded
            let next = sv.get(rank).copied().unwrap_or(0.0).max(f64::EPSILON * smax);
            let cutoff = (sv[rank - 1] * next).sqrt();
            let keep = lag_ordered_rows(&r, cutoff, m, q);
            let dropped = unknowns - keep.len();
            warnings.push(format!(
                "regressor matrix is rank deficient; {dropped} of {unknowns} rows dependent on newer lags were zeroed"
            ));
            let v_kept = v.select_rows(keep.iter());
            let (pinv, rank) = linalg::pseudo_inverse(&v_kept, tol);
            let phi_kept = y * pinv;
            let mut phi = DMatrix::zeros(q, unknowns);
            for (src, &dst) in keep.iter().enumerate() {
                phi.set_column(dst, &phi_kept.column(src));
            }
            (phi, SolveMethod::LagOrdered, rank)
        }
    };
    if rank < unknowns.min(equations) && method != SolveMethod::LagOrdered && method != SolveMethod::Degenerate {
        warnings.push(format!("regressor matrix has numerical rank {rank} < {}", unknowns.min(equations)));
    }
    for w in &warnings {
        log::warn!("{w}");
    }

    let residual_norm = (y - &phi * v).norm();
    let mut set = MarkovParameterSet::from_phi(&phi, m)?;
    set.diagnostics = Some(MarkovDiagnostics {
        method,
        rank,
        unknowns,
        equations,
        residual_norm,
        warnings,
    });
    Ok(set)
}

/// Newest-first row selection. `r` is the R factor of `V^T`, so the columns
/// of `r` have the geometry of the rows of `V`. A row is kept when its part
/// orthogonal to the rows already kept exceeds `cutoff`. Once a channel is
/// dependent at some lag it is dropped at every older lag as well. When
/// every output channel has become dependent, `y(k)` is predicted exactly
/// by the lags up to the last kept output lag and older rows are dropped.
fn lag_ordered_rows(r: &DMatrix<f64>, cutoff: f64, m: usize, q: usize) -> Vec<usize> {
    let lag = |j: usize| if j < m { 0 } else { (j - m) / (m + q) + 1 };
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut keep = Vec::new();
    let mut dead = vec![false; m + q];
    for j in 0..r.ncols() {
        // inputs at lag 0, then [u; y] per lag
        let channel = if j < m { j } else { (j - m) % (m + q) };
        if dead[channel] {
            continue;
        }
        let mut v = r.column(j).into_owned();
        for _ in 0..2 {
            for b in &basis {
                let c = b.dot(&v);
                v.axpy(-c, b, 1.0);
            }
        }
        let norm = v.norm();
        if norm > cutoff {
            basis.push(v / norm);
            keep.push(j);
        } else {
            dead[channel] = true;
        }
    }
    if dead[m..].iter().all(|d| *d) {
        let last = keep.iter().filter(|&&j| j >= m && (j - m) % (m + q) >= m).map(|&j| lag(j)).max().unwrap_or(0);
        keep.retain(|&j| lag(j) <= last);
    }
    keep
}

/// Exact observer Markov parameters `[D, C L, ..., C F^(p-1) L]` of `model`
/// under observer gain `gain` (`n x q`).
pub fn observer_markov_parameters(model: &StateSpaceModel, gain: &DMatrix<f64>, horizon: usize) -> Result<MarkovParameterSet> {
    let n = model.states();
    let q = model.outputs();
    if gain.shape() != (n, q) {
        return Err(Error::dims("K", "model", format!("K is {}x{}, expected {n}x{q}", gain.nrows(), gain.ncols())));
    }
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    let f = model.a() - gain * model.c();
    let h = model.b() - gain * model.d();
    let mut fl = linalg::hstack(&[&h, gain]);
    let mut blocks = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        blocks.push(model.c() * &fl);
        fl = &f * fl;
    }
    MarkovParameterSet::new(model.d().clone(), blocks)
}

/// Gain placing every eigenvalue of `A - K C` at zero, for single-output
/// observable models (Ackermann's formula on the dual system).
pub fn deadbeat_observer_gain(model: &StateSpaceModel) -> Result<DMatrix<f64>> {
    if model.outputs() != 1 {
        return Err(Error::InvalidArgument("deadbeat gain construction needs a single output".into()));
    }
    let n = model.states();
    let a = model.a();
    let mut obs = DMatrix::zeros(n, n);
    let mut row = model.c().clone();
    for i in 0..n {
        obs.set_row(i, &row.row(0));
        row = &row * a;
    }
    let obs_inv = obs
        .try_inverse()
        .ok_or_else(|| Error::InvalidArgument("model is not observable".into()))?;
    let mut e_last = DMatrix::zeros(n, 1);
    e_last[(n - 1, 0)] = 1.0;
    Ok(a.pow(n as u32) * obs_inv * e_last)
}
