//! Eigensystem realization from observer Markov parameters and recovery of
//! the plant and Kalman gain.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, StageExt};
use crate::linalg;
use crate::model::{StateSpaceModel, TimeSeriesDataset};
use crate::okid::{self, MarkovParameterSet, OkidConfig, SolveMethod};

pub const DEFAULT_THRESHOLD: f64 = 1e-3;

/// Block Hankel matrices `H(0)` and `H(1)` of the observer blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct HankelPair {
    pub h0: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub alpha: usize,
    pub beta: usize,
    /// Block row height (outputs).
    pub outputs: usize,
    /// Block column width (inputs plus outputs).
    pub block_width: usize,
}

/// Block `(i, j)` of `H(0)` is `Y_{i+j}`; of `H(1)`, `Y_{i+j+1}`, where
/// `Y_i` is the `i`-th observer block (zero-based, `D` excluded).
pub fn build_hankel(params: &MarkovParameterSet, alpha: usize, beta: usize) -> Result<HankelPair> {
    let p = params.horizon();
    if alpha == 0 || beta == 0 || alpha + beta > p {
        return Err(Error::InsufficientHorizon { alpha, beta, p });
    }
    let q = params.outputs();
    let w = params.inputs() + q;
    let blocks = params.blocks();
    let mut h0 = DMatrix::zeros(alpha * q, beta * w);
    let mut h1 = DMatrix::zeros(alpha * q, beta * w);
    for i in 0..alpha {
        for j in 0..beta {
            h0.view_mut((i * q, j * w), (q, w)).copy_from(&blocks[i + j]);
            h1.view_mut((i * q, j * w), (q, w)).copy_from(&blocks[i + j + 1]);
        }
    }
    Ok(HankelPair {
        h0,
        h1,
        alpha,
        beta,
        outputs: q,
        block_width: w,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OrderSelection {
    /// Keep exactly this many singular values.
    Order(usize),
    /// Keep singular values strictly above this fraction of the largest.
    Threshold(f64),
}

impl Default for OrderSelection {
    fn default() -> Self {
        OrderSelection::Threshold(DEFAULT_THRESHOLD)
    }
}

/// How `Sigma` is split between the observability and controllability
/// factors. The realized transfer function does not depend on it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitConvention {
    /// `O = U Sigma^(1/2)`, `C = Sigma^(1/2) V^T`.
    #[default]
    Balanced,
    /// `O = U Sigma`, `C = V^T`.
    Output,
}

/// Observer realization `(F, L, C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub f: DMatrix<f64>,
    /// `n x (m + q)`: `[H, G]`.
    pub l: DMatrix<f64>,
    pub c: DMatrix<f64>,
    /// Truncated observability factor `O`.
    pub observability: DMatrix<f64>,
    /// Truncated controllability factor, so that `H(0) ~ O C`.
    pub controllability: DMatrix<f64>,
    /// Every singular value of `H(0)`, descending.
    pub singular_values: Vec<f64>,
    pub order: usize,
}

pub fn era_realize(hankel: &HankelPair, selection: OrderSelection) -> Result<Realization> {
    era_realize_with(hankel, selection, SplitConvention::Balanced)
}

pub fn era_realize_with(hankel: &HankelPair, selection: OrderSelection, split: SplitConvention) -> Result<Realization> {
    let svd = linalg::ordered_svd(&hankel.h0);
    let sv = &svd.singular_values;
    let smax = sv.first().copied().unwrap_or(0.0);
    if !smax.is_finite() || smax <= 0.0 {
        return Err(Error::DegenerateRealization("Hankel matrix H(0) is zero".into()));
    }
    let floor = smax * f64::EPSILON * hankel.h0.nrows().max(hankel.h0.ncols()) as f64;
    let available = sv.iter().take_while(|s| **s > floor).count();
    let order = match selection {
        OrderSelection::Order(n) => {
            if n == 0 || n > available {
                return Err(Error::Order { requested: n, available });
            }
            n
        }
        OrderSelection::Threshold(t) => {
            if !(t.is_finite() && (0.0..1.0).contains(&t)) {
                return Err(Error::InvalidArgument(format!("threshold {t} outside [0, 1)")));
            }
            sv.iter().take_while(|s| **s > t * smax && **s > floor).count()
        }
    };

    let u = svd.u.columns(0, order);
    let vt = svd.v_t.rows(0, order);
    let s = DVector::from_iterator(order, sv[..order].iter().copied());
    let (left, right) = match split {
        SplitConvention::Balanced => (s.map(f64::sqrt), s.map(f64::sqrt)),
        SplitConvention::Output => (s.clone(), DVector::from_element(order, 1.0)),
    };
    let mut obs = u.into_owned();
    for (k, w) in left.iter().enumerate() {
        obs.column_mut(k).scale_mut(*w);
    }
    let mut ctrb = vt.into_owned();
    for (k, w) in right.iter().enumerate() {
        ctrb.row_mut(k).scale_mut(*w);
    }
    // F = O^+ H(1) C^+ with O^+ = left^-1 U^T and C^+ = V right^-1
    let mut f = u.transpose() * &hankel.h1 * vt.transpose();
    for i in 0..order {
        for j in 0..order {
            f[(i, j)] /= left[i] * right[j];
        }
    }
    Ok(Realization {
        f,
        l: ctrb.columns(0, hankel.block_width).into_owned(),
        c: obs.rows(0, hankel.outputs).into_owned(),
        observability: obs,
        controllability: ctrb,
        singular_values: sv.clone(),
        order,
    })
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct IdentifyDiagnostics {
    /// Spectral radius of `A - K C`.
    pub observer_spectral_radius: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solve_method: Option<SolveMethod>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regressor_rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Plant model plus steady-state observer gain.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentifiedModel {
    pub model: StateSpaceModel,
    /// `n x q`.
    pub gain: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub diagnostics: IdentifyDiagnostics,
}

impl IdentifiedModel {
    /// Pair a known model with a known gain.
    pub fn from_parts(model: StateSpaceModel, gain: DMatrix<f64>) -> Result<Self> {
        if gain.shape() != (model.states(), model.outputs()) {
            return Err(Error::dims(
                "K",
                "model",
                format!("K is {}x{}, expected {}x{}", gain.nrows(), gain.ncols(), model.states(), model.outputs()),
            ));
        }
        let radius = linalg::spectral_radius(&(model.a() - &gain * model.c()));
        Ok(Self {
            model,
            gain,
            singular_values: Vec::new(),
            diagnostics: IdentifyDiagnostics {
                observer_spectral_radius: radius,
                ..Default::default()
            },
        })
    }

    pub fn order(&self) -> usize {
        self.model.states()
    }

    pub fn observer_matrix(&self) -> DMatrix<f64> {
        self.model.a() - &self.gain * self.model.c()
    }

    pub fn observer_spectral_radius(&self) -> f64 {
        self.diagnostics.observer_spectral_radius
    }
}

/// `A = F + G C`, `B = H + G D`, `K = G` where `L = [H, G]`.
pub fn recover_system(f: &DMatrix<f64>, l: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<IdentifiedModel> {
    let n = f.nrows();
    let q = c.nrows();
    if f.ncols() != n {
        return Err(Error::dims("F", "F", "F must be square"));
    }
    if c.ncols() != n {
        return Err(Error::dims("C", "F", format!("C has {} columns, F is {n}x{n}", c.ncols())));
    }
    if l.nrows() != n || l.ncols() <= q {
        return Err(Error::dims("L", "F", format!("L is {}x{}, expected {n}x(m + {q})", l.nrows(), l.ncols())));
    }
    let m = l.ncols() - q;
    if d.shape() != (q, m) {
        return Err(Error::dims("D", "L", format!("D is {}x{}, expected {q}x{m}", d.nrows(), d.ncols())));
    }
    let h = l.columns(0, m);
    let g = l.columns(m, q).into_owned();
    let a = f + &g * c;
    let b = h + &g * d;
    let model = StateSpaceModel::new(a, b, c.clone(), d.clone())?;
    let mut out = IdentifiedModel::from_parts(model, g)?;
    out.diagnostics.observer_spectral_radius = linalg::spectral_radius(f);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EraOptions {
    pub selection: OrderSelection,
    /// Hankel block rows; defaults to `p / 2`.
    pub alpha: Option<usize>,
    /// Hankel block columns; defaults to `p / 2`.
    pub beta: Option<usize>,
    pub split: SplitConvention,
}

impl Default for EraOptions {
    fn default() -> Self {
        Self {
            selection: OrderSelection::default(),
            alpha: None,
            beta: None,
            split: SplitConvention::Balanced,
        }
    }
}

impl EraOptions {
    pub fn order(n: usize) -> Self {
        Self {
            selection: OrderSelection::Order(n),
            ..Self::default()
        }
    }
}

/// Realize a model from already estimated observer Markov parameters.
pub fn realize(params: &MarkovParameterSet, opts: &EraOptions) -> Result<IdentifiedModel> {
    let half = params.horizon() / 2;
    let hankel = build_hankel(params, opts.alpha.unwrap_or(half), opts.beta.unwrap_or(half)).stage("hankel")?;
    let real = era_realize_with(&hankel, opts.selection, opts.split).stage("era")?;
    let mut out = recover_system(&real.f, &real.l, &real.c, params.d()).stage("recovery")?;
    out.singular_values = real.singular_values;
    Ok(out)
}

/// Full pipeline: regressors, Markov parameters, ERA, plant recovery.
pub fn identify(data: &TimeSeriesDataset, cfg: &OkidConfig, opts: &EraOptions) -> Result<IdentifiedModel> {
    let reg = okid::build_regressors(data, cfg).stage("regressors")?;
    let params = okid::estimate_markov_parameters(&reg.y, &reg.v, cfg).stage("markov")?;
    let mut out = realize(&params, opts)?;
    if let Some(diag) = &params.diagnostics {
        out.diagnostics.solve_method = Some(diag.method);
        out.diagnostics.regressor_rank = Some(diag.rank);
        out.diagnostics.residual_norm = Some(diag.residual_norm);
        out.diagnostics.warnings.extend(diag.warnings.iter().cloned());
    }
    out.diagnostics.horizon = Some(cfg.horizon);
    let radius = out.diagnostics.observer_spectral_radius;
    if radius >= 1.0 {
        let w = format!("identified observer is not stable (spectral radius {radius:.6})");
        log::warn!("{w}");
        out.diagnostics.warnings.push(w);
    }
    Ok(out)
}
