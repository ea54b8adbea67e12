//! State-space models, noise shaping, and discrete-time simulation.
//!
//! The simulated plant is
//!
//! ```text
//! x(k+1) = A x(k) + B u(k) + w_p(k)
//! y(k)   = C x(k) + D u(k) + w_m(k)
//! ```
//!
//! where `w_m` is the output of a stable [`ColoringFilter`] driven by white
//! Gaussian noise, optionally plus an extra white term.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg;

// Independent ChaCha streams per noise source so each realization depends
// only on (seed, source).
const STREAM_PROCESS: u64 = 0;
const STREAM_COLORING: u64 = 1;
const STREAM_WHITE: u64 = 2;

fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Discrete LTI quadruple `(A, B, C, D)` with `n` states, `m` inputs and
/// `q` outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl StateSpaceModel {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::dims("A", "A", format!("A is {}x{}, expected square", n, a.ncols())));
        }
        if b.nrows() != n {
            return Err(Error::dims("A", "B", format!("A has {n} states, B has {} rows", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::dims("A", "C", format!("A has {n} states, C has {} columns", c.ncols())));
        }
        if d.nrows() != c.nrows() {
            return Err(Error::dims("C", "D", format!("C has {} rows, D has {}", c.nrows(), d.nrows())));
        }
        if d.ncols() != b.ncols() {
            return Err(Error::dims("B", "D", format!("B has {} columns, D has {}", b.ncols(), d.ncols())));
        }
        if d.nrows() == 0 || d.ncols() == 0 {
            return Err(Error::InvalidArgument("model needs at least one input and one output".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// Build from row-major slices.
    pub fn from_rows(
        n: usize,
        m: usize,
        q: usize,
        a: &[f64],
        b: &[f64],
        c: &[f64],
        d: &[f64],
    ) -> Result<Self> {
        let check = |name: &'static str, len: usize, want: usize| {
            if len == want {
                Ok(())
            } else {
                Err(Error::dims(name, "dimensions", format!("{len} entries, expected {want}")))
            }
        };
        check("A", a.len(), n * n)?;
        check("B", b.len(), n * m)?;
        check("C", c.len(), q * n)?;
        check("D", d.len(), q * m)?;
        Self::new(
            DMatrix::from_row_slice(n, n, a),
            DMatrix::from_row_slice(n, m, b),
            DMatrix::from_row_slice(q, n, c),
            DMatrix::from_row_slice(q, m, d),
        )
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn spectral_radius(&self) -> f64 {
        linalg::spectral_radius(&self.a)
    }

    pub fn is_stable(&self) -> bool {
        linalg::is_schur(&self.a)
    }

    pub fn require_stable(&self, what: &'static str) -> Result<()> {
        let radius = self.spectral_radius();
        if radius < 1.0 - linalg::STABILITY_TOL {
            Ok(())
        } else {
            Err(Error::Unstable { what, radius })
        }
    }

    /// Change of state basis `x -> T x`.
    pub fn transformed(&self, t: &DMatrix<f64>) -> Result<Self> {
        let n = self.states();
        if t.shape() != (n, n) {
            return Err(Error::dims("T", "A", format!("T is {}x{}, model has {n} states", t.nrows(), t.ncols())));
        }
        let t_inv = t
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("similarity transform is singular".into()))?;
        Self::new(t * &self.a * &t_inv, t * &self.b, &self.c * &t_inv, self.d.clone())
    }

    /// Impulse-response blocks `C A^i B` for `i = 0..count`.
    pub fn markov_parameters(&self, count: usize) -> Vec<DMatrix<f64>> {
        let mut out = Vec::with_capacity(count);
        let mut ab = self.b.clone();
        for _ in 0..count {
            out.push(&self.c * &ab);
            ab = &self.a * ab;
        }
        out
    }
}

/// Stable noise-shaping system driven by white Gaussian noise:
///
/// ```text
/// x_c(k+1) = A_c x_c(k) + w(k)
/// y_c(k)   = C_c x_c(k) + D_c w(k),   w(k) ~ N(0, diag(sigma^2))
/// ```
///
/// The white drive has one channel per coloring state, so `D_c` is `q x n_c`.
#[derive(Debug, Clone, PartialEq)]
pub struct ColoringFilter {
    a: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
    sigma: Vec<f64>,
}

impl ColoringFilter {
    pub fn new(a: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>, sigma: Vec<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || n == 0 {
            return Err(Error::dims("A_c", "A_c", format!("A_c is {}x{}, expected non-empty square", n, a.ncols())));
        }
        if c.ncols() != n {
            return Err(Error::dims("A_c", "C_c", format!("A_c has {n} states, C_c has {} columns", c.ncols())));
        }
        if d.shape() != (c.nrows(), n) {
            return Err(Error::dims(
                "C_c",
                "D_c",
                format!("D_c is {}x{}, expected {}x{n}", d.nrows(), d.ncols(), c.nrows()),
            ));
        }
        if sigma.len() != n {
            return Err(Error::dims("A_c", "sigma", format!("{} std values for {n} drive channels", sigma.len())));
        }
        if sigma.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("coloring std must be finite and non-negative".into()));
        }
        let radius = linalg::spectral_radius(&a);
        if radius >= 1.0 - linalg::STABILITY_TOL {
            return Err(Error::Unstable { what: "coloring filter A_c", radius });
        }
        Ok(Self { a, c, d, sigma })
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }
    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }
    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }
    pub fn states(&self) -> usize {
        self.a.nrows()
    }
    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Same filter with every drive std multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(
            self.a.clone(),
            self.c.clone(),
            self.d.clone(),
            self.sigma.iter().map(|s| s * factor).collect(),
        )
    }
}

/// Paired input/output record. Column `k` of `u` / `y` is sample `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    u: DMatrix<f64>,
    y: DMatrix<f64>,
    sample_rate: f64,
}

impl TimeSeriesDataset {
    pub fn new(u: DMatrix<f64>, y: DMatrix<f64>, sample_rate: f64) -> Result<Self> {
        if u.ncols() != y.ncols() {
            return Err(Error::dims("u", "y", format!("{} input samples, {} output samples", u.ncols(), y.ncols())));
        }
        if u.ncols() == 0 {
            return Err(Error::InvalidArgument("dataset must hold at least one sample".into()));
        }
        if u.nrows() == 0 || y.nrows() == 0 {
            return Err(Error::InvalidArgument("dataset needs at least one input and one output channel".into()));
        }
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::InvalidArgument(format!("sample rate must be positive, got {sample_rate}")));
        }
        Ok(Self { u, y, sample_rate })
    }

    pub fn u(&self) -> &DMatrix<f64> {
        &self.u
    }
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }
    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }
    pub fn len(&self) -> usize {
        self.u.ncols()
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn inputs(&self) -> usize {
        self.u.nrows()
    }
    pub fn outputs(&self) -> usize {
        self.y.nrows()
    }

    /// Copy with the per-channel sample mean removed from `u` and `y`.
    pub fn mean_removed(&self) -> Self {
        fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
            let mut out = m.clone();
            for mut row in out.row_iter_mut() {
                let mean = row.mean();
                row.add_scalar_mut(-mean);
            }
            out
        }
        Self {
            u: center(&self.u),
            y: center(&self.y),
            sample_rate: self.sample_rate,
        }
    }

    /// Samples `range` as a new dataset.
    pub fn slice(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() || len == 0 {
            return Err(Error::InvalidArgument(format!(
                "slice [{start}, {}) outside dataset of length {}",
                start + len,
                self.len()
            )));
        }
        Self::new(
            self.u.columns(start, len).into_owned(),
            self.y.columns(start, len).into_owned(),
            self.sample_rate,
        )
    }
}

/// Noise sources for [`simulate`]. All sources are zero-mean Gaussian.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NoiseSpec {
    /// Std of the white process noise per state; empty means none.
    pub process_std: Vec<f64>,
    /// Colored measurement noise.
    pub coloring: Option<ColoringFilter>,
    /// Std of an extra white measurement term on every output.
    pub measurement_white_std: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn colored(coloring: ColoringFilter, seed: u64) -> Self {
        Self {
            coloring: Some(coloring),
            seed,
            ..Self::default()
        }
    }

    fn validate(&self, model: &StateSpaceModel) -> Result<()> {
        if !self.process_std.is_empty() && self.process_std.len() != model.states() {
            return Err(Error::dims(
                "noise.process_std",
                "model states",
                format!("{} std values for {} states", self.process_std.len(), model.states()),
            ));
        }
        if self.process_std.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(Error::InvalidArgument("process std must be finite and non-negative".into()));
        }
        if !(self.measurement_white_std.is_finite() && self.measurement_white_std >= 0.0) {
            return Err(Error::InvalidArgument("measurement std must be finite and non-negative".into()));
        }
        if let Some(f) = &self.coloring {
            if f.outputs() != model.outputs() {
                return Err(Error::dims(
                    "noise.coloring",
                    "model outputs",
                    format!("coloring has {} outputs, model has {}", f.outputs(), model.outputs()),
                ));
            }
        }
        Ok(())
    }
}

/// Colored noise sequence (`q x length`, column per sample), coloring state
/// starting at zero.
pub fn generate_colored_noise(filter: &ColoringFilter, length: usize, seed: u64) -> Result<DMatrix<f64>> {
    if length == 0 {
        return Err(Error::InvalidArgument("noise length must be at least 1".into()));
    }
    let radius = linalg::spectral_radius(&filter.a);
    if radius >= 1.0 - linalg::STABILITY_TOL {
        return Err(Error::Unstable { what: "coloring filter A_c", radius });
    }
    let nc = filter.states();
    let q = filter.outputs();
    let mut rng = noise_rng(seed, STREAM_COLORING);
    let mut out = DMatrix::zeros(q, length);
    let mut x = DVector::zeros(nc);
    let mut next = DVector::zeros(nc);
    let mut w = DVector::zeros(nc);
    let mut yk = DVector::zeros(q);
    for k in 0..length {
        for (wi, s) in w.iter_mut().zip(&filter.sigma) {
            let z: f64 = StandardNormal.sample(&mut rng);
            *wi = s * z;
        }
        yk.gemv(1.0, &filter.c, &x, 0.0);
        yk.gemv(1.0, &filter.d, &w, 1.0);
        out.set_column(k, &yk);
        next.gemv(1.0, &filter.a, &x, 0.0);
        next += &w;
        std::mem::swap(&mut x, &mut next);
    }
    Ok(out)
}

/// Run the plant over the input record `u` (`m x l`).
///
/// With `x0 = None` the state starts at zero. Output is bit-reproducible for
/// a given `(seed, inputs)` on one platform.
pub fn simulate(
    model: &StateSpaceModel,
    u: &DMatrix<f64>,
    noise: &NoiseSpec,
    x0: Option<&DVector<f64>>,
    sample_rate: f64,
) -> Result<TimeSeriesDataset> {
    let n = model.states();
    let q = model.outputs();
    if u.nrows() != model.inputs() {
        return Err(Error::dims("u", "model inputs", format!("u has {} channels, model has {}", u.nrows(), model.inputs())));
    }
    if u.ncols() == 0 {
        return Err(Error::InvalidArgument("input sequence is empty".into()));
    }
    if let Some(x0) = x0 {
        if x0.len() != n {
            return Err(Error::dims("x0", "model states", format!("x0 has {} entries, model has {n} states", x0.len())));
        }
    }
    noise.validate(model)?;
    let l = u.ncols();

    let colored = noise
        .coloring
        .as_ref()
        .map(|f| generate_colored_noise(f, l, noise.seed))
        .transpose()?;
    let mut process_rng = noise_rng(noise.seed, STREAM_PROCESS);
    let mut white_rng = noise_rng(noise.seed, STREAM_WHITE);
    let has_process = noise.process_std.iter().any(|s| *s > 0.0);
    let has_white = noise.measurement_white_std > 0.0;

    let mut x = x0.cloned().unwrap_or_else(|| DVector::zeros(n));
    let mut next = DVector::zeros(n);
    let mut y = DMatrix::zeros(q, l);
    let mut yk = DVector::zeros(q);
    for k in 0..l {
        let uk = u.column(k);
        yk.gemv(1.0, &model.c, &x, 0.0);
        yk.gemv(1.0, &model.d, &uk, 1.0);
        if let Some(c) = &colored {
            yk += c.column(k);
        }
        if has_white {
            for v in yk.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut white_rng);
                *v += noise.measurement_white_std * z;
            }
        }
        y.set_column(k, &yk);

        next.gemv(1.0, &model.a, &x, 0.0);
        next.gemv(1.0, &model.b, &uk, 1.0);
        if has_process {
            for (v, s) in next.iter_mut().zip(&noise.process_std) {
                let z: f64 = StandardNormal.sample(&mut process_rng);
                *v += s * z;
            }
        }
        std::mem::swap(&mut x, &mut next);
    }
    TimeSeriesDataset::new(u.clone(), y, sample_rate)
}

/// Plant and coloring stacked into one model: block-diagonal `A`,
/// `B = [B_a; 0]`, `C = [C_a  C_c]`, `D = D_a`.
pub fn build_augmented_system(actual: &StateSpaceModel, coloring: &ColoringFilter) -> Result<StateSpaceModel> {
    let q = actual.outputs();
    if coloring.outputs() != q {
        return Err(Error::dims(
            "coloring",
            "actual",
            format!("coloring has {} outputs, plant has {q}", coloring.outputs()),
        ));
    }
    let na = actual.states();
    let nc = coloring.states();
    let m = actual.inputs();
    let n = na + nc;
    let mut a = DMatrix::zeros(n, n);
    a.view_mut((0, 0), (na, na)).copy_from(&actual.a);
    a.view_mut((na, na), (nc, nc)).copy_from(&coloring.a);
    let mut b = DMatrix::zeros(n, m);
    b.view_mut((0, 0), (na, m)).copy_from(&actual.b);
    let c = linalg::hstack(&[&actual.c, &coloring.c]);
    StateSpaceModel::new(a, b, c, actual.d.clone())
}
