//! Small dense linear-algebra helpers shared by the identification stages.

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Spectral radius margin: a matrix counts as Schur only when every
/// eigenvalue modulus is below `1 - STABILITY_TOL`.
pub const STABILITY_TOL: f64 = 1e-9;

pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<Complex64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    m.complex_eigenvalues().iter().copied().collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn is_schur(m: &DMatrix<f64>) -> bool {
    spectral_radius(m) < 1.0 - STABILITY_TOL
}

/// Thin SVD with singular values in descending order and the columns of `u`
/// sign-normalized so each column's largest-magnitude entry is positive
/// (rows of `v_t` flipped to match).
#[derive(Debug, Clone)]
pub struct OrderedSvd {
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    pub v_t: DMatrix<f64>,
}

/// Thin SVD `(U, sigma, V^T)` with `sigma` non-increasing.
fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let (rows, cols) = m.shape();
    let k = rows.min(cols);
    if k == 0 {
        return (DMatrix::zeros(rows, 0), Vec::new(), DMatrix::zeros(0, cols));
    }
    let fm = faer::Mat::<f64>::from_fn(rows, cols, |i, j| m[(i, j)]);
    match fm.thin_svd() {
        Ok(svd) => {
            let (u, v, s) = (svd.U(), svd.V(), svd.S().column_vector());
            (
                DMatrix::from_fn(rows, k, |i, j| u[(i, j)]),
                (0..k).map(|i| s[i]).collect(),
                DMatrix::from_fn(k, cols, |i, j| v[(j, i)]),
            )
        }
        Err(e) => {
            log::warn!("dense SVD did not converge ({e:?}); retrying with the bidiagonal QR solver");
            let svd = m.clone().svd(true, true);
            (
                svd.u.expect("u requested"),
                svd.singular_values.iter().copied().collect(),
                svd.v_t.expect("v_t requested"),
            )
        }
    }
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    thin_svd(m).1
}

pub fn ordered_svd(m: &DMatrix<f64>) -> OrderedSvd {
    let (mut u, singular_values, mut v_t) = thin_svd(m);
    for j in 0..u.ncols() {
        let col = u.column(j);
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        if pivot < 0.0 {
            u.column_mut(j).neg_mut();
            v_t.row_mut(j).neg_mut();
        }
    }
    OrderedSvd {
        u,
        singular_values,
        v_t,
    }
}

/// Moore-Penrose pseudo-inverse, discarding singular values at or below
/// `rel_tol * sigma_max`. Returns the inverse and the retained rank.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let (u, sv, v_t) = thin_svd(m);
    let sigma_max = sv.first().copied().unwrap_or(0.0);
    let cutoff = rel_tol * sigma_max;
    let rank = sv.iter().take_while(|s| **s > cutoff && **s > 0.0).count();
    // V_r Sigma_r^-1 U_r^T
    let mut vs = v_t.rows(0, rank).transpose();
    for (k, s) in sv[..rank].iter().enumerate() {
        vs.column_mut(k).scale_mut(1.0 / s);
    }
    (vs * u.columns(0, rank).transpose(), rank)
}

/// Stack `blocks` horizontally. All blocks must share a row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.view_mut((0, at), (rows, b.ncols())).copy_from(*b);
        at += b.ncols();
    }
    out
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Inverse of [`to_rows`]; `cols` is used when `rows` is empty.
pub fn from_rows(rows: &[Vec<f64>], cols: usize) -> Option<DMatrix<f64>> {
    let ncols = rows.first().map_or(cols, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}
