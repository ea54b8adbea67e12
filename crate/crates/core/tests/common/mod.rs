#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use okid_core::linalg::spectral_radius;
use okid_core::{ColoringFilter, StateSpaceModel};
use proptest::prelude::*;

/// Random model whose `A` is rescaled to spectral radius `rho`.
pub fn stable_model(n: usize, m: usize, q: usize, vals: &[f64], rho: f64) -> StateSpaceModel {
    let mut it = vals.iter().copied().cycle();
    let mut take = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| it.next().unwrap());
    let mut a = take(n, n);
    let r = spectral_radius(&a);
    if r < 1e-3 {
        a = DMatrix::from_fn(n, n, |i, j| if i == j { 0.5 } else { 0.0 });
    } else {
        a *= rho / r;
    }
    let b = take(n, m);
    let c = take(q, n);
    let d = take(q, m);
    StateSpaceModel::new(a, b, c, d).unwrap()
}

pub fn stable_coloring(n: usize, q: usize, vals: &[f64], rho: f64) -> ColoringFilter {
    let sys = stable_model(n, n, q, vals, rho);
    ColoringFilter::new(sys.a().clone(), sys.c().clone(), sys.d().clone(), vec![1.0; n]).unwrap()
}

pub fn entries(count: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, count)
}

/// `C (zI - A)^-1 B + D` by elementwise Gaussian elimination with partial
/// pivoting on plain complex arrays.
pub fn resolvent_oracle(model: &StateSpaceModel, z: Complex64) -> DMatrix<Complex64> {
    let n = model.states();
    let m = model.inputs();
    let q = model.outputs();
    let mut aug: Vec<Vec<Complex64>> = (0..n)
        .map(|i| {
            let mut row: Vec<Complex64> = (0..n)
                .map(|j| {
                    let diag = if i == j { z } else { Complex64::new(0.0, 0.0) };
                    diag - model.a()[(i, j)]
                })
                .collect();
            row.extend((0..m).map(|j| Complex64::new(model.b()[(i, j)], 0.0)));
            row
        })
        .collect();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&x, &y| aug[x][col].norm().partial_cmp(&aug[y][col].norm()).unwrap())
            .unwrap();
        aug.swap(col, piv);
        for r in 0..n {
            if r != col {
                let f = aug[r][col] / aug[col][col];
                for k in col..n + m {
                    let v = aug[col][k];
                    aug[r][k] -= f * v;
                }
            }
        }
    }
    DMatrix::from_fn(q, m, |i, j| {
        let mut s = Complex64::new(model.d()[(i, j)], 0.0);
        for k in 0..n {
            s += model.c()[(i, k)] * aug[k][n + j] / aug[k][k];
        }
        s
    })
}

/// Stabilizing steady-state Kalman gain for `x+ = Ax + w`, `y = Cx + v`
/// with `cov(w) = qw I`, `cov(v) = rv I`, by iterating the Riccati
/// recursion to convergence.
pub fn kalman_gain(model: &StateSpaceModel, qw: f64, rv: f64) -> DMatrix<f64> {
    let n = model.states();
    let q = model.outputs();
    let (a, c) = (model.a(), model.c());
    let mut p = DMatrix::<f64>::identity(n, n);
    for _ in 0..100_000 {
        let s = c * &p * c.transpose() + DMatrix::<f64>::identity(q, q) * rv;
        let k = a * &p * c.transpose() * s.clone().try_inverse().unwrap();
        let next = a * &p * a.transpose() + DMatrix::<f64>::identity(n, n) * qw - &k * s * k.transpose();
        let done = (&next - &p).amax() < 1e-15;
        p = next;
        if done {
            break;
        }
    }
    let s = c * &p * c.transpose() + DMatrix::<f64>::identity(q, q) * rv;
    a * &p * c.transpose() * s.try_inverse().unwrap()
}

/// Deterministic pseudo-random input in [-1, 1].
pub fn input_sequence(m: usize, len: usize, salt: u64) -> DMatrix<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(salt);
    DMatrix::from_fn(m, len, |_, _| rng.random_range(-1.0..1.0))
}

pub fn max_rel_err(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm() / (1.0 + y.norm()))
        .fold(0.0, f64::max)
}

/// Smallest singular value of `[B, AB, ..]` and `[C; CA; ..]` relative to
/// the largest.
pub fn minimality(sys: &StateSpaceModel) -> f64 {
    let n = sys.states();
    let mut ctrb = DMatrix::zeros(n, n * sys.inputs());
    let mut obsv = DMatrix::zeros(n * sys.outputs(), n);
    let mut ab = sys.b().clone();
    let mut ca = sys.c().clone();
    for i in 0..n {
        ctrb.view_mut((0, i * sys.inputs()), (n, sys.inputs())).copy_from(&ab);
        obsv.view_mut((i * sys.outputs(), 0), (sys.outputs(), n)).copy_from(&ca);
        ab = sys.a() * ab;
        ca *= sys.a();
    }
    let ratio = |m: &DMatrix<f64>| {
        let s = m.singular_values();
        s.min() / s.max()
    };
    ratio(&ctrb).min(ratio(&obsv))
}
