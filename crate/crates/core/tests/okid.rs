mod common;

use common::*;
use nalgebra::DMatrix;
use okid_core::model::simulate;
use okid_core::okid::{
    build_regressors, deadbeat_observer_gain, estimate_markov_parameters, observer_markov_parameters, OkidConfig,
    SolveMethod,
};
use okid_core::{NoiseSpec, StateSpaceModel, TimeSeriesDataset};
use proptest::prelude::*;

fn siso(n: usize, vals: &[f64], rho: f64) -> StateSpaceModel {
    stable_model(n, 1, 1, vals, rho)
}

fn noise_free(model: &StateSpaceModel, len: usize, salt: u64) -> TimeSeriesDataset {
    let u = input_sequence(model.inputs(), len, salt);
    simulate(model, &u, &NoiseSpec::none(), None, 1.0).unwrap()
}

#[test]
fn deadbeat_blocks_reconstruct_output_exactly() {
    let model = StateSpaceModel::from_rows(3, 1, 1, &[0.2, 1.0, 0.0, -0.3, 0.1, 1.0, 0.05, 0.0, 0.4], &[1.0, 0.5, -0.2], &[1.0, 0.0, 0.0], &[0.3]).unwrap();
    let k = deadbeat_observer_gain(&model).unwrap();
    let data = noise_free(&model, 200, 4);
    for p in [3usize, 5, 8] {
        let cfg = OkidConfig::new(p);
        let reg = build_regressors(&data, &cfg).unwrap();
        let truth = observer_markov_parameters(&model, &k, p).unwrap();
        let pred = truth.predict(&reg.v).unwrap();
        let err = (pred - &reg.y).amax();
        assert!(err < 1e-10 * (1.0 + reg.y.amax()), "p = {p}: {err}");
    }
}

#[test]
fn explicit_second_order_oracle() {
    let model = StateSpaceModel::from_rows(2, 1, 1, &[1.5, -0.7, 1.0, 0.0], &[1.0, 0.0], &[0.5, 0.25], &[0.0]).unwrap();
    let k = deadbeat_observer_gain(&model).unwrap();
    let data = noise_free(&model, 500, 8);
    let cfg = OkidConfig::new(10);
    let reg = build_regressors(&data, &cfg).unwrap();
    let est = estimate_markov_parameters(&reg.y, &reg.v, &cfg).unwrap();
    // truth by explicitly forming F = A - KC and multiplying out
    let f = model.a() - &k * model.c();
    let h = model.b() - &k * model.d();
    let mut fi = DMatrix::<f64>::identity(2, 2);
    assert!((est.d() - model.d()).amax() < 1e-8);
    for blk in est.blocks() {
        let expected_h = model.c() * &fi * &h;
        let expected_g = model.c() * &fi * &k;
        assert!((blk[(0, 0)] - expected_h[(0, 0)]).abs() < 1e-8);
        assert!((blk[(0, 1)] - expected_g[(0, 0)]).abs() < 1e-8);
        fi = &f * fi;
    }
}

#[test]
fn paper_iv_shape_is_underdetermined() {
    let model = StateSpaceModel::from_rows(1, 1, 1, &[0.5], &[1.0], &[1.0], &[0.0]).unwrap();
    let data = noise_free(&model, 1600, 1);
    let cfg = OkidConfig::new(800);
    let reg = build_regressors(&data, &cfg).unwrap();
    assert_eq!(reg.v.shape(), (1601, 800));
    let est = estimate_markov_parameters(&reg.y, &reg.v, &cfg).unwrap();
    let diag = est.diagnostics.as_ref().unwrap();
    assert_eq!(diag.method, SolveMethod::MinimumNorm);
    assert!(diag.warnings.iter().any(|w| w.contains("l >= 6400")), "{:?}", diag.warnings);
    assert_eq!(est.blocks().len(), 800);
}

#[test]
fn doubling_horizon_does_not_hurt_noise_free_recovery() {
    let model = StateSpaceModel::from_rows(2, 1, 1, &[0.6, 0.3, -0.2, 0.5], &[1.0, -0.4], &[0.7, 0.2], &[0.1]).unwrap();
    let k = deadbeat_observer_gain(&model).unwrap();
    let data = noise_free(&model, 800, 3);
    let mut last = f64::INFINITY;
    for p in [4usize, 8, 16, 32] {
        let cfg = OkidConfig::new(p);
        let reg = build_regressors(&data, &cfg).unwrap();
        let est = estimate_markov_parameters(&reg.y, &reg.v, &cfg).unwrap();
        let truth = observer_markov_parameters(&model, &k, p).unwrap();
        let err = (est.phi() - truth.phi()).amax();
        assert!(err <= last.max(1e-8), "p = {p}: {err} after {last}");
        last = err;
    }
}

#[test]
fn observer_blocks_decay_with_observer_radius() {
    let model = StateSpaceModel::from_rows(2, 1, 1, &[0.9, 0.1, 0.0, 0.8], &[1.0, 1.0], &[1.0, 0.5], &[0.0]).unwrap();
    // K = 0 leaves F = A with radius 0.9
    let set = observer_markov_parameters(&model, &DMatrix::zeros(2, 1), 60).unwrap();
    let norms: Vec<f64> = set.blocks().iter().map(|b| b.norm()).collect();
    let rho: f64 = 0.9;
    for (i, n) in norms.iter().enumerate().skip(10) {
        assert!(*n <= 10.0 * rho.powi(i as i32) * norms[0], "block {i}: {n}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(48) })]

    #[test]
    fn residual_is_orthogonal_to_regressors(
        rows in 3usize..12, extra in 1usize..40, q in 1usize..3, vals in entries(600),
    ) {
        // random full-rank overdetermined instance: rows = m + p (m + q) with m = 1
        let p = rows;
        let unknowns = 1 + p * (1 + q);
        let cols = unknowns + extra;
        let mut it = vals.iter().copied().cycle().enumerate();
        let v = DMatrix::from_fn(unknowns, cols, |_, _| { let (i, x) = it.next().unwrap(); x + 1e-3 * (i as f64).sin() });
        let y = DMatrix::from_fn(q, cols, |i, j| (0.37 * (i + 1) as f64 * j as f64).sin());
        let cfg = OkidConfig::new(p);
        let est = estimate_markov_parameters(&y, &v, &cfg).unwrap();
        let e = &y - est.predict(&v).unwrap();
        let lhs = (e * v.transpose()).norm();
        prop_assert!(lhs <= 1e-8 * y.norm() * v.norm(), "{lhs}");
    }

    #[test]
    fn underdetermined_solution_has_minimum_norm(
        p in 2usize..6, vals in entries(400), pert in entries(40),
    ) {
        let unknowns = 1 + 2 * p;
        let cols = unknowns - 1;
        let mut it = vals.iter().copied().cycle();
        let v = DMatrix::from_fn(unknowns, cols, |_, _| it.next().unwrap());
        let y = DMatrix::from_fn(1, cols, |_, j| (j as f64 * 0.7).cos());
        let est = estimate_markov_parameters(&y, &v, &OkidConfig::new(p)).unwrap();
        let phi = est.phi();
        // build another exact solution by adding a left-null-space direction of V
        let q = v.clone().qr().q();
        let r = DMatrix::from_fn(unknowns, 1, |i, _| pert[i % pert.len()] + 0.5);
        let null = (&r - &q * (q.transpose() * &r)).transpose();
        prop_assume!(null.norm() > 1e-3);
        let null = &null / null.norm();
        prop_assert!((&null * &v).norm() < 1e-10 * (1.0 + v.norm()));
        let scale = 0.1 + pert[0].abs();
        let other = &phi + null * scale;
        prop_assert!(((&other * &v) - &y).norm() <= 1e-8 * (1.0 + y.norm()));
        prop_assert!(phi.norm() <= other.norm() + 1e-12);
    }

    #[test]
    fn delayed_record_gives_same_estimate(
        n in 1usize..=3, vals in entries(30), rho in 0.2f64..0.8, noise_seed in 0u64..1000,
    ) {
        let model = siso(n, &vals, rho);
        let u = input_sequence(1, 300, 7);
        let coloring = stable_coloring(1, 1, &[0.5, 1.0, 0.3, 0.2], 0.5);
        let data = simulate(&model, &u, &NoiseSpec::colored(coloring, noise_seed), None, 1.0).unwrap();
        let p = 6;
        let cfg = OkidConfig::new(p);
        let base = build_regressors(&data, &cfg).unwrap();
        // prepend one sample: same equations plus one boundary column
        let mut u2 = DMatrix::zeros(1, 301);
        let mut y2 = DMatrix::zeros(1, 301);
        u2.columns_mut(1, 300).copy_from(data.u());
        y2.columns_mut(1, 300).copy_from(data.y());
        u2[(0, 0)] = 0.3;
        y2[(0, 0)] = -0.2;
        let shifted = build_regressors(&TimeSeriesDataset::new(u2, y2, 1.0).unwrap(), &cfg).unwrap();
        prop_assert_eq!(shifted.v.columns(1, base.v.ncols()).into_owned(), base.v.clone());
        let a = estimate_markov_parameters(&base.y, &base.v, &cfg).unwrap();
        let b = estimate_markov_parameters(
            &shifted.y.columns(1, base.y.ncols()).into_owned(),
            &shifted.v.columns(1, base.v.ncols()).into_owned(),
            &cfg,
        ).unwrap();
        prop_assert_eq!(a.phi(), b.phi());
    }

    #[test]
    fn noise_free_recovery_of_deadbeat_blocks(n in 1usize..=3, vals in entries(30), rho in 0.2f64..0.9) {
        let model = siso(n, &vals, rho);
        let k = match deadbeat_observer_gain(&model) { Ok(k) => k, Err(_) => return Ok(()) };
        prop_assume!(k.amax() < 1e3);
        let data = noise_free(&model, 400, 5);
        let p = 3 * n;
        let cfg = OkidConfig::new(p);
        let reg = build_regressors(&data, &cfg).unwrap();
        let est = estimate_markov_parameters(&reg.y, &reg.v, &cfg).unwrap();
        let pred = est.predict(&reg.v).unwrap();
        prop_assert!((pred - &reg.y).amax() <= 1e-8 * (1.0 + reg.y.amax()));
    }
}
