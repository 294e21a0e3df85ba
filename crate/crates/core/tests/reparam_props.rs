use iir::likelihood::LikelihoodProblem;
use iir::models::{builtin, default_dataset, BUILTIN_MODELS, DEFAULT_SEED};
use iir::numerics::{max_principal_angle, null_space, svd};
use iir::reparam::{analyze, build_reparam, invariance_check, Tolerances};
use iir::{Matrix, Bounds};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn gaussian(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Log-uniform point strictly inside the box.
fn interior_point(rng: &mut ChaCha8Rng, b: &Bounds) -> Vec<f64> {
    (0..b.dim())
        .map(|i| {
            let (lo, hi) = (b.lower[i].ln(), b.upper[i].ln());
            let pad = 1e-6 * (hi - lo);
            rng.random_range(lo + pad..hi - pad).exp()
        })
        .collect()
}

/// Log-uniform point within a factor `spread` of `centre`, clipped to the box.
fn near_point(rng: &mut ChaCha8Rng, centre: &[f64], spread: f64, b: &Bounds) -> Vec<f64> {
    centre
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let lo = (c / spread).max(b.lower[i]).ln();
            let hi = (c * spread).min(b.upper[i]).ln();
            rng.random_range(lo..hi).exp()
        })
        .collect()
}

fn same(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() < tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn injective_factor_keeps_null_space(seed in any::<u64>(), n in 2usize..6, extra in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = rng.random_range(1..n);
        let k = n + rng.random_range(0..3);
        // B is k x n of rank r; A is (k + extra) x k with full column rank.
        let b = gaussian(&mut rng, k, r) * gaussian(&mut rng, r, n);
        let a = gaussian(&mut rng, k + extra, k);
        prop_assume!(svd(&a).unwrap().rank(1e-6) == k);
        let nb = null_space(&b, 1e-9).unwrap();
        let nab = null_space(&(&a * &b), 1e-9).unwrap();
        prop_assert_eq!(nb.ncols(), n - r);
        let angle = max_principal_angle(&nb, &nab).unwrap();
        prop_assert!(angle < 1e-8, "angle {}", angle);
    }
}

#[test]
fn likelihood_is_coordinate_free() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for name in BUILTIN_MODELS {
        let model = builtin(name).unwrap();
        let data = default_dataset(&model, DEFAULT_SEED).unwrap();
        let centre = model.true_params.clone().unwrap();
        let analysis = analyze(&model, &centre, &Tolerances::default()).unwrap();
        let coords = build_reparam(&analysis, false).unwrap();
        let plain = LikelihoodProblem::new(model.clone(), data).unwrap();
        let rep = plain.clone().with_coordinates(coords.clone()).unwrap();
        for _ in 0..100 {
            let theta = near_point(&mut rng, &centre, 3.0, &model.bounds);
            let back = coords.inverse(&coords.forward(&theta));
            let l0 = plain.loglik_original(&theta).unwrap();
            let l1 = plain.loglik_original(&back).unwrap();
            let l2 = rep.loglik(&coords.forward(&theta)).unwrap();
            assert!(same(l0, l1, 1e-10), "{name} {theta:?}: {l0} vs {l1}");
            assert!(same(l0, l2, 1e-10), "{name} {theta:?}: {l0} vs {l2}");
        }
    }
}

#[test]
fn likelihood_is_coordinate_free_across_the_box() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    for name in BUILTIN_MODELS {
        let model = builtin(name).unwrap();
        let data = default_dataset(&model, DEFAULT_SEED).unwrap();
        let analysis = analyze(&model, model.true_params.as_ref().unwrap(), &Tolerances::default()).unwrap();
        let coords = build_reparam(&analysis, false).unwrap();
        let plain = LikelihoodProblem::new(model.clone(), data).unwrap();
        for _ in 0..100 {
            let theta = interior_point(&mut rng, &model.bounds);
            let l0 = plain.loglik_original(&theta).unwrap();
            let l1 = plain.loglik_original(&coords.inverse(&coords.forward(&theta))).unwrap();
            assert!(same(l0, l1, 1e-12 * l0.abs().max(1.0)), "{name} {theta:?}: {l0} vs {l1}");
        }
    }
}

#[test]
fn rounded_coordinates_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for name in BUILTIN_MODELS {
        let model = builtin(name).unwrap();
        let analysis = analyze(&model, model.true_params.as_ref().unwrap(), &Tolerances::default()).unwrap();
        let coords = build_reparam(&analysis, true).unwrap();
        for _ in 0..100 {
            let theta = interior_point(&mut rng, &model.bounds);
            let back = coords.inverse(&coords.forward(&theta));
            for (a, b) in theta.iter().zip(&back) {
                assert!((a - b).abs() <= 1e-12 * a.abs(), "{name}");
            }
        }
    }
}

#[test]
fn flow_loglik_is_scale_invariant() {
    let model = builtin("flow").unwrap();
    let problem = LikelihoodProblem::new(model.clone(), iir::models::paper_dataset("flow").unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (lo, hi) = (model.bounds.lower[0], model.bounds.upper[0]);
    for _ in 0..100 {
        let theta = interior_point(&mut rng, &model.bounds);
        let tmin = theta.iter().cloned().fold(f64::INFINITY, f64::min);
        let tmax = theta.iter().cloned().fold(0.0, f64::max);
        let c = rng.random_range((lo / tmin).ln()..(hi / tmax).ln()).exp();
        let scaled: Vec<f64> = theta.iter().map(|t| c * t).collect();
        let a = problem.loglik_original(&theta).unwrap();
        let b = problem.loglik_original(&scaled).unwrap();
        assert!(same(a, b, 1e-10), "c = {c}: {a} vs {b}");
    }
}

#[test]
fn flow_null_direction_everywhere() {
    let model = builtin("flow").unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let points: Vec<Vec<f64>> = (0..10).map(|_| interior_point(&mut rng, &model.bounds)).collect();
    let report = invariance_check(&model, &points, &Tolerances::default()).unwrap();
    assert!(report.pass);
    assert!(report.ranks.iter().all(|&r| r == 2));
    let oracle = Matrix::from_element(3, 1, 1.0 / 3f64.sqrt());
    for cols in &report.null_spaces {
        let ns = Matrix::from_column_slice(3, cols.len(), &cols.concat());
        assert!(max_principal_angle(&oracle, &ns).unwrap() < 1e-6);
    }
}

#[test]
fn structural_ranks_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for (name, rank) in [("stat-poisson-limit", 1), ("stat-binomial", 2), ("mm-full", 2), ("mm-reduced", 1), ("flow", 2)] {
        let model = builtin(name).unwrap();
        for _ in 0..5 {
            let theta = interior_point(&mut rng, &model.bounds);
            let a = analyze(&model, &theta, &Tolerances::default()).unwrap();
            assert_eq!(a.rank(), rank, "{name} at {theta:?}");
        }
    }
}
