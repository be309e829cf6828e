mod common;

use common::{
    gaussian_matrix, gaussian_vector, kkt_violation, oracle_deviation, random_instance,
    standardized,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sbf_ilc::basis::BasisMatrix;
use sbf_ilc::lifted::toeplitz_from_impulse;
use sbf_ilc::norm_optimal::{cost, Weights};
use sbf_ilc::sparse::oracle::{duality_gap, lasso_oracle, lasso_oracle_with, OracleOptions};
use sbf_ilc::sparse::{build_regression, debias, lars_lasso, sparse_update, RegressionProblem};
use sbf_ilc::Error;

struct Instance {
    j: sbf_ilc::lifted::LiftedOperator,
    psi: BasisMatrix,
    w: Weights,
    e: DVector<f64>,
    theta: DVector<f64>,
}

fn instance(seed: u64, change: f64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 15;
    let h: Vec<f64> = gaussian_vector(&mut rng, n)
        .iter()
        .enumerate()
        .map(|(k, x)| x * 0.6f64.powi(k as i32))
        .collect();
    Instance {
        j: toeplitz_from_impulse(&h, n).unwrap(),
        psi: BasisMatrix::custom(gaussian_matrix(&mut rng, n, 4)).unwrap(),
        w: Weights::new(
            gaussian_vector(&mut rng, n).map(|x| 1.0 + x.abs()),
            gaussian_vector(&mut rng, n).map(|x| 0.1 * x.abs()),
            gaussian_vector(&mut rng, n).map(|x| change * x.abs()),
        )
        .unwrap(),
        e: gaussian_vector(&mut rng, n),
        theta: gaussian_vector(&mut rng, 4),
    }
}

#[test]
fn regression_blocks_without_effort_weights() {
    let mut inst = instance(1, 0.0);
    inst.w.effort.fill(0.0);
    let n = inst.e.len();
    let prob = build_regression(&inst.e, &inst.theta, &inst.j, &inst.psi, &inst.w).unwrap();
    assert_eq!(prob.y().len(), 3 * n);
    assert!(prob.x().rows(n, 2 * n).iter().all(|&x| x == 0.0));
    assert!(prob.y().rows(n, 2 * n).iter().all(|&x| x == 0.0));
    let se = inst.w.error.map(f64::sqrt);
    let top = DMatrix::from_diagonal(&se) * inst.j.matrix() * inst.psi.matrix();
    assert!((prob.x().rows(0, n) - top).amax() <= 1e-12);
}

#[test]
fn response_top_block_at_zero_parameters() {
    let inst = instance(2, 0.5);
    let n = inst.e.len();
    let prob = build_regression(&inst.e, &DVector::zeros(4), &inst.j, &inst.psi, &inst.w).unwrap();
    let want = inst.e.component_mul(&inst.w.error.map(f64::sqrt));
    assert!((prob.y().rows(0, n) - want).amax() <= 1e-14);
}

#[test]
fn regression_residual_is_twice_the_cost() {
    for seed in 0..10 {
        let inst = instance(seed, 0.7);
        let prob = build_regression(&inst.e, &inst.theta, &inst.j, &inst.psi, &inst.w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let offsets: Vec<f64> = (0..50)
            .map(|_| {
                let t = gaussian_vector(&mut rng, 4) * 3.0;
                let lhs = (prob.y() - prob.x() * &t).norm_squared();
                let c = cost(&inst.j, &inst.psi, &inst.w, &inst.theta, &inst.e, &t).unwrap();
                (lhs - 2.0 * c) / lhs.max(1.0)
            })
            .collect();
        let mean = offsets.iter().sum::<f64>() / offsets.len() as f64;
        let var = offsets.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / offsets.len() as f64;
        assert!(var < 1e-10, "variance {var}");
        assert!(mean.abs() < 1e-12, "offset {mean}");
    }
}

#[test]
fn univariate_path() {
    let prob = RegressionProblem::new(
        DMatrix::from_column_slice(4, 1, &[1.0, 0.0, 0.0, 0.0]),
        DVector::from_vec(vec![2.0, 0.0, 0.0, 0.0]),
    )
    .unwrap();
    let path = lars_lasso(&prob, 1).unwrap();
    assert_eq!(path.breakpoints[0].coef, DVector::zeros(1));
    let end = path.breakpoints.last().unwrap();
    assert_eq!(end.active, vec![0]);
    assert!((end.coef[0] - 2.0).abs() < 1e-14);
    assert!(path.exhausted);
}

#[test]
fn orthonormal_design_soft_thresholds() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let q = gaussian_matrix(&mut rng, 20, 6).qr().q();
    let y = gaussian_vector(&mut rng, 20);
    let prob = RegressionProblem::new(q.clone(), y.clone()).unwrap();
    let path = lars_lasso(&prob, 6).unwrap();
    let c = q.tr_mul(&y);
    let soft = |lambda: f64| c.map(|x| x.signum() * (x.abs() - lambda / 2.0).max(0.0));
    for bp in &path.breakpoints {
        assert!((&bp.coef - soft(bp.lambda)).amax() < 1e-10);
        if bp.coef.iter().any(|&x| x != 0.0) {
            let refit = debias(&prob, &bp.coef).unwrap();
            assert!(bp
                .active
                .iter()
                .all(|&i| bp.coef[i].abs() <= refit.theta[i].abs() + 1e-12));
        }
        assert!((&bp.coef - lasso_oracle(&q, &y, bp.lambda)).amax() < 1e-6);
    }
    let mid = 0.5 * (path.breakpoints[2].lambda + path.breakpoints[3].lambda);
    assert!((path.coef_at(mid).unwrap() - soft(mid)).amax() < 1e-10);
}

#[test]
fn terminal_breakpoint_matches_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = gaussian_matrix(&mut rng, 30, 10);
    for mut c in x.column_iter_mut() {
        c.normalize_mut();
    }
    let y = gaussian_vector(&mut rng, 30);
    let prob = RegressionProblem::new(x.clone(), y.clone()).unwrap();
    let path = lars_lasso(&prob, 5).unwrap();
    let end = path.breakpoints.last().unwrap();
    assert_eq!(end.active.len(), 5);
    assert!((&end.coef - lasso_oracle(&x, &y, end.lambda)).amax() < 1e-6);
}

#[test]
fn mid_path_interpolation_matches_the_oracle() {
    let (prob, _) = random_instance(5);
    let path = lars_lasso(&prob, prob.n_params()).unwrap();
    let xs = prob.standardized_x();
    for w in path.breakpoints.windows(2) {
        let mid = 0.3 * w[0].lambda + 0.7 * w[1].lambda;
        let got = standardized(&prob, &path.coef_at(mid).unwrap());
        assert!((got - lasso_oracle(&xs, prob.y(), mid)).amax() < 1e-6);
    }
}

#[test]
fn oracle_limits() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = gaussian_matrix(&mut rng, 25, 5);
    let y = gaussian_vector(&mut rng, 25);
    let normal = (x.transpose() * &x)
        .cholesky()
        .unwrap()
        .solve(&x.tr_mul(&y));
    assert!((lasso_oracle(&x, &y, 0.0) - normal).amax() < 1e-10);
    let top = 2.0 * x.tr_mul(&y).amax();
    assert_eq!(lasso_oracle(&x, &y, top), DVector::zeros(5));
    assert_eq!(lasso_oracle(&x, &y, 3.0 * top), DVector::zeros(5));
    let res = lasso_oracle_with(&x, &y, 0.3 * top, OracleOptions::default());
    assert!(res.gap <= 1e-10 * y.norm_squared().max(1.0));
    assert!((duality_gap(&x, &y, 0.3 * top, &res.theta) - res.gap).abs() < 1e-12);
}

#[test]
fn zero_response_gives_an_empty_path() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let prob =
        RegressionProblem::new(gaussian_matrix(&mut rng, 10, 3), DVector::zeros(10)).unwrap();
    let (path, sol) = sparse_update(&prob, 2).unwrap();
    assert!(path.is_empty());
    assert_eq!(sol.theta, DVector::zeros(3));
    assert_eq!(sol.cardinality(), 0);
}

#[test]
fn collinear_columns_are_reported() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut x = gaussian_matrix(&mut rng, 20, 4);
    let c = x.column(0) * -3.0;
    x.set_column(2, &c);
    let y = x.column(0) * 2.0 + x.column(1) + gaussian_vector(&mut rng, 20) * 0.01;
    match lars_lasso(&RegressionProblem::new(x, y).unwrap(), 4) {
        Err(Error::Collinear { columns }) => {
            assert!(columns.contains(&0) && columns.contains(&2), "{columns:?}")
        }
        other => panic!("expected a collinearity error, got {other:?}"),
    }
}

#[test]
fn debias_examples() {
    let x = DMatrix::from_column_slice(3, 2, &[1.0, 2.0, 2.0, 0.5, -1.0, 0.0]);
    let y = DVector::from_vec(vec![1.0, 1.0, 3.0]);
    let prob = RegressionProblem::new(x.clone(), y.clone()).unwrap();
    let sol = debias(&prob, &DVector::from_vec(vec![0.1, 0.0])).unwrap();
    let c0 = x.column(0);
    assert!((sol.theta[0] - c0.dot(&y) / c0.dot(&c0)).abs() < 1e-14);
    assert_eq!(sol.theta[1], 0.0);
    assert_eq!(sol.support, vec![0]);
    let again = debias(&prob, &sol.theta).unwrap();
    assert!((again.theta - &sol.theta).amax() < 1e-14);
    assert!(matches!(
        debias(&prob, &DVector::zeros(2)),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn full_cardinality_is_least_squares() {
    // Nearly collinear lagged columns, where the path itself loses columns near zero penalty.
    let n = 200;
    let r: Vec<f64> = (0..n).map(|k| (k as f64 / 40.0).tanh()).collect();
    let x = DMatrix::from_fn(n, 8, |k, i| if k >= i { r[k - i] } else { 0.0 });
    let y = DVector::from_fn(n, |k, _| (k as f64 / 15.0).sin());
    let prob = RegressionProblem::new(x.clone(), y.clone()).unwrap();
    let (_, sol) = sparse_update(&prob, 8).unwrap();
    assert_eq!(sol.support, (0..8).collect::<Vec<_>>());
    let want = x.clone().svd(true, true).solve(&y, 0.0).unwrap();
    let fit = |t: &DVector<f64>| (&y - &x * t).norm();
    assert!((fit(&sol.theta) - fit(&want)).abs() <= 1e-9 * y.norm());
}

#[test]
fn noise_free_support_is_recovered() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = gaussian_matrix(&mut rng, 60, 12).qr().q() * 3.0;
    let mut truth = DVector::zeros(12);
    truth[2] = 1.5;
    truth[7] = -0.8;
    truth[10] = 2.2;
    let prob = RegressionProblem::new(x.clone(), &x * &truth).unwrap();
    let (_, sol) = sparse_update(&prob, 3).unwrap();
    assert_eq!(sol.support, vec![2, 7, 10]);
    assert!((sol.theta - truth).amax() < 1e-8);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn path_satisfies_its_invariants(seed in any::<u64>()) {
        let (prob, n_theta) = random_instance(seed);
        let path = lars_lasso(&prob, n_theta).unwrap();
        prop_assert!(path.breakpoints.windows(2).all(|w| w[1].lambda < w[0].lambda));
        prop_assert!(kkt_violation(&prob, &path) < 1e-6);
        prop_assert!(oracle_deviation(&prob, &path) < 1e-6);
        let end = path.breakpoints.last().unwrap();
        prop_assert!(end.active.len() <= n_theta);
        if !path.exhausted {
            prop_assert_eq!(end.active.len(), n_theta);
        }
    }

    #[test]
    fn debiasing_is_idempotent_and_undoes_shrinkage(seed in any::<u64>()) {
        let (prob, n_theta) = random_instance(seed);
        let (path, sol) = sparse_update(&prob, n_theta).unwrap();
        prop_assert!(sol.cardinality() <= n_theta);
        let again = debias(&prob, &sol.theta).unwrap();
        prop_assert!((&again.theta - &sol.theta).amax() <= 1e-9 * sol.theta.amax().max(1.0));
        let xa = DMatrix::from_columns(&sol.support.iter().map(|&j| prob.x().column(j)).collect::<Vec<_>>());
        let ta = DVector::from_iterator(sol.support.len(), sol.support.iter().map(|&j| sol.theta[j]));
        let normal = xa.tr_mul(&(prob.y() - &xa * &ta));
        prop_assert!(normal.amax() <= 1e-8 * (xa.norm() * prob.y().norm()).max(1.0));
        // Correlated designs can push single coordinates past the refit, the l1 norm cannot.
        for bp in path.breakpoints.iter().skip(1) {
            let refit = debias(&prob, &bp.coef).unwrap();
            let (biased, full) = (standardized(&prob, &bp.coef), standardized(&prob, &refit.theta));
            prop_assert!(biased.lp_norm(1) <= full.lp_norm(1) * (1.0 + 1e-9));
        }
    }

    #[test]
    fn column_scaling_does_not_change_the_selection(seed in any::<u64>(), scale in 0.01..100.0f64) {
        let (prob, n_theta) = random_instance(seed);
        let mut x = prob.x().clone();
        x.column_mut(0).scale_mut(scale);
        let scaled = RegressionProblem::new(x, prob.y().clone()).unwrap();
        let a = lars_lasso(&prob, n_theta).unwrap();
        let b = lars_lasso(&scaled, n_theta).unwrap();
        prop_assert_eq!(&a.breakpoints.last().unwrap().active, &b.breakpoints.last().unwrap().active);
    }
}
