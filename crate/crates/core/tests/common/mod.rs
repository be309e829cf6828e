#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sbf_ilc::sparse::oracle::lasso_oracle;
use sbf_ilc::sparse::{LarsPath, RegressionProblem};

pub fn gaussian_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Random regression with uneven column scales and a sparse-plus-noise response.
pub fn random_instance(seed: u64) -> (RegressionProblem, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rows = rng.random_range(20..=60);
    let cols = rng.random_range(5..=20);
    let mut x = gaussian_matrix(&mut rng, rows, cols);
    for mut c in x.column_iter_mut() {
        c *= 10f64.powf(rng.random_range(-1.0..1.0));
    }
    let mut beta = DVector::zeros(cols);
    for _ in 0..rng.random_range(1..=cols) {
        beta[rng.random_range(0..cols)] = rng.sample::<f64, _>(StandardNormal);
    }
    let y = &x * &beta + gaussian_vector(&mut rng, rows) * 0.3;
    let n_theta = rng.random_range(1..=cols);
    (RegressionProblem::new(x, y).unwrap(), n_theta)
}

/// Coefficients in unit-norm column coordinates.
pub fn standardized(prob: &RegressionProblem, coef: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(coef.len(), |j, _| coef[j] * prob.column_norms()[j])
}

/// Largest deviation between each breakpoint and the oracle at its penalty.
pub fn oracle_deviation(prob: &RegressionProblem, path: &LarsPath) -> f64 {
    let xs = prob.standardized_x();
    path.breakpoints
        .iter()
        .map(|bp| {
            let want = lasso_oracle(&xs, prob.y(), bp.lambda);
            (standardized(prob, &bp.coef) - want).amax()
        })
        .fold(0.0, f64::max)
}

/// Worst relative violation of the optimality conditions over all breakpoints.
pub fn kkt_violation(prob: &RegressionProblem, path: &LarsPath) -> f64 {
    let xs = prob.standardized_x();
    let mut worst: f64 = 0.0;
    for bp in &path.breakpoints {
        let b = standardized(prob, &bp.coef);
        let corr = xs.tr_mul(&(prob.y() - &xs * &b));
        let half = 0.5 * bp.lambda;
        let scale = half.max(1e-9 * prob.y().norm());
        for j in 0..b.len() {
            let v = if bp.active.contains(&j) {
                (corr[j].abs() - half).abs()
            } else {
                (corr[j].abs() - half).max(0.0)
            };
            worst = worst.max(v / scale);
        }
    }
    worst
}
