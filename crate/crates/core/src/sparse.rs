//! Cardinality-limited LASSO via least angle regression, followed by a least-squares refit.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::lifted::LiftedOperator;
use crate::linalg::{self, dependent_columns, min_max_diag_ratio, thin_qr};
use crate::norm_optimal::Weights;
use crate::par::Execution;

const COLLINEAR_TOL: f64 = 1e-13;
const TIE_TOL: f64 = 1e-12;
const IMMEDIATE_DROP: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    col_norms: Vec<f64>,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::dim(
                "response length vs predictor rows",
                x.nrows(),
                y.len(),
            ));
        }
        let col_norms = x.column_iter().map(|c| c.norm()).collect();
        Ok(Self { x, y, col_norms })
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn column_norms(&self) -> &[f64] {
        &self.col_norms
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    /// Same predictors, new response.
    pub fn with_response(&self, y: DVector<f64>) -> Result<Self> {
        if y.len() != self.x.nrows() {
            return Err(Error::dim(
                "response length vs predictor rows",
                self.x.nrows(),
                y.len(),
            ));
        }
        Ok(Self {
            x: self.x.clone(),
            y,
            col_norms: self.col_norms.clone(),
        })
    }

    /// Predictors with every nonzero column scaled to unit norm.
    pub fn standardized_x(&self) -> DMatrix<f64> {
        let mut xs = self.x.clone();
        for (j, mut c) in xs.column_iter_mut().enumerate() {
            if self.col_norms[j] > 0.0 {
                c /= self.col_norms[j];
            }
        }
        xs
    }
}

fn row_scaled(d: &DVector<f64>, m: &DMatrix<f64>, sign: f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= sign * d[i];
    }
    out
}

/// `X = [sqrt(We) J; -sqrt(Wf); -sqrt(Wdf)] Psi`, given `J Psi`.
pub fn predictor_matrix(
    jpsi: &DMatrix<f64>,
    psi: &BasisMatrix,
    w: &Weights,
) -> Result<DMatrix<f64>> {
    let n = psi.n_samples();
    if jpsi.shape() != psi.matrix().shape() {
        return Err(Error::dim("J Psi rows vs basis rows", n, jpsi.nrows()));
    }
    if w.len() != n {
        return Err(Error::dim("weight length vs trial length", n, w.len()));
    }
    let [se, sf, sd] = w.sqrt();
    let mut x = DMatrix::zeros(3 * n, psi.n_params());
    x.rows_mut(0, n).copy_from(&row_scaled(&se, jpsi, 1.0));
    x.rows_mut(n, n)
        .copy_from(&row_scaled(&sf, psi.matrix(), -1.0));
    x.rows_mut(2 * n, n)
        .copy_from(&row_scaled(&sd, psi.matrix(), -1.0));
    Ok(x)
}

/// `Y = [sqrt(We)(e + J Psi theta); 0; -sqrt(Wdf) Psi theta]`.
pub fn response_vector(
    e: &DVector<f64>,
    theta: &DVector<f64>,
    jpsi: &DMatrix<f64>,
    psi: &BasisMatrix,
    w: &Weights,
) -> Result<DVector<f64>> {
    let n = psi.n_samples();
    if e.len() != n {
        return Err(Error::dim("error length vs trial length", n, e.len()));
    }
    if theta.len() != psi.n_params() {
        return Err(Error::dim(
            "parameter length vs basis columns",
            psi.n_params(),
            theta.len(),
        ));
    }
    let [se, _, sd] = w.sqrt();
    let top = (e + jpsi * theta).component_mul(&se);
    let bottom = -(psi.matrix() * theta).component_mul(&sd);
    let mut y = DVector::zeros(3 * n);
    y.rows_mut(0, n).copy_from(&top);
    y.rows_mut(2 * n, n).copy_from(&bottom);
    Ok(y)
}

pub fn build_regression(
    e: &DVector<f64>,
    theta: &DVector<f64>,
    j: &LiftedOperator,
    psi: &BasisMatrix,
    w: &Weights,
) -> Result<RegressionProblem> {
    if psi.n_samples() != j.len() {
        return Err(Error::dim(
            "basis rows vs trial length",
            j.len(),
            psi.n_samples(),
        ));
    }
    let jpsi = j.apply_columns(psi.matrix(), Execution::Sequential)?;
    let x = predictor_matrix(&jpsi, psi, w)?;
    let y = response_vector(e, theta, &jpsi, psi, w)?;
    RegressionProblem::new(x, y)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Breakpoint {
    /// Penalty of `||Y - X theta||^2 + lambda ||theta||_1` in standardized coordinates.
    pub lambda: f64,
    pub active: Vec<usize>,
    /// Coefficients in the original column scaling.
    pub coef: DVector<f64>,
    /// Sign of each active correlation, aligned with `active`.
    pub signs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LarsPath {
    pub breakpoints: Vec<Breakpoint>,
    /// The path ran down to `lambda = 0` before reaching the target cardinality.
    pub exhausted: bool,
    n_params: usize,
}

impl LarsPath {
    /// Coefficients at the last breakpoint, zero for an empty path.
    pub fn terminal(&self) -> DVector<f64> {
        self.breakpoints
            .last()
            .map(|b| b.coef.clone())
            .unwrap_or_else(|| DVector::zeros(self.n_params))
    }

    pub fn is_empty(&self) -> bool {
        self.breakpoints.is_empty()
    }

    /// Linear interpolation of the coefficients at an intermediate penalty.
    pub fn coef_at(&self, lambda: f64) -> Option<DVector<f64>> {
        let bps = &self.breakpoints;
        let first = bps.first()?;
        if lambda >= first.lambda {
            return Some(DVector::zeros(self.n_params));
        }
        for w in bps.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if lambda <= a.lambda && lambda >= b.lambda {
                let t = (a.lambda - lambda) / (a.lambda - b.lambda);
                return Some(&a.coef * (1.0 - t) + &b.coef * t);
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    Enter(usize),
    Drop(usize),
    End,
}

fn sign(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// LARS with the LASSO modification, stopped once `n_theta` coefficients are nonzero and the
/// next variable would enter (or the path reaches `lambda = 0`).
pub fn lars_lasso(prob: &RegressionProblem, n_theta: usize) -> Result<LarsPath> {
    let p = prob.n_params();
    if n_theta == 0 || n_theta > p {
        return Err(Error::Parameter(format!(
            "target cardinality {n_theta} outside 1..={p}"
        )));
    }
    let d = prob.column_norms();
    let usable: Vec<bool> = d.iter().map(|&x| x > 0.0).collect();
    let xs = prob.standardized_x();
    let rescale = |beta: &DVector<f64>| {
        DVector::from_iterator(
            p,
            (0..p).map(|j| if usable[j] { beta[j] / d[j] } else { 0.0 }),
        )
    };

    let mut path = LarsPath {
        breakpoints: Vec::new(),
        exhausted: false,
        n_params: p,
    };
    let mut beta = DVector::<f64>::zeros(p);
    let mut res = prob.y().clone();
    let mut c = xs.tr_mul(&res);

    let cmax = (0..p)
        .filter(|&j| usable[j])
        .map(|j| c[j].abs())
        .fold(0.0, f64::max);
    if cmax == 0.0 {
        return Ok(path);
    }
    let first = (0..p)
        .find(|&j| usable[j] && c[j].abs() >= cmax * (1.0 - TIE_TOL))
        .expect("maximum is attained");
    let mut active = vec![first];
    let mut corr = cmax;
    path.breakpoints.push(Breakpoint {
        lambda: 2.0 * corr,
        active: active.clone(),
        coef: DVector::zeros(p),
        signs: vec![sign(c[first])],
    });
    let mut just_dropped: Option<usize> = None;

    for _ in 0..(50 * p + 100) {
        let xa = DMatrix::from_columns(&active.iter().map(|&j| xs.column(j)).collect::<Vec<_>>());
        let (q, r) = thin_qr(&xa);
        if min_max_diag_ratio(&r) < COLLINEAR_TOL {
            let local = dependent_columns(&xa, 1e-8);
            let mut columns: Vec<usize> = local.into_iter().map(|i| active[i]).collect();
            columns.sort_unstable();
            return Err(Error::Collinear { columns });
        }
        let s_a = DVector::from_iterator(active.len(), active.iter().map(|&j| sign(c[j])));
        let mut z = r
            .tr_solve_upper_triangular(&s_a)
            .expect("triangular factor checked for singularity");
        let aa = 1.0 / z.norm();
        z *= aa;
        let w = r
            .solve_upper_triangular(&z)
            .expect("triangular factor checked for singularity");
        let u = &q * &z;
        let a = xs.tr_mul(&u);

        let mut enter: Option<(usize, f64)> = None;
        for k in 0..p {
            if !usable[k] || active.contains(&k) || just_dropped == Some(k) {
                continue;
            }
            let g = path_gamma(corr, aa, a[k], c[k]);
            match enter {
                Some((_, best)) if g >= best * (1.0 - TIE_TOL) => {}
                _ if g.is_finite() => enter = Some((k, g)),
                _ => {}
            }
        }
        let mut step = corr / aa;
        let mut event = Event::End;
        if let Some((k, g)) = enter {
            if g <= step {
                step = g;
                event = Event::Enter(k);
            }
        }

        let mut drop_at = f64::INFINITY;
        let mut drop_idx = None;
        for (i, &k) in active.iter().enumerate() {
            if w[i] != 0.0 {
                let g = -beta[k] / w[i];
                if g > 0.0 && g < drop_at {
                    drop_at = g;
                    drop_idx = Some(i);
                }
            }
        }
        if let Some(i) = drop_idx {
            if drop_at < IMMEDIATE_DROP {
                let k = active.remove(i);
                beta[k] = 0.0;
                just_dropped = Some(k);
                let last = path.breakpoints.last_mut().expect("path has a start");
                last.coef = rescale(&beta);
                last.active = active.clone();
                last.signs = active.iter().map(|&j| sign(c[j])).collect();
                continue;
            }
            if drop_at < step {
                step = drop_at;
                event = Event::Drop(i);
            }
        }

        for (i, &k) in active.iter().enumerate() {
            beta[k] += step * w[i];
        }
        res -= &u * step;
        c = xs.tr_mul(&res);
        corr = (corr - step * aa).max(0.0);
        just_dropped = None;

        let stop = match event {
            Event::Drop(i) => {
                let k = active.remove(i);
                beta[k] = 0.0;
                just_dropped = Some(k);
                false
            }
            Event::Enter(k) => {
                if active.len() >= n_theta {
                    true
                } else {
                    active.push(k);
                    false
                }
            }
            Event::End => {
                corr = 0.0;
                path.exhausted = true;
                true
            }
        };
        path.breakpoints.push(Breakpoint {
            lambda: 2.0 * corr,
            active: active.clone(),
            coef: rescale(&beta),
            signs: active.iter().map(|&j| sign(c[j])).collect(),
        });
        if stop || corr == 0.0 {
            break;
        }
    }
    Ok(path)
}

fn path_gamma(corr: f64, aa: f64, a: f64, c: f64) -> f64 {
    let mut g = f64::INFINITY;
    for (num, den) in [(corr - c, aa - a), (corr + c, aa + a)] {
        if den > 1e-300 {
            g = g.min((num / den).max(0.0));
        }
    }
    g
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseSolution {
    pub support: Vec<usize>,
    pub biased: DVector<f64>,
    pub theta: DVector<f64>,
}

impl SparseSolution {
    pub fn cardinality(&self) -> usize {
        self.support.len()
    }
}

/// Unpenalized least-squares refit on the support of `biased`.
pub fn debias(prob: &RegressionProblem, biased: &DVector<f64>) -> Result<SparseSolution> {
    let p = prob.n_params();
    if biased.len() != p {
        return Err(Error::dim(
            "coefficient length vs predictor columns",
            p,
            biased.len(),
        ));
    }
    let support: Vec<usize> = (0..p).filter(|&j| biased[j] != 0.0).collect();
    refit(prob, support, biased)
}

fn refit(
    prob: &RegressionProblem,
    support: Vec<usize>,
    biased: &DVector<f64>,
) -> Result<SparseSolution> {
    let p = prob.n_params();
    if support.is_empty() {
        return Err(Error::Parameter(
            "debiasing needs at least one nonzero coefficient".into(),
        ));
    }
    let xa = DMatrix::from_columns(
        &support
            .iter()
            .map(|&j| prob.x().column(j))
            .collect::<Vec<_>>(),
    );
    let theta_a = linalg::least_squares(&xa, prob.y(), &support)?;
    let mut theta = DVector::zeros(p);
    for (i, &j) in support.iter().enumerate() {
        theta[j] = theta_a[i];
    }
    Ok(SparseSolution {
        support,
        biased: biased.clone(),
        theta,
    })
}

/// Full selection step: path to cardinality `n_theta`, then refit. An all-zero response gives
/// `theta = 0`. When `n_theta` admits every nonzero column the refit uses all of them, since the
/// path end at `lambda = 0` is the plain least-squares fit.
pub fn sparse_update(
    prob: &RegressionProblem,
    n_theta: usize,
) -> Result<(LarsPath, SparseSolution)> {
    let path = lars_lasso(prob, n_theta)?;
    let biased = path.terminal();
    let usable: Vec<usize> = (0..prob.n_params())
        .filter(|&j| prob.column_norms()[j] > 0.0)
        .collect();
    let solution = if path.is_empty() {
        SparseSolution {
            support: Vec::new(),
            biased: biased.clone(),
            theta: biased,
        }
    } else if n_theta >= usable.len() {
        refit(prob, usable, &biased)?
    } else if biased.iter().all(|&x| x == 0.0) {
        SparseSolution {
            support: Vec::new(),
            biased: biased.clone(),
            theta: biased,
        }
    } else {
        debias(prob, &biased)?
    };
    Ok((path, solution))
}

/// Proximal-gradient reference solver for `min ||Y - X theta||^2 + lambda ||theta||_1`.
pub mod oracle {
    use nalgebra::{DMatrix, DVector};

    #[derive(Debug, Clone, Copy)]
    pub struct OracleOptions {
        /// Stop once the duality gap is below `gap_tol * max(1, ||Y||^2)` or stops shrinking.
        pub gap_tol: f64,
        pub max_iter: usize,
    }

    impl Default for OracleOptions {
        fn default() -> Self {
            Self {
                gap_tol: 1e-16,
                max_iter: 200_000,
            }
        }
    }

    #[derive(Debug, Clone)]
    pub struct OracleResult {
        pub theta: DVector<f64>,
        pub gap: f64,
        pub iterations: usize,
    }

    fn soft(x: f64, t: f64) -> f64 {
        x.signum() * (x.abs() - t).max(0.0)
    }

    pub fn primal(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, theta: &DVector<f64>) -> f64 {
        (y - x * theta).norm_squared() + lambda * theta.lp_norm(1)
    }

    /// Gap between the primal value and the dual value at the scaled residual `u = s r`.
    ///
    /// Expanded as `(1 - s)^2 ||r||^2 + lambda ||theta||_1 - 2 s theta' X' r`, whose terms all
    /// vanish at the optimum, so the gap stays accurate far below `||Y||^2` machine precision.
    pub fn duality_gap(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        lambda: f64,
        theta: &DVector<f64>,
    ) -> f64 {
        let r = y - x * theta;
        let xr = x.tr_mul(&r);
        let corr = xr.amax();
        let s = if corr == 0.0 {
            1.0
        } else {
            (0.5 * lambda / corr).min(1.0)
        };
        (1.0 - s).powi(2) * r.norm_squared() + lambda * theta.lp_norm(1) - 2.0 * s * theta.dot(&xr)
    }

    pub fn lasso_oracle(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64) -> DVector<f64> {
        lasso_oracle_with(x, y, lambda, OracleOptions::default()).theta
    }

    /// Accelerated proximal gradient with backtracking and gradient-based restarts.
    pub fn lasso_oracle_with(
        x: &DMatrix<f64>,
        y: &DVector<f64>,
        lambda: f64,
        opts: OracleOptions,
    ) -> OracleResult {
        let p = x.ncols();
        if lambda == 0.0 {
            let theta = x
                .clone()
                .svd(true, true)
                .solve(y, 1e-14)
                .expect("both singular factors were requested");
            let gap = primal(x, y, 0.0, &theta) - (y - x * &theta).norm_squared();
            return OracleResult {
                theta,
                gap,
                iterations: 0,
            };
        }
        let scale = y.norm_squared().max(1.0);
        let mut step = 1.0 / (2.0 * x.norm_squared().max(f64::MIN_POSITIVE));
        let mut theta = DVector::zeros(p);
        let mut mom = theta.clone();
        let mut t_k = 1.0_f64;
        let mut gap = duality_gap(x, y, lambda, &theta);
        let mut iterations = 0;
        let (mut best, mut best_at) = (gap, 0);
        while iterations < opts.max_iter && gap > opts.gap_tol * scale {
            // Rounding puts a floor under the gap; stop once it no longer halves.
            if iterations - best_at > 2000 {
                break;
            }
            iterations += 1;
            let grad = x.tr_mul(&(x * &mom - y)) * 2.0;
            let next = loop {
                let cand = DVector::from_iterator(
                    p,
                    (0..p).map(|i| soft(mom[i] - step * grad[i], step * lambda)),
                );
                // The smooth part is quadratic, so the sufficient-decrease test reduces to this.
                let diff = &cand - &mom;
                if (x * &diff).norm_squared() <= diff.norm_squared() / (2.0 * step) {
                    break cand;
                }
                step *= 0.5;
            };
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
            let restart = (&mom - &next).dot(&(&next - &theta)) > 0.0;
            if restart {
                mom = next.clone();
                t_k = 1.0;
            } else {
                mom = &next + (&next - &theta) * ((t_k - 1.0) / t_next);
                t_k = t_next;
            }
            theta = next;
            if iterations % 10 == 0 {
                gap = duality_gap(x, y, lambda, &theta);
                if gap < 0.5 * best {
                    (best, best_at) = (gap, iterations);
                }
            }
        }
        gap = duality_gap(x, y, lambda, &theta);
        OracleResult {
            theta,
            gap,
            iterations,
        }
    }
}
