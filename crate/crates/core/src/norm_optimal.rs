//! Quadratic (norm-optimal) parameter update.

use nalgebra::{DMatrix, DVector};

use crate::basis::BasisMatrix;
use crate::error::{Error, Result};
use crate::lifted::LiftedOperator;
use crate::linalg::{dependent_columns, min_max_diag_ratio, solve_upper, thin_qr, RANK_TOL};
use crate::par::Execution;

/// Diagonals of `W_e`, `W_f` and `W_df`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weights {
    pub error: DVector<f64>,
    pub effort: DVector<f64>,
    pub change: DVector<f64>,
}

impl Weights {
    pub fn new(error: DVector<f64>, effort: DVector<f64>, change: DVector<f64>) -> Result<Self> {
        let n = error.len();
        if effort.len() != n {
            return Err(Error::dim("effort weight length", n, effort.len()));
        }
        if change.len() != n {
            return Err(Error::dim("change weight length", n, change.len()));
        }
        for (name, w) in [("error", &error), ("effort", &effort), ("change", &change)] {
            if w.iter().any(|x| !(*x >= 0.0 && x.is_finite())) {
                return Err(Error::Parameter(format!(
                    "{name} weights must be finite and >= 0"
                )));
            }
        }
        Ok(Self {
            error,
            effort,
            change,
        })
    }

    pub fn uniform(n: usize, error: f64, effort: f64, change: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(n, error),
            DVector::from_element(n, effort),
            DVector::from_element(n, change),
        )
    }

    /// Accepts full weighting matrices as long as they are diagonal.
    pub fn from_matrices(
        error: &DMatrix<f64>,
        effort: &DMatrix<f64>,
        change: &DMatrix<f64>,
    ) -> Result<Self> {
        let diag = |name: &str, m: &DMatrix<f64>| -> Result<DVector<f64>> {
            if !m.is_square() {
                return Err(Error::dim("weight matrix columns", m.nrows(), m.ncols()));
            }
            let off = (0..m.nrows())
                .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
                .find(|&(i, j)| i != j && m[(i, j)] != 0.0);
            match off {
                Some((i, j)) => Err(Error::UnsupportedWeights(format!(
                    "{name} weight matrix has off-diagonal entry at ({i}, {j})"
                ))),
                None => Ok(m.diagonal()),
            }
        };
        Self::new(
            diag("error", error)?,
            diag("effort", effort)?,
            diag("change", change)?,
        )
    }

    pub fn len(&self) -> usize {
        self.error.len()
    }

    /// At least one sample carries error weight; otherwise learning has nothing to minimize.
    pub fn weights_error(&self) -> bool {
        self.error.iter().any(|&x| x > 0.0)
    }

    pub fn is_empty(&self) -> bool {
        self.error.is_empty()
    }

    pub(crate) fn sqrt(&self) -> [DVector<f64>; 3] {
        [
            self.error.map(f64::sqrt),
            self.effort.map(f64::sqrt),
            self.change.map(f64::sqrt),
        ]
    }
}

/// Learning matrix `L` and robustness matrix `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMatrices {
    pub l: DMatrix<f64>,
    pub q: DMatrix<f64>,
}

fn row_scale(d: &DVector<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

fn check_dims(j: &LiftedOperator, psi: &BasisMatrix, w: &Weights) -> Result<()> {
    if psi.n_samples() != j.len() {
        return Err(Error::dim(
            "basis rows vs trial length",
            j.len(),
            psi.n_samples(),
        ));
    }
    if w.len() != j.len() {
        return Err(Error::dim(
            "weight length vs trial length",
            j.len(),
            w.len(),
        ));
    }
    Ok(())
}

pub fn lq_matrices(j: &LiftedOperator, psi: &BasisMatrix, w: &Weights) -> Result<UpdateMatrices> {
    lq_matrices_with(j, psi, w, Execution::default())
}

/// Solves through a thin QR of `[sqrt(We) J Psi; sqrt(Wf) Psi; sqrt(Wdf) Psi]`, whose Gram
/// matrix is the normal matrix of the quadratic cost.
pub fn lq_matrices_with(
    j: &LiftedOperator,
    psi: &BasisMatrix,
    w: &Weights,
    exec: Execution,
) -> Result<UpdateMatrices> {
    check_dims(j, psi, w)?;
    let n = j.len();
    let p = psi.n_params();
    let [se, sf, sd] = w.sqrt();
    let jpsi = j.apply_columns(psi.matrix(), exec)?;
    let a_top = row_scale(&se, &jpsi);
    let a_eff = row_scale(&sf, psi.matrix());
    let a_chg = row_scale(&sd, psi.matrix());

    let mut stacked = DMatrix::zeros(3 * n, p);
    stacked.rows_mut(0, n).copy_from(&a_top);
    stacked.rows_mut(n, n).copy_from(&a_eff);
    stacked.rows_mut(2 * n, n).copy_from(&a_chg);
    if 3 * n < p {
        return Err(Error::RankDeficient {
            columns: (0..p).collect(),
        });
    }
    let (q, r) = thin_qr(&stacked);
    if min_max_diag_ratio(&r) <= RANK_TOL {
        return Err(Error::RankDeficient {
            columns: dependent_columns(&stacked, 1e-8),
        });
    }
    let q_top = q.rows(0, n);
    let q_chg = q.rows(2 * n, n);

    let mut qt_we = q_top.transpose();
    for (k, mut col) in qt_we.column_iter_mut().enumerate() {
        col *= se[k];
    }
    let l = solve_upper(&r, &qt_we);
    let rhs = q_top.transpose() * &a_top + q_chg.transpose() * &a_chg;
    let q = solve_upper(&r, &rhs);
    Ok(UpdateMatrices { l, q })
}

/// `theta_{j+1} = Q theta_j + L e_j`.
pub fn no_update(
    theta: &DVector<f64>,
    e: &DVector<f64>,
    m: &UpdateMatrices,
) -> Result<DVector<f64>> {
    if theta.len() != m.q.ncols() {
        return Err(Error::dim(
            "parameter length vs Q",
            m.q.ncols(),
            theta.len(),
        ));
    }
    if e.len() != m.l.ncols() {
        return Err(Error::dim("error length vs L", m.l.ncols(), e.len()));
    }
    Ok(&m.q * theta + &m.l * e)
}

/// Quadratic cost of choosing `theta_next` after a trial with parameters `theta` and error `e`.
pub fn cost(
    j: &LiftedOperator,
    psi: &BasisMatrix,
    w: &Weights,
    theta: &DVector<f64>,
    e: &DVector<f64>,
    theta_next: &DVector<f64>,
) -> Result<f64> {
    check_dims(j, psi, w)?;
    let dtheta = theta_next - theta;
    let e_next = e - j.apply(&psi.feedforward(&dtheta)?)?;
    let f_next = psi.feedforward(theta_next)?;
    let df = psi.feedforward(&dtheta)?;
    let quad = |wd: &DVector<f64>, x: &DVector<f64>| -> f64 {
        wd.iter().zip(x.iter()).map(|(wi, xi)| wi * xi * xi).sum()
    };
    Ok(0.5 * (quad(&w.error, &e_next) + quad(&w.effort, &f_next) + quad(&w.change, &df)))
}
