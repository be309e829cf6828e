use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative size of the smallest `|R_ii|` below which a tall matrix is treated as rank deficient.
pub(crate) const RANK_TOL: f64 = 1e-12;

/// Thin QR of a tall matrix: `Q` is `m x n`, `R` is `n x n`.
pub(crate) fn thin_qr(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    (qr.q(), qr.r())
}

pub(crate) fn min_max_diag_ratio(r: &DMatrix<f64>) -> f64 {
    let d = r.diagonal().map(f64::abs);
    if d.is_empty() {
        return 1.0;
    }
    let max = d.max();
    if max == 0.0 {
        0.0
    } else {
        d.min() / max
    }
}

/// Columns that participate in a numerical dependency, found from the right singular vectors
/// belonging to negligible singular values.
pub(crate) fn dependent_columns(m: &DMatrix<f64>, tol: f64) -> Vec<usize> {
    let n = m.ncols();
    let norms: Vec<f64> = m.column_iter().map(|c| c.norm()).collect();
    let mut scaled = m.clone();
    for (j, mut c) in scaled.column_iter_mut().enumerate() {
        if norms[j] > 0.0 {
            c /= norms[j];
        }
    }
    let svd = scaled.svd(false, true);
    let Some(vt) = svd.v_t else {
        return (0..n).collect();
    };
    let smax = svd.singular_values.max();
    let mut cols = Vec::new();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= tol * smax || smax == 0.0 {
            for j in 0..n {
                if vt[(k, j)].abs() > 1e-6 && !cols.contains(&j) {
                    cols.push(j);
                }
            }
        }
    }
    for (j, &nrm) in norms.iter().enumerate() {
        if nrm == 0.0 && !cols.contains(&j) {
            cols.push(j);
        }
    }
    cols.sort_unstable();
    if cols.is_empty() {
        cols = (0..n).collect();
    }
    cols
}

/// `R^-1 B` for upper-triangular `R`.
pub(crate) fn solve_upper(r: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    r.solve_upper_triangular(b)
        .expect("triangular factor checked for singularity")
}

/// Least-squares solution of `m x = y` through a thin QR. `labels` maps columns to caller indices
/// for the error report.
pub(crate) fn least_squares(
    m: &DMatrix<f64>,
    y: &DVector<f64>,
    labels: &[usize],
) -> Result<DVector<f64>> {
    if m.nrows() < m.ncols() {
        return Err(Error::RankDeficient {
            columns: labels.to_vec(),
        });
    }
    let (q, r) = thin_qr(m);
    if min_max_diag_ratio(&r) <= RANK_TOL {
        let cols = dependent_columns(m, RANK_TOL.sqrt());
        return Err(Error::RankDeficient {
            columns: cols.into_iter().map(|c| labels[c]).collect(),
        });
    }
    let qty = q.transpose() * y;
    Ok(r.solve_upper_triangular(&qty)
        .expect("triangular factor checked for singularity"))
}
