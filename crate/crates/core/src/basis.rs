//! Feedforward basis matrices `Psi(r)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::trajectory::ReferenceSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisKind {
    Physical,
    Fir,
    Identity,
    Custom,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BasisMatrix {
    matrix: DMatrix<f64>,
    kind: BasisKind,
    preview: usize,
}

impl BasisMatrix {
    /// Any externally supplied `N x N_theta` matrix.
    pub fn custom(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.ncols() == 0 || matrix.nrows() == 0 {
            return Err(Error::Parameter("custom basis must be non-empty".into()));
        }
        Ok(Self {
            matrix,
            kind: BasisKind::Custom,
            preview: 0,
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn preview(&self) -> usize {
        self.preview
    }

    pub fn n_samples(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_params(&self) -> usize {
        self.matrix.ncols()
    }

    /// Feedforward `f = Psi theta`.
    pub fn feedforward(&self, theta: &DVector<f64>) -> Result<DVector<f64>> {
        if theta.len() != self.n_params() {
            return Err(Error::dim(
                "parameter vector vs basis columns",
                self.n_params(),
                theta.len(),
            ));
        }
        Ok(&self.matrix * theta)
    }
}

/// Columns `[v a s]`.
pub fn physical_basis(reference: &ReferenceSignal) -> Result<BasisMatrix> {
    let n = reference.len();
    for ch in [&reference.v, &reference.a, &reference.s] {
        if ch.len() != n {
            return Err(Error::dim(
                "derivative channel vs position length",
                n,
                ch.len(),
            ));
        }
    }
    let matrix = DMatrix::from_columns(&[
        reference.v.clone(),
        reference.a.clone(),
        reference.s.clone(),
    ]);
    Ok(BasisMatrix {
        matrix,
        kind: BasisKind::Physical,
        preview: 0,
    })
}

/// Column `i` is `r` shifted by `i - n_p` samples, zero outside the trial window.
pub fn fir_basis(r: &DVector<f64>, n_theta: usize, n_p: usize) -> Result<BasisMatrix> {
    let n = r.len();
    if n_theta == 0 || n_theta > n {
        return Err(Error::Parameter(format!(
            "FIR basis needs 1 <= N_theta <= N, got N_theta = {n_theta}, N = {n}"
        )));
    }
    if n_p >= n_theta {
        return Err(Error::Parameter(format!(
            "preview {n_p} must be smaller than N_theta = {n_theta}"
        )));
    }
    let matrix = DMatrix::from_fn(n, n_theta, |k, i| {
        let idx = k as isize - i as isize + n_p as isize;
        if idx >= 0 && (idx as usize) < n {
            r[idx as usize]
        } else {
            0.0
        }
    });
    Ok(BasisMatrix {
        matrix,
        kind: BasisKind::Fir,
        preview: n_p,
    })
}

pub fn identity_basis(n: usize) -> Result<BasisMatrix> {
    if n == 0 {
        return Err(Error::Parameter("identity basis needs N >= 1".into()));
    }
    Ok(BasisMatrix {
        matrix: DMatrix::identity(n, n),
        kind: BasisKind::Identity,
        preview: 0,
    })
}
