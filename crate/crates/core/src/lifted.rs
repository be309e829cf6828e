//! Discrete SISO transfer functions and their finite-time (lifted) convolution matrices.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// `H(z) = (b0 + b1 z^-1 + ...) / (a0 + a1 z^-1 + ...)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransferFunction {
    num: Vec<f64>,
    den: Vec<f64>,
    ts: f64,
}

impl TransferFunction {
    pub fn new(num: Vec<f64>, den: Vec<f64>, ts: f64) -> Result<Self> {
        if den.is_empty() || den[0] == 0.0 || !den[0].is_finite() {
            return Err(Error::InvalidSystem(
                "denominator leading coefficient must be nonzero".into(),
            ));
        }
        if num.is_empty() {
            return Err(Error::InvalidSystem("numerator is empty".into()));
        }
        if num.len() > den.len() {
            return Err(Error::InvalidSystem(format!(
                "numerator has {} coefficients but denominator only {}",
                num.len(),
                den.len()
            )));
        }
        if num.iter().chain(&den).any(|c| !c.is_finite()) {
            return Err(Error::InvalidSystem("non-finite coefficient".into()));
        }
        if !(ts > 0.0 && ts.is_finite()) {
            return Err(Error::InvalidSystem(format!(
                "sample time {ts} must be positive"
            )));
        }
        Ok(Self { num, den, ts })
    }

    pub fn gain(k: f64, ts: f64) -> Result<Self> {
        Self::new(vec![k], vec![1.0], ts)
    }

    /// `z^-d`.
    pub fn delay(d: usize, ts: f64) -> Result<Self> {
        let mut num = vec![0.0; d + 1];
        num[d] = 1.0;
        let mut den = vec![0.0; d + 1];
        den[0] = 1.0;
        Self::new(num, den, ts)
    }

    pub fn numerator(&self) -> &[f64] {
        &self.num
    }

    pub fn denominator(&self) -> &[f64] {
        &self.den
    }

    pub fn sample_time(&self) -> f64 {
        self.ts
    }

    /// Value of `H` at `z = infinity`.
    pub fn feedthrough(&self) -> f64 {
        self.num[0] / self.den[0]
    }

    pub fn impulse_response(&self, n: usize) -> Vec<f64> {
        let a0 = self.den[0];
        let mut h = vec![0.0; n];
        for k in 0..n {
            let mut acc = if k < self.num.len() { self.num[k] } else { 0.0 };
            for (i, &ai) in self.den.iter().enumerate().skip(1).take(k) {
                acc -= ai * h[k - i];
            }
            h[k] = acc / a0;
        }
        h
    }
}

pub fn impulse_response(sys: &TransferFunction, n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Parameter(
            "impulse response length must be at least 1".into(),
        ));
    }
    Ok(sys.impulse_response(n))
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

fn poly_add(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len().max(b.len())];
    for (i, &x) in a.iter().enumerate() {
        out[i] += x;
    }
    for (i, &y) in b.iter().enumerate() {
        out[i] += y;
    }
    out
}

/// Finite-time convolution matrix of a (usually causal) LTI system.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedOperator {
    matrix: DMatrix<f64>,
    impulse: Option<Vec<f64>>,
}

impl LiftedOperator {
    pub fn identity(n: usize) -> Self {
        let mut h = vec![0.0; n];
        if n > 0 {
            h[0] = 1.0;
        }
        Self::from_impulse_unchecked(h)
    }

    /// Wraps an arbitrary square matrix. Only used where structure is not known up front.
    pub fn from_matrix(matrix: DMatrix<f64>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(Error::dim(
                "lifted operator must be square",
                matrix.nrows(),
                matrix.ncols(),
            ));
        }
        Ok(Self {
            matrix,
            impulse: None,
        })
    }

    fn from_impulse_unchecked(h: Vec<f64>) -> Self {
        let n = h.len();
        let matrix = DMatrix::from_fn(n, n, |i, j| if i >= j { h[i - j] } else { 0.0 });
        Self {
            matrix,
            impulse: Some(h),
        }
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// First column, when the operator was built from an impulse response.
    pub fn impulse(&self) -> Option<&[f64]> {
        self.impulse.as_deref()
    }

    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.len() {
            return Err(Error::dim(
                "signal length vs operator size",
                self.len(),
                u.len(),
            ));
        }
        Ok(&self.matrix * u)
    }

    /// `H M`, one column at a time.
    pub fn apply_columns(&self, m: &DMatrix<f64>, exec: Execution) -> Result<DMatrix<f64>> {
        if m.nrows() != self.len() {
            return Err(Error::dim(
                "matrix rows vs operator size",
                self.len(),
                m.nrows(),
            ));
        }
        let cols = par::map_indices(exec, m.ncols(), |j| &self.matrix * m.column(j));
        Ok(DMatrix::from_columns(&cols))
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            matrix: &self.matrix * k,
            impulse: self
                .impulse
                .as_ref()
                .map(|h| h.iter().map(|x| x * k).collect()),
        }
    }

    /// True when the matrix is lower triangular and constant along every diagonal.
    pub fn is_lower_toeplitz(&self, tol: f64) -> bool {
        let n = self.len();
        let scale = self.matrix.amax().max(f64::MIN_POSITIVE);
        for j in 0..n {
            for i in 0..n {
                let expect = if i >= j { self.matrix[(i - j, 0)] } else { 0.0 };
                if (self.matrix[(i, j)] - expect).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }
}

pub fn toeplitz_from_impulse(h: &[f64], n: usize) -> Result<LiftedOperator> {
    if h.len() != n {
        return Err(Error::dim(
            "impulse response length vs trial length",
            n,
            h.len(),
        ));
    }
    Ok(LiftedOperator::from_impulse_unchecked(h.to_vec()))
}

/// Sensitivity `S = 1/(1+PC)` and process sensitivity `J = PS`, lifted over `n` samples.
pub fn closed_loop_operators(
    p: &TransferFunction,
    c: &TransferFunction,
    n: usize,
) -> Result<(LiftedOperator, LiftedOperator)> {
    if n == 0 {
        return Err(Error::Parameter("trial length must be at least 1".into()));
    }
    let loop_d = p.feedthrough() * c.feedthrough();
    if (1.0 + loop_d).abs() <= 1e-12 * (1.0 + loop_d.abs()) {
        return Err(Error::IllPosedLoop);
    }
    let pd_cd = poly_mul(p.denominator(), c.denominator());
    let pn_cn = poly_mul(p.numerator(), c.numerator());
    let pn_cd = poly_mul(p.numerator(), c.denominator());
    let den = poly_add(&pd_cd, &pn_cn);
    let ts = p.sample_time();
    let s = TransferFunction::new(pd_cd, den.clone(), ts)?;
    let j = TransferFunction::new(pn_cd, den, ts)?;
    let hs = s.impulse_response(n);
    let hj = j.impulse_response(n);
    Ok((
        LiftedOperator::from_impulse_unchecked(hs),
        LiftedOperator::from_impulse_unchecked(hj),
    ))
}

/// Lifted operator of a single transfer function.
pub fn lift(sys: &TransferFunction, n: usize) -> Result<LiftedOperator> {
    let h = impulse_response(sys, n)?;
    toeplitz_from_impulse(&h, n)
}
