//! Dense eigensolver wrapper and the bilinear/sesquilinear vector algebra used
//! for complex-symmetric operators.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Eig, Factorize, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::HamiltonianMatrix;

/// Right eigenpairs of a dense matrix; `vectors` holds them column-wise.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Array1<Complex64>,
    pub vectors: Array2<Complex64>,
}

pub fn eig_dense(h: &HamiltonianMatrix) -> Result<EigenPairs> {
    let (values, vectors) = h.entries.eig().map_err(|e| Error::Eigen(e.to_string()))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("non-finite eigenvalue".into()));
    }
    Ok(EigenPairs { values, vectors })
}

/// Unconjugated product `aᵀ b`.
pub fn c_dot(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Hermitian product `a† b`.
pub fn h_dot(a: ArrayView1<Complex64>, b: ArrayView1<Complex64>) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm2(a: ArrayView1<Complex64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Scales `v` to `vᵀv = 1`. Returns `false` and leaves `v` unit 2-norm when
/// the c-norm is too small relative to the 2-norm to divide by safely.
pub fn c_normalize(v: &mut Array1<Complex64>) -> bool {
    let n2 = norm2(v.view());
    if n2 == 0.0 {
        return false;
    }
    v.mapv_inplace(|z| z / n2);
    let c = c_dot(v.view(), v.view());
    if c.norm() < 1e-150 {
        return false;
    }
    let s = c.sqrt();
    v.mapv_inplace(|z| z / s);
    true
}

/// `‖Hv − μv‖ / ‖v‖`.
pub fn residual(h: ArrayView2<Complex64>, v: ArrayView1<Complex64>, mu: Complex64) -> f64 {
    let hv = h.dot(&v);
    let r: f64 = hv
        .iter()
        .zip(v.iter())
        .map(|(a, b)| (a - mu * b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    r / norm2(v)
}

/// Shift-invert iteration at `shift` starting from `start`. Returns the
/// c-product Rayleigh quotient and the unit 2-norm iterate.
pub fn inverse_iteration(
    h: ArrayView2<Complex64>,
    shift: Complex64,
    start: ArrayView1<Complex64>,
    sweeps: usize,
) -> Result<(Complex64, Array1<Complex64>)> {
    let n = h.nrows();
    let mut a = h.to_owned();
    for i in 0..n {
        a[[i, i]] -= shift;
    }
    let lu = a.factorize().map_err(|e| Error::Eigen(e.to_string()))?;
    let mut w = start.to_owned();
    for _ in 0..sweeps.max(1) {
        w = lu.solve(&w).map_err(|e| Error::Eigen(e.to_string()))?;
        let nw = norm2(w.view());
        if !nw.is_finite() || nw == 0.0 {
            return Err(Error::Eigen("inverse iteration produced a degenerate iterate".into()));
        }
        w.mapv_inplace(|z| z / nw);
    }
    let hw = h.dot(&w);
    let den = c_dot(w.view(), w.view());
    let mu = if den.norm() > 1e-14 {
        c_dot(w.view(), hw.view()) / den
    } else {
        h_dot(w.view(), hw.view())
    };
    Ok((mu, w))
}
