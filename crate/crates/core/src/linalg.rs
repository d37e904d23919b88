//! Thin dense complex linear-algebra layer over `faer`.

use faer::{Mat, Side};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub type CMat = Mat<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn zeros(n: usize) -> CMat {
    Mat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn adjoint(m: &CMat) -> CMat {
    m.adjoint().to_owned()
}

pub fn trace(m: &CMat) -> C64 {
    (0..m.nrows().min(m.ncols())).map(|i| m[(i, i)]).sum()
}

pub fn max_abs(m: &CMat) -> f64 {
    let mut out = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            out = out.max(m[(i, j)].norm());
        }
    }
    out
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut out = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            out = out.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    out
}

pub fn frobenius(m: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            s += m[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Largest |M - M^dagger| entry.
pub fn hermitian_deviation(m: &CMat) -> f64 {
    let n = m.nrows();
    let mut out = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            out = out.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    out
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Leading `k x k` block.
pub fn leading_block(m: &CMat, k: usize) -> CMat {
    m.as_ref().submatrix(0, 0, k, k).to_owned()
}

pub fn scale(m: &CMat, s: C64) -> CMat {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)] * s)
}

/// `U^dagger M U` conjugation helpers.
pub fn conjugate_by(u: &CMat, m: &CMat) -> CMat {
    let tmp = u * m;
    &tmp * u.adjoint()
}

/// Spectral data of a Hermitian matrix: ascending eigenvalues and the unitary
/// whose columns are the eigenvectors.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Spectrum {
    /// `V diag(g(w)) V^dagger`.
    pub fn apply<F: Fn(f64) -> C64>(&self, g: F) -> CMat {
        let n = self.values.len();
        let gw: Vec<C64> = self.values.iter().map(|&w| g(w)).collect();
        let scaled = Mat::from_fn(n, n, |i, j| self.vectors[(i, j)] * gw[j]);
        &scaled * self.vectors.adjoint()
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Eigendecomposition of a Hermitian matrix; the input is checked first.
pub fn eigh(m: &CMat, tol: f64) -> Result<Spectrum> {
    let dev = hermitian_deviation(m);
    if dev > tol * (1.0 + max_abs(m)) {
        return Err(Error::NotHermitian(dev));
    }
    let evd = m.self_adjoint_eigen(Side::Lower).map_err(|_| Error::Eigen)?;
    let values = evd.S().column_vector().iter().map(|z| z.re).collect();
    Ok(Spectrum {
        values,
        vectors: evd.U().to_owned(),
    })
}

/// `exp(i H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat) -> Result<CMat> {
    let eig = eigh(h, 1e-10)?;
    Ok(eig.apply(|w| C64::from_polar(1.0, w)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectrum_round_trip() {
        let m = Mat::from_fn(3, 3, |i, j| {
            if i == j {
                C64::new(i as f64, 0.0)
            } else if i < j {
                C64::new(0.3, 0.1 * (i + j) as f64)
            } else {
                C64::new(0.3, -0.1 * (i + j) as f64)
            }
        });
        let eig = eigh(&m, 1e-12).unwrap();
        let back = eig.apply(|w| C64::new(w, 0.0));
        assert!(max_abs_diff(&back, &m) < 1e-12);
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = Mat::from_fn(2, 2, |i, j| C64::new((i + 2 * j) as f64, 0.0));
        assert!(matches!(eigh(&m, 1e-12), Err(Error::NotHermitian(_))));
    }
}
