//! Single-atom operators in a truncated harmonic-trap energy basis.
//!
//! Units are natural (hbar = m = 1). The measured single-atom observable is the
//! momentum `p` and its partner in the kick is the position `q`.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Spectrum};

/// Truncated harmonic-oscillator energy basis.
#[derive(Clone, Debug, PartialEq)]
pub struct TrapBasis {
    pub dim: usize,
    pub omega: f64,
    /// Ground-state position width.
    pub dq0: f64,
    /// Ground-state momentum width.
    pub dp0: f64,
    pub energies: Vec<f64>,
}

impl TrapBasis {
    pub fn new(dim: usize, omega: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("basis dimension must be positive".into()));
        }
        if !(omega > 0.0 && omega.is_finite()) {
            return Err(Error::InvalidParameter(format!("trap frequency must be > 0, got {omega}")));
        }
        Ok(Self {
            dim,
            omega,
            dq0: (1.0 / (2.0 * omega)).sqrt(),
            dp0: (omega / 2.0).sqrt(),
            energies: (0..dim).map(|l| omega * (l as f64 + 0.5)).collect(),
        })
    }

    /// Same trap, different truncation.
    pub fn with_dim(&self, dim: usize) -> Result<Self> {
        Self::new(dim, self.omega)
    }

    fn lowering(&self) -> CMat {
        Mat::from_fn(self.dim, self.dim, |i, j| {
            if j == i + 1 {
                C64::new((j as f64).sqrt(), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        })
    }
}

/// Dense single-atom operator in the energy basis.
#[derive(Clone, Debug)]
pub struct SingleAtomOp {
    pub matrix: CMat,
}

impl SingleAtomOp {
    pub fn new(matrix: CMat) -> Self {
        assert_eq!(matrix.nrows(), matrix.ncols());
        Self { matrix }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        linalg::eigh(&self.matrix, 1e-12)
    }

    /// Leading `m x m` block, used when restricting to fewer modes.
    pub fn restrict(&self, m: usize) -> Self {
        Self::new(linalg::leading_block(&self.matrix, m))
    }

    pub fn adjoint(&self) -> Self {
        Self::new(linalg::adjoint(&self.matrix))
    }
}

/// `q = dq0 (a + a^dagger)`.
pub fn position_op(basis: &TrapBasis) -> SingleAtomOp {
    let a = basis.lowering();
    let sum = &a + a.adjoint();
    SingleAtomOp::new(linalg::scale(&sum, C64::new(basis.dq0, 0.0)))
}

/// `p = i dp0 (a^dagger - a)`.
pub fn momentum_op(basis: &TrapBasis) -> SingleAtomOp {
    let a = basis.lowering();
    let diff = a.adjoint().to_owned() - &a;
    SingleAtomOp::new(linalg::scale(&diff, C64::new(0.0, basis.dp0)))
}

/// Diagonal single-atom Hamiltonian `diag(E_lambda)`.
pub fn hamiltonian_op(basis: &TrapBasis) -> SingleAtomOp {
    SingleAtomOp::new(Mat::from_fn(basis.dim, basis.dim, |i, j| {
        if i == j {
            C64::new(basis.energies[i], 0.0)
        } else {
            C64::new(0.0, 0.0)
        }
    }))
}

/// `g(op)` through the eigendecomposition of a Hermitian `op`.
pub fn hermitian_function<G: Fn(f64) -> C64>(op: &SingleAtomOp, g: G) -> Result<SingleAtomOp> {
    Ok(SingleAtomOp::new(op.spectrum()?.apply(g)))
}

/// Scalar resolution amplitude `M(x) = (2 pi sigma^2)^(-1/4) exp(-x^2 / (4 sigma^2))`.
///
/// `|M|^2` is a unit-normalized Gaussian with standard deviation `sigma`.
pub fn amplitude(x: f64, sigma: f64) -> f64 {
    (2.0 * PI * sigma * sigma).powf(-0.25) * (-x * x / (4.0 * sigma * sigma)).exp()
}

/// Operator-valued resolution amplitude `M(a_val - meas_op)`.
pub fn resolution_amplitude(a_val: f64, sigma: f64, meas_op: &SingleAtomOp) -> Result<SingleAtomOp> {
    check_sigma(sigma)?;
    hermitian_function(meas_op, |w| C64::new(amplitude(a_val - w, sigma), 0.0))
}

pub(crate) fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidParameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

/// Linear feedback response `f(A) = s (A + A0)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearResponse {
    pub s: f64,
    pub a0: f64,
}

impl LinearResponse {
    pub fn new(s: f64, a0: f64) -> Self {
        Self { s, a0 }
    }

    pub fn eval(&self, a: f64) -> f64 {
        self.s * (a + self.a0)
    }
}

impl Default for LinearResponse {
    fn default() -> Self {
        Self { s: -1.0, a0: 0.0 }
    }
}

/// Sign of the kick exponent.
///
/// `Contract` is the sign for which `U^dagger p U = p + f / N_e` holds with the
/// kick generated by `q` (since `[q, p] = i`, this is `exp(+i f q / N_e)`).
/// `Flipped` exists only to check that the validation harness notices a wrong
/// sign.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KickSign {
    #[default]
    Contract,
    Flipped,
}

impl KickSign {
    pub fn factor(self) -> f64 {
        match self {
            KickSign::Contract => 1.0,
            KickSign::Flipped => -1.0,
        }
    }
}

/// Single-atom kick `exp(i f(a_val) conj_op / N_e)`.
pub fn kick_unitary(
    a_val: f64,
    response: LinearResponse,
    n_est: usize,
    conj_op: &SingleAtomOp,
) -> Result<SingleAtomOp> {
    kick_unitary_signed(a_val, response, n_est, conj_op, KickSign::Contract)
}

pub fn kick_unitary_signed(
    a_val: f64,
    response: LinearResponse,
    n_est: usize,
    conj_op: &SingleAtomOp,
    sign: KickSign,
) -> Result<SingleAtomOp> {
    if n_est == 0 {
        return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
    }
    let theta = sign.factor() * response.eval(a_val) / n_est as f64;
    hermitian_function(conj_op, |w| C64::from_polar(1.0, theta * w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{commutator, identity, leading_block, max_abs, max_abs_diff};
    use crate::quadrature::Grid;

    fn unit_basis(d: usize) -> TrapBasis {
        TrapBasis::new(d, 1.0).unwrap()
    }

    #[test]
    fn widths_are_minimum_uncertainty() {
        for omega in [0.3, 1.0, 7.5] {
            let b = TrapBasis::new(5, omega).unwrap();
            assert!((b.dq0 * b.dp0 - 0.5).abs() < 1e-15);
            for w in b.energies.windows(2) {
                assert!((w[1] - w[0] - omega).abs() < 1e-12);
            }
        }
        assert!(TrapBasis::new(0, 1.0).is_err());
        assert!(TrapBasis::new(3, -1.0).is_err());
    }

    #[test]
    fn two_level_ladder_forms() {
        let b = unit_basis(2);
        let q = position_op(&b).matrix;
        let p = momentum_op(&b).matrix;
        assert!((q[(0, 1)] - C64::new(b.dq0, 0.0)).norm() < 1e-15);
        assert!((q[(1, 0)] - C64::new(b.dq0, 0.0)).norm() < 1e-15);
        assert!(q[(0, 0)].norm() + q[(1, 1)].norm() < 1e-15);
        assert!((p[(0, 1)] - C64::new(0.0, -b.dp0)).norm() < 1e-15);
        assert!((p[(1, 0)] - C64::new(0.0, b.dp0)).norm() < 1e-15);
    }

    #[test]
    fn ground_state_second_moments() {
        let b = unit_basis(30);
        let q = position_op(&b).matrix;
        let p = momentum_op(&b).matrix;
        assert!(((&q * &q)[(0, 0)].re - b.dq0 * b.dq0).abs() < 1e-14);
        assert!(((&p * &p)[(0, 0)].re - b.dp0 * b.dp0).abs() < 1e-14);
        for i in 0..30 {
            assert!(q[(i, i)].norm() == 0.0);
        }
    }

    #[test]
    fn canonical_commutator_away_from_corner() {
        let d = 25;
        let b = unit_basis(d);
        let c = commutator(&position_op(&b).matrix, &momentum_op(&b).matrix);
        let lead = leading_block(&c, d - 1);
        let target = linalg::scale(&identity(d - 1), C64::new(0.0, 1.0));
        assert!(max_abs_diff(&lead, &target) <= 1e-12);
    }

    #[test]
    fn hermitian_function_identities() {
        let b = unit_basis(12);
        let p = momentum_op(&b);
        let same = hermitian_function(&p, |w| C64::new(w, 0.0)).unwrap();
        assert!(max_abs_diff(&same.matrix, &p.matrix) < 1e-12);
        let one = hermitian_function(&p, |_| C64::new(1.0, 0.0)).unwrap();
        assert!(max_abs_diff(&one.matrix, &identity(12)) < 1e-12);
        let sq = hermitian_function(&p, |w| C64::new(w * w, 0.0)).unwrap();
        assert!(max_abs_diff(&sq.matrix, &(&p.matrix * &p.matrix)) < 1e-10);
    }

    #[test]
    fn hermitian_function_rejects_non_hermitian() {
        let m = SingleAtomOp::new(Mat::from_fn(2, 2, |i, j| C64::new((i * 3 + j) as f64, 0.0)));
        assert!(matches!(
            hermitian_function(&m, |w| C64::new(w, 0.0)),
            Err(Error::NotHermitian(_))
        ));
    }

    #[test]
    fn scalar_amplitude_normalization() {
        let b = unit_basis(1);
        let p = momentum_op(&b);
        for sigma in [0.3, 1.0, 2.5] {
            let m = resolution_amplitude(0.0, sigma, &p).unwrap();
            let expect = (2.0 * PI * sigma * sigma).powf(-0.25);
            assert!((m.matrix[(0, 0)].re - expect).abs() < 1e-15);
            let g = Grid::composite(-12.0 * sigma, 12.0 * sigma, 64);
            let norm = g.integrate(|x| amplitude(x, sigma).powi(2));
            let var = g.integrate(|x| x * x * amplitude(x, sigma).powi(2));
            assert!((norm - 1.0).abs() < 1e-13);
            assert!((var - sigma * sigma).abs() < 1e-12 * sigma * sigma);
        }
        assert!(resolution_amplitude(0.0, 0.0, &p).is_err());
    }

    #[test]
    fn broad_amplitude_is_flat() {
        let b = unit_basis(10);
        let p = momentum_op(&b);
        let sigma = 1e3;
        let m = resolution_amplitude(0.0, sigma, &p).unwrap();
        let flat = linalg::scale(&identity(10), C64::new((2.0 * PI * sigma * sigma).powf(-0.25), 0.0));
        assert!(max_abs_diff(&m.matrix, &flat) / max_abs(&flat) < 1e-4);
    }

    #[test]
    fn povm_completeness() {
        let d = 20;
        let b = unit_basis(d);
        let p = momentum_op(&b);
        let sigma = 0.8;
        let eig = p.spectrum().unwrap();
        let half = 8.0 * sigma + 8.0 * b.dp0 * (d as f64).sqrt();
        let g = Grid::composite(-half, half, 512);
        let mut acc = linalg::zeros(d);
        for (a, w) in g.iter() {
            let m = eig.apply(|x| C64::new(amplitude(a - x, sigma), 0.0));
            acc += linalg::scale(&(m.adjoint() * &m), C64::new(w, 0.0));
        }
        let lead = leading_block(&acc, d - 2);
        assert!(max_abs_diff(&lead, &identity(d - 2)) < 1e-8);
    }

    #[test]
    fn amplitude_commutes_with_measured_operator() {
        let b = unit_basis(16);
        let p = momentum_op(&b);
        let m = resolution_amplitude(0.4, 0.7, &p).unwrap();
        assert!(max_abs(&commutator(&m.matrix, &p.matrix)) < 1e-12);
    }

    #[test]
    fn kick_identity_and_unitarity() {
        let b = unit_basis(40);
        let q = position_op(&b);
        let zero = kick_unitary(-2.0, LinearResponse::new(1.0, 2.0), 3, &q).unwrap();
        assert!(max_abs_diff(&zero.matrix, &identity(40)) < 1e-12);
        let u = kick_unitary(1.3, LinearResponse::new(-1.0, 0.0), 2, &q).unwrap();
        let uu = u.matrix.adjoint() * &u.matrix;
        assert!(max_abs_diff(&uu, &identity(40)) <= 1e-10);
        assert!(kick_unitary(1.0, LinearResponse::default(), 0, &q).is_err());
    }

    #[test]
    fn kick_shifts_momentum_by_response() {
        let b = unit_basis(40);
        let q = position_op(&b);
        let p = momentum_op(&b);
        // f(A) = 1 at A = 0 with s = 1, A0 = 1
        let u = kick_unitary(0.0, LinearResponse::new(1.0, 1.0), 1, &q).unwrap();
        let shifted = u.matrix.adjoint() * &p.matrix * &u.matrix;
        let target = &p.matrix + identity(40);
        let err = max_abs_diff(&leading_block(&shifted, 20), &leading_block(&target, 20));
        assert!(err <= 1e-6, "err = {err}");
        let wrong = kick_unitary_signed(0.0, LinearResponse::new(1.0, 1.0), 1, &q, KickSign::Flipped).unwrap();
        let shifted = wrong.matrix.adjoint() * &p.matrix * &wrong.matrix;
        let err = max_abs_diff(&leading_block(&shifted, 20), &leading_block(&target, 20));
        assert!(err > 1.0);
    }
}
