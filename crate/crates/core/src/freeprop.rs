//! Free evolution of correlation fields between feedback loops.
//!
//! For non-interacting atoms the vector `Z = (A, B, N / N_e)` evolves linearly,
//! `Z(t) = V(t) Z(0)`, and each field operator only picks up its energy phase.
//! Hence
//!
//! `D_{mu lambda}(z, t) = D_{mu lambda}(V(t)^T z, 0) exp(-i (E_mu - E_lambda) t)`.

use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::corrdyn::{CorrelationField, Field, FieldKind, GaussianForm, ZVector};
use crate::error::{Error, Result};
use crate::hilbert::TrapBasis;
use crate::linalg::CMat;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PropagationKind {
    Harmonic,
    FreeParticle,
    Composite,
}

/// Linear map `Z(t) = V Z(0)` over the components `(A, B, N / N_e)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PropagationMatrix {
    pub v: [[f64; 3]; 3],
    pub t: f64,
    pub kind: PropagationKind,
}

/// Total momentum and summed position divided by `N_e` in a harmonic trap:
/// `A(t) = cos(wt) A - w N_e sin(wt) B`, `B(t) = sin(wt) / (w N_e) A + cos(wt) B`.
pub fn harmonic_vz(t: f64, omega: f64, n_est: usize) -> Result<PropagationMatrix> {
    if !(omega > 0.0) {
        return Err(Error::InvalidParameter("trap frequency must be positive".into()));
    }
    if n_est == 0 {
        return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
    }
    let ne = n_est as f64;
    let (s, c) = (omega * t).sin_cos();
    Ok(PropagationMatrix {
        v: [[c, -omega * ne * s, 0.0], [s / (omega * ne), c, 0.0], [0.0, 0.0, 1.0]],
        t,
        kind: PropagationKind::Harmonic,
    })
}

/// Untrapped atoms: `A(t) = A`, `B(t) = B + (t / N_e) A`.
pub fn free_particle_vz(t: f64, n_est: usize) -> Result<PropagationMatrix> {
    if n_est == 0 {
        return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
    }
    Ok(PropagationMatrix {
        v: [[1.0, 0.0, 0.0], [t / n_est as f64, 1.0, 0.0], [0.0, 0.0, 1.0]],
        t,
        kind: PropagationKind::FreeParticle,
    })
}

fn matmul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

fn transpose(a: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[j][i];
        }
    }
    out
}

impl PropagationMatrix {
    pub fn identity() -> Self {
        Self {
            v: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            t: 0.0,
            kind: PropagationKind::Composite,
        }
    }

    /// `self * other`: evolve by `other` first, then by `self`.
    pub fn compose(&self, other: &PropagationMatrix) -> PropagationMatrix {
        let kind = if self.kind == other.kind { self.kind } else { PropagationKind::Composite };
        PropagationMatrix { v: matmul(&self.v, &other.v), t: self.t + other.t, kind }
    }

    /// Inverse of the upper 2x2 block (the third row and column are trivial).
    pub fn inverse(&self) -> Result<PropagationMatrix> {
        let v = &self.v;
        let det = v[0][0] * v[1][1] - v[0][1] * v[1][0];
        if det.abs() < 1e-300 {
            return Err(Error::InvalidParameter("singular propagation matrix".into()));
        }
        Ok(PropagationMatrix {
            v: [
                [v[1][1] / det, -v[0][1] / det, 0.0],
                [-v[1][0] / det, v[0][0] / det, 0.0],
                [0.0, 0.0, 1.0],
            ],
            t: -self.t,
            kind: self.kind,
        })
    }

    /// `V^T z`.
    pub fn apply_transpose(&self, z: ZVector) -> ZVector {
        let z = z.to_array();
        let vt = transpose(&self.v);
        ZVector::from_array([0, 1, 2].map(|i| (0..3).map(|k| vt[i][k] * z[k]).sum()))
    }

    /// Largest entry of `|self - other|`.
    pub fn max_abs_diff(&self, other: &PropagationMatrix) -> f64 {
        self.v
            .iter()
            .flatten()
            .zip(other.v.iter().flatten())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Field after free evolution for a time `t`, evaluated lazily.
pub struct EvolvedField {
    inner: Field,
    prop: PropagationMatrix,
    /// `exp(-i (E_mu - E_lambda) t)` per entry.
    phases: CMat,
}

impl EvolvedField {
    pub fn propagation(&self) -> &PropagationMatrix {
        &self.prop
    }
}

/// Coherence phases `exp(-i (E_mu - E_lambda) t)` in the energy basis.
pub fn coherence_phases(basis: &TrapBasis, t: f64) -> CMat {
    let e = &basis.energies;
    CMat::from_fn(basis.dim, basis.dim, |i, j| C64::from_polar(1.0, -(e[i] - e[j]) * t))
}

fn hadamard(a: &CMat, b: &CMat) -> CMat {
    CMat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * b[(i, j)])
}

impl CorrelationField for EvolvedField {
    fn basis(&self) -> &TrapBasis {
        self.inner.basis()
    }
    fn n_est(&self) -> usize {
        self.inner.n_est()
    }
    fn kind(&self) -> FieldKind {
        self.inner.kind()
    }
    fn depth(&self) -> usize {
        self.inner.depth()
    }
    fn z_independent(&self) -> bool {
        self.inner.z_independent()
    }
    fn matrix(&self, z: ZVector) -> Result<CMat> {
        let m = self.inner.matrix(self.prop.apply_transpose(z))?;
        Ok(hadamard(&m, &self.phases))
    }
    fn gaussian(&self) -> Option<GaussianForm> {
        let g = self.inner.gaussian()?;
        let v = &self.prop.v;
        let linear = [0, 1, 2].map(|i| (0..3).map(|k| v[i][k] * g.linear[k]).sum());
        let cov = matmul(&matmul(v, &g.cov), &transpose(v));
        Some(GaussianForm { r: hadamard(&g.r, &self.phases), linear, cov })
    }
}

/// Free evolution of a field over a time `t` with propagation matrix `prop`.
pub fn evolve_correlation(field: Field, t: f64, prop: &PropagationMatrix) -> Result<Field> {
    if !t.is_finite() {
        return Err(Error::InvalidParameter("evolution time must be finite".into()));
    }
    let phases = coherence_phases(field.basis(), t);
    Ok(Arc::new(EvolvedField { inner: field, prop: *prop, phases }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corrdyn::bec_initial;
    use crate::linalg;
    use std::f64::consts::PI;

    #[test]
    fn identities_of_harmonic_map() {
        let omega = 1.3;
        let id = PropagationMatrix::identity();
        assert!(harmonic_vz(0.0, omega, 3).unwrap().max_abs_diff(&id) <= 1e-15);
        assert!(harmonic_vz(2.0 * PI / omega, omega, 3).unwrap().max_abs_diff(&id) <= 1e-12);
        for t in [0.3, 1.7, -2.2] {
            let v = harmonic_vz(t, omega, 4).unwrap();
            let back = harmonic_vz(-t, omega, 4).unwrap();
            assert!(back.compose(&v).max_abs_diff(&id) <= 1e-12);
            assert!(v.inverse().unwrap().max_abs_diff(&back) <= 1e-12);
            let (t1, t2) = (0.4 * t, 0.6 * t);
            let sum = harmonic_vz(t1, omega, 4).unwrap().compose(&harmonic_vz(t2, omega, 4).unwrap());
            assert!(sum.max_abs_diff(&v) <= 1e-12);
            assert_eq!(v.v[2], [0.0, 0.0, 1.0]);
            assert_eq!([v.v[0][2], v.v[1][2]], [0.0, 0.0]);
        }
    }

    #[test]
    fn free_particle_is_a_shear_group() {
        let a = free_particle_vz(0.7, 5).unwrap();
        let b = free_particle_vz(-1.9, 5).unwrap();
        let ab = free_particle_vz(0.7 - 1.9, 5).unwrap();
        assert!(a.compose(&b).max_abs_diff(&ab) <= 1e-15);
        assert!(free_particle_vz(0.0, 5).unwrap().max_abs_diff(&PropagationMatrix::identity()) == 0.0);
        let v = a.v;
        assert_eq!(v[0][0] * v[1][1] - v[0][1] * v[1][0], 1.0);
    }

    #[test]
    fn harmonic_reduces_to_free_particle_at_short_times() {
        // Taylor remainders of cos, sin and sin / omega against the free shear;
        // the restoring force enters only the (A, B) entry, at first order.
        let (omega, ne) = (0.8, 2.0);
        for t in [1e-2, 1e-3] {
            let h = harmonic_vz(t, omega, 2).unwrap().v;
            let f = free_particle_vz(t, 2).unwrap().v;
            let wt = omega * t;
            assert!((h[0][0] - f[0][0]).abs() <= wt * wt / 2.0);
            assert!((h[1][1] - f[1][1]).abs() <= wt * wt / 2.0);
            assert!((h[1][0] - f[1][0]).abs() <= wt * wt * t / (6.0 * ne));
            assert!((h[0][1] + omega * omega * ne * t).abs() <= omega * ne * wt.powi(3) / 6.0);
        }
    }

    #[test]
    fn zero_time_leaves_field_unchanged() {
        let b = TrapBasis::new(8, 1.0).unwrap();
        let f: Field = Arc::new(bec_initial(3, &b).unwrap());
        let e = evolve_correlation(f.clone(), 0.0, &harmonic_vz(0.0, 1.0, 3).unwrap()).unwrap();
        let z = ZVector::new(0.3, -0.4, 0.9);
        assert!(linalg::max_abs_diff(&e.matrix(z).unwrap(), &f.matrix(z).unwrap()) == 0.0);
    }

    #[test]
    fn gaussian_closed_form_matches_wrapper() {
        let b = TrapBasis::new(6, 1.0).unwrap();
        let mut form = bec_initial(4, &b).unwrap().form;
        form.r = CMat::from_fn(6, 6, |i, j| C64::new(1.0 / (1 + i + j) as f64, 0.1 * i as f64 - 0.1 * j as f64));
        let f: Field = Arc::new(crate::corrdyn::GaussianField::new(form, b.clone(), 4));
        let e = evolve_correlation(f, 0.9, &harmonic_vz(0.9, 1.0, 4).unwrap()).unwrap();
        let g = e.gaussian().unwrap();
        for z in [ZVector::new(0.2, 0.5, -0.3), ZVector::new(-1.0, 0.1, 0.4)] {
            let direct = e.matrix(z).unwrap();
            let closed = linalg::scale(&g.r, g.scalar(z));
            assert!(linalg::max_abs_diff(&direct, &closed) <= 1e-13);
        }
    }
}
