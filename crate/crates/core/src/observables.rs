//! Per-atom moments and the moment relations of the feedback loop.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, TrapBasis};
use crate::linalg::{self, CMat};
use crate::oracle::{ManyBodyState, ManyBodySystem};

/// Per-atom means and variances of position and momentum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentReport {
    pub mean_p: f64,
    pub mean_q: f64,
    pub var_p: f64,
    pub var_q: f64,
    pub var_p_scaled: f64,
    pub var_q_scaled: f64,
    pub uncertainty_product_scaled: f64,
    pub n_atoms_mean: f64,
}

/// Moments of a single-atom density matrix normalized to its trace, the mean
/// atom number.
pub fn moments(rho: &CMat, basis: &TrapBasis) -> Result<MomentReport> {
    if rho.nrows() != basis.dim || rho.ncols() != basis.dim {
        return Err(Error::InvalidParameter(format!(
            "density matrix is {}x{} but the basis has dimension {}",
            rho.nrows(),
            rho.ncols(),
            basis.dim
        )));
    }
    let n = linalg::trace(rho).re;
    if !(n > 0.0) {
        return Err(Error::InvalidParameter(format!("density matrix trace must be positive, got {n}")));
    }
    let p = hilbert::momentum_op(basis).matrix;
    let q = hilbert::position_op(basis).matrix;
    let ev = |op: &CMat| linalg::trace(&(rho * op)).re / n;
    let mean_p = ev(&p);
    let mean_q = ev(&q);
    let var_p = (ev(&(&p * &p)) - mean_p * mean_p).max(0.0);
    let var_q = (ev(&(&q * &q)) - mean_q * mean_q).max(0.0);
    Ok(MomentReport {
        mean_p,
        mean_q,
        var_p,
        var_q,
        var_p_scaled: var_p / (basis.dp0 * basis.dp0),
        var_q_scaled: var_q / (basis.dq0 * basis.dq0),
        uncertainty_product_scaled: (var_p * var_q).sqrt() / (basis.dq0 * basis.dp0),
        n_atoms_mean: n,
    })
}

/// Variance of the total momentum of an explicit many-body state.
pub fn macro_variance_a(system: &ManyBodySystem, state: &ManyBodyState) -> f64 {
    system.macro_variance_a(state)
}

/// Variance of the total momentum of `n_atoms` independent ground-state atoms.
pub fn macro_variance_a_bec(n_atoms: usize, basis: &TrapBasis) -> f64 {
    n_atoms as f64 * basis.dp0 * basis.dp0
}

/// Residual of the post-feedback momentum-variance relation for negative
/// feedback `f(A) = -A` with `N_e = N`:
/// `var(t+) - [var(t-) - var(A)/N^2 + sigma^2/N^2]`.
pub fn avar_check(pre: &MomentReport, pre_macro_var: f64, post: &MomentReport, n_atoms: usize, sigma: f64) -> f64 {
    let n2 = (n_atoms * n_atoms) as f64;
    post.var_p - (pre.var_p - pre_macro_var / n2 + sigma * sigma / n2)
}

/// `var_p(t+) / dp0^2` for a condensate after negative feedback.
pub fn bec_var_p_scaled(n_atoms: usize, sigma_over_dp0: f64) -> f64 {
    let n = n_atoms as f64;
    1.0 - 1.0 / n + sigma_over_dp0 * sigma_over_dp0 / (n * n)
}

/// `var_q(t+) / dq0^2` for a condensate after the loop: the ground-state
/// width plus the back-action `1 / (4 sigma^2)`.
pub fn bec_var_q_scaled(sigma_over_dp0: f64) -> f64 {
    1.0 + 1.0 / (sigma_over_dp0 * sigma_over_dp0)
}

/// Scaled uncertainty product of a condensate after negative feedback.
pub fn bec_uncertainty_product_scaled(n_atoms: usize, sigma_over_dp0: f64) -> f64 {
    (bec_var_p_scaled(n_atoms, sigma_over_dp0) * bec_var_q_scaled(sigma_over_dp0)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use faer::Mat;
    use num_complex::Complex64 as C64;

    fn ground(n: f64, d: usize) -> CMat {
        Mat::from_fn(d, d, |i, j| if i == 0 && j == 0 { C64::new(n, 0.0) } else { C64::new(0.0, 0.0) })
    }

    #[test]
    fn condensate_has_unit_scaled_moments() {
        let b = TrapBasis::new(20, 1.7).unwrap();
        let r = moments(&ground(4.0, 20), &b).unwrap();
        assert!((r.var_p_scaled - 1.0).abs() < 1e-12);
        assert!((r.var_q_scaled - 1.0).abs() < 1e-12);
        assert!((r.uncertainty_product_scaled - 1.0).abs() < 1e-12);
        assert!(r.mean_p.abs() < 1e-15 && r.mean_q.abs() < 1e-15);
        assert_eq!(r.n_atoms_mean, 4.0);
    }

    #[test]
    fn rejects_empty_density_matrix() {
        let b = TrapBasis::new(4, 1.0).unwrap();
        assert!(moments(&ground(0.0, 4), &b).is_err());
        assert!(moments(&ground(1.0, 3), &b).is_err());
    }

    #[test]
    fn closed_forms() {
        assert_eq!(bec_var_p_scaled(1, 1.0), 1.0);
        assert!((bec_uncertainty_product_scaled(2, 1.0) - 1.5f64.sqrt()).abs() < 1e-15);
        assert!((bec_uncertainty_product_scaled(1, 1.0) - 2f64.sqrt()).abs() < 1e-15);
        assert!((bec_var_p_scaled(4, 1.5) - 0.890625).abs() < 1e-15);
        let b = TrapBasis::new(4, 1.0).unwrap();
        assert!((macro_variance_a_bec(5, &b) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn wrong_sigma_shows_in_residual() {
        let b = TrapBasis::new(4, 1.0).unwrap();
        let pre = moments(&ground(3.0, 4), &b).unwrap();
        let n = 3;
        let sigma = 0.8;
        let mut post = pre.clone();
        post.var_p = pre.var_p - macro_variance_a_bec(n, &b) / 9.0 + sigma * sigma / 9.0;
        assert!(avar_check(&pre, macro_variance_a_bec(n, &b), &post, n, sigma).abs() < 1e-15);
        let wrong = 1.1;
        let r = avar_check(&pre, macro_variance_a_bec(n, &b), &post, n, wrong);
        assert!((r - (sigma * sigma - wrong * wrong) / 9.0).abs() < 1e-15);
    }
}
