//! Brute-force second-quantized simulator on the fixed-N symmetric Fock space.
//!
//! Every quantity here is computed directly from its definition on the full
//! many-body density matrix. It is the ground truth the correlation-field
//! machinery in [`crate::corrdyn`] is checked against, and it is only usable
//! for a handful of atoms in a handful of modes.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use faer::Mat;
use num_complex::Complex64 as C64;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corrdyn::{CorrelationField, FeedbackConfig, FieldKind, ZVector};
use crate::error::{Error, Result};
use crate::hilbert::{self, amplitude, SingleAtomOp, TrapBasis};
use crate::linalg::{self, CMat, Spectrum};
use crate::quadrature::Grid;

pub const DEFAULT_FOCK_CAP: usize = 5000;

/// Occupation-number basis of the `N`-atom, `M`-mode sector.
#[derive(Clone, Debug)]
pub struct FockBasis {
    pub n_atoms: usize,
    pub n_modes: usize,
    pub states: Vec<Vec<u32>>,
    index: HashMap<Vec<u32>, usize>,
}

pub fn sector_dim(n_atoms: usize, n_modes: usize) -> usize {
    // C(N + M - 1, M - 1)
    let (n, k) = (n_atoms + n_modes - 1, n_modes - 1);
    let k = k.min(n - k);
    let mut out: u128 = 1;
    for i in 0..k {
        out = out * (n - i) as u128 / (i + 1) as u128;
    }
    out.min(usize::MAX as u128) as usize
}

/// Sector basis in descending lexicographic order: `(N,0,..)` comes first.
pub fn fock_basis(n_atoms: usize, n_modes: usize) -> Result<FockBasis> {
    if n_atoms == 0 {
        return Err(Error::InvalidParameter("atom number must be positive".into()));
    }
    FockBasis::with_cap(n_atoms, n_modes, DEFAULT_FOCK_CAP)
}

impl FockBasis {
    /// Like [`fock_basis`] but accepts the empty sector and a custom cap.
    pub fn with_cap(n_atoms: usize, n_modes: usize, cap: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("mode number must be positive".into()));
        }
        let dim = sector_dim(n_atoms, n_modes);
        if dim > cap {
            return Err(Error::CapacityExceeded { dim, cap, n_atoms, n_modes });
        }
        let mut states = Vec::with_capacity(dim);
        let mut cur = vec![0u32; n_modes];
        fill(&mut states, &mut cur, 0, n_atoms as u32);
        let index = states.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Self { n_atoms, n_modes, states, index })
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, occ: &[u32]) -> Option<usize> {
        self.index.get(occ).copied()
    }

    /// Indices of states with no population in the top mode.
    pub fn safe_states(&self) -> Vec<usize> {
        (0..self.dim())
            .filter(|&i| self.states[i][self.n_modes - 1] == 0)
            .collect()
    }
}

fn fill(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, mode: usize, left: u32) {
    if mode == cur.len() - 1 {
        cur[mode] = left;
        out.push(cur.clone());
        return;
    }
    for n in (0..=left).rev() {
        cur[mode] = n;
        fill(out, cur, mode + 1, left - n);
    }
    cur[mode] = 0;
}

/// Matrix in the ordering of a [`FockBasis`].
#[derive(Clone, Debug)]
pub struct ManyBodyOp {
    pub matrix: CMat,
}

/// `sum_{mu,lambda} <mu|sop|lambda> phi_mu^dagger phi_lambda` on the sector,
/// using the leading `M x M` block of `sop`.
pub fn second_quantize(sop: &SingleAtomOp, basis: &FockBasis) -> ManyBodyOp {
    let m = basis.n_modes;
    assert!(sop.dim() >= m, "single-atom operator smaller than the mode count");
    let dim = basis.dim();
    let mut out = Mat::<C64>::zeros(dim, dim);
    let mut scratch = vec![0u32; m];
    for (j, occ) in basis.states.iter().enumerate() {
        for lam in 0..m {
            let nl = occ[lam];
            if nl == 0 {
                continue;
            }
            scratch.copy_from_slice(occ);
            scratch[lam] -= 1;
            for mu in 0..m {
                let elem = sop.matrix[(mu, lam)];
                if elem.norm() == 0.0 {
                    continue;
                }
                let amp = ((scratch[mu] + 1) as f64 * nl as f64).sqrt();
                scratch[mu] += 1;
                let i = basis.index_of(&scratch).expect("number-conserving move");
                scratch[mu] -= 1;
                out[(i, j)] += elem * amp;
            }
        }
    }
    ManyBodyOp { matrix: out }
}

/// Total momentum.
pub fn macro_a(basis: &FockBasis, p_op: &SingleAtomOp) -> ManyBodyOp {
    second_quantize(p_op, basis)
}

/// Center-of-mass-type conjugate built with the estimated atom number.
pub fn macro_b(basis: &FockBasis, q_op: &SingleAtomOp, n_est: usize) -> Result<ManyBodyOp> {
    if n_est == 0 {
        return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
    }
    let q = second_quantize(q_op, basis);
    Ok(ManyBodyOp {
        matrix: linalg::scale(&q.matrix, C64::new(1.0 / n_est as f64, 0.0)),
    })
}

pub fn number_op(basis: &FockBasis) -> ManyBodyOp {
    let dim = basis.dim();
    let n = basis.n_atoms as f64;
    ManyBodyOp {
        matrix: Mat::from_fn(dim, dim, |i, j| if i == j { C64::new(n, 0.0) } else { C64::new(0.0, 0.0) }),
    }
}

/// Density matrix on a Fock sector.
#[derive(Clone, Debug)]
pub struct ManyBodyState {
    pub rho: CMat,
}

impl ManyBodyState {
    pub fn new(rho: CMat) -> Result<Self> {
        let s = Self { rho };
        s.validate(1e-10)?;
        Ok(s)
    }

    pub fn pure(psi: &[C64]) -> Self {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let n = psi.len();
        Self {
            rho: Mat::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / (norm * norm)),
        }
    }

    /// All atoms in the trap ground state.
    pub fn condensate(basis: &FockBasis) -> Self {
        let mut occ = vec![0u32; basis.n_modes];
        occ[0] = basis.n_atoms as u32;
        let mut psi = vec![C64::new(0.0, 0.0); basis.dim()];
        psi[basis.index_of(&occ).unwrap()] = C64::new(1.0, 0.0);
        Self::pure(&psi)
    }

    /// Random mixture of `rank` random pure states supported on occupation
    /// vectors that only use modes `< max_mode`. Such states carry arbitrary
    /// inter-atom correlations.
    pub fn random_mixture(basis: &FockBasis, rank: usize, max_mode: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let support: Vec<usize> = (0..basis.dim())
            .filter(|&i| basis.states[i].iter().skip(max_mode).all(|&n| n == 0))
            .collect();
        let dim = basis.dim();
        let mut rho = Mat::<C64>::zeros(dim, dim);
        let weights: Vec<f64> = (0..rank).map(|_| rng.random::<f64>() + 0.1).collect();
        let total: f64 = weights.iter().sum();
        for w in weights {
            let mut psi = vec![C64::new(0.0, 0.0); dim];
            for &i in &support {
                psi[i] = C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
            }
            let pure = Self::pure(&psi);
            rho += linalg::scale(&pure.rho, C64::new(w / total, 0.0));
        }
        Self { rho }
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.rho).re
    }

    /// Hermiticity, positivity and unit trace.
    pub fn validate(&self, tol: f64) -> Result<()> {
        let eig = linalg::eigh(&self.rho, tol)?;
        let min = eig.values.first().copied().unwrap_or(0.0);
        if min < -tol {
            return Err(Error::InvalidParameter(format!("density matrix has eigenvalue {min:e}")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol {
            return Err(Error::InvalidParameter(format!("density matrix trace {tr}")));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(linalg::eigh(&self.rho, 1e-8)?.values[0])
    }

    pub fn expect(&self, op: &CMat) -> C64 {
        linalg::trace(&(&self.rho * op))
    }
}

/// Single-atom modes for a condensate of `n_atoms` atoms fed back with
/// measurement width `sigma_over_dp0` (in units of the ground-state momentum
/// width).
///
/// Narrow measurements spread the position distribution by `1 / (4 sigma^2)`
/// and push population up the ladder, so fewer modes suffice for wide ones.
/// The counts keep the top-mode population after one loop near `1e-9` for
/// condensates; sectors beyond the default cap report a capacity error.
pub fn suggested_modes(n_atoms: usize, sigma_over_dp0: f64) -> usize {
    let s = sigma_over_dp0;
    match n_atoms {
        0 | 1 => 40,
        2 => 24,
        3 if s < 1.5 => 18,
        3 if s < 2.0 => 14,
        3 => 12,
        4 if s < 1.5 => 14,
        4 if s < 2.0 => 12,
        4 => 10,
        5 if s < 1.5 => 14,
        5 if s < 2.0 => 12,
        5 => 10,
        _ => 8,
    }
}

/// Oracle quadrature and safety settings.
#[derive(Clone, Debug)]
pub struct OracleSettings {
    pub a_nodes: usize,
    pub range_mult: f64,
    pub trace_tol: f64,
    /// Maximum population allowed in the top mode after feedback; `None`
    /// disables the check.
    pub leakage_tol: Option<f64>,
}

impl Default for OracleSettings {
    fn default() -> Self {
        Self {
            a_nodes: 201,
            range_mult: 8.0,
            trace_tol: 1e-8,
            leakage_tol: Some(1e-6),
        }
    }
}

#[derive(Clone, Debug)]
pub struct FeedbackOutcome {
    pub state: ManyBodyState,
    pub trace_deviation: f64,
    pub top_mode_weight: f64,
}

/// `N`-atom sector, its `(N-1)`-atom neighbour and the operators on both.
pub struct ManyBodySystem {
    pub trap: TrapBasis,
    pub fock: FockBasis,
    pub lower: FockBasis,
    pub p_total: ManyBodyOp,
    pub q_total: ManyBodyOp,
    pub hamiltonian: ManyBodyOp,
    p_lower: ManyBodyOp,
    q_lower: ManyBodyOp,
    /// Per mode `mu`: nonzero entries `(row in lower, column in fock, value)` of
    /// the annihilator `phi_mu`.
    annihilators: Vec<Vec<(usize, usize, f64)>>,
    p_spec: OnceLock<Spectrum>,
    q_spec: OnceLock<Spectrum>,
}

impl ManyBodySystem {
    pub fn new(trap: &TrapBasis, n_atoms: usize, n_modes: usize) -> Result<Self> {
        Self::with_cap(trap, n_atoms, n_modes, DEFAULT_FOCK_CAP)
    }

    pub fn with_cap(trap: &TrapBasis, n_atoms: usize, n_modes: usize, cap: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("atom number must be positive".into()));
        }
        let trap = trap.with_dim(n_modes)?;
        let fock = FockBasis::with_cap(n_atoms, n_modes, cap)?;
        let lower = FockBasis::with_cap(n_atoms - 1, n_modes, cap)?;
        let p = hilbert::momentum_op(&trap);
        let q = hilbert::position_op(&trap);
        let h = hilbert::hamiltonian_op(&trap);
        let annihilators = (0..n_modes)
            .map(|mu| {
                let mut entries = Vec::new();
                for (j, occ) in fock.states.iter().enumerate() {
                    if occ[mu] > 0 {
                        let mut t = occ.clone();
                        t[mu] -= 1;
                        entries.push((lower.index_of(&t).unwrap(), j, (occ[mu] as f64).sqrt()));
                    }
                }
                entries
            })
            .collect();
        Ok(Self {
            p_total: second_quantize(&p, &fock),
            q_total: second_quantize(&q, &fock),
            hamiltonian: second_quantize(&h, &fock),
            p_lower: second_quantize(&p, &lower),
            q_lower: second_quantize(&q, &lower),
            trap,
            fock,
            lower,
            annihilators,
            p_spec: OnceLock::new(),
            q_spec: OnceLock::new(),
        })
    }

    pub fn n_atoms(&self) -> usize {
        self.fock.n_atoms
    }

    pub fn n_modes(&self) -> usize {
        self.fock.n_modes
    }

    pub fn macro_b(&self, n_est: usize) -> Result<CMat> {
        if n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        Ok(linalg::scale(&self.q_total.matrix, C64::new(1.0 / n_est as f64, 0.0)))
    }

    fn p_spectrum(&self) -> Result<&Spectrum> {
        if self.p_spec.get().is_none() {
            let _ = self.p_spec.set(linalg::eigh(&self.p_total.matrix, 1e-10)?);
        }
        Ok(self.p_spec.get().unwrap())
    }

    fn q_spectrum(&self) -> Result<&Spectrum> {
        if self.q_spec.get().is_none() {
            let _ = self.q_spec.set(linalg::eigh(&self.q_total.matrix, 1e-10)?);
        }
        Ok(self.q_spec.get().unwrap())
    }

    /// One feedback loop applied by direct quadrature over the outcome `A`:
    /// `sum_k w_k U(A_k) M(A_k - A) rho M(A_k - A)^dagger U(A_k)^dagger`.
    ///
    /// The output is not renormalized.
    pub fn exact_feedback(
        &self,
        state: &ManyBodyState,
        cfg: &FeedbackConfig,
        settings: &OracleSettings,
    ) -> Result<FeedbackOutcome> {
        hilbert::check_sigma(cfg.sigma)?;
        if cfg.n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        let dim = self.fock.dim();
        let pa = self.p_spectrum()?;
        let qs = self.q_spectrum()?;

        let mean = state.expect(&self.p_total.matrix).re;
        let p2 = &self.p_total.matrix * &self.p_total.matrix;
        let var = (state.expect(&p2).re - mean * mean).max(0.0);
        let half = settings.range_mult * (cfg.sigma + var.sqrt());
        let grid = Grid::gauss_legendre(mean - half, mean + half, settings.a_nodes);

        // pure components of the input in the eigenbasis of the total momentum
        let rho_spec = linalg::eigh(&state.rho, 1e-8)?;
        let top = rho_spec.values.iter().cloned().fold(0.0f64, f64::max);
        let comps: Vec<usize> = (0..dim).filter(|&r| rho_spec.values[r] > 1e-15 * top).collect();
        let coeffs = pa.vectors.adjoint() * &rho_spec.vectors;
        let to_q = qs.vectors.adjoint() * &pa.vectors;

        let n_nodes = grid.len();
        let theta_scale = cfg.kick_sign.factor() / cfg.n_est as f64;
        let phases: Vec<Vec<C64>> = grid
            .iter()
            .map(|(a, _)| {
                let theta = theta_scale * cfg.response.eval(a);
                qs.values.iter().map(|&b| C64::from_polar(1.0, theta * b)).collect()
            })
            .collect();
        let envelopes: Vec<Vec<f64>> = grid
            .iter()
            .map(|(a, w)| pa.values.iter().map(|&x| w.sqrt() * amplitude(a - x, cfg.sigma)).collect())
            .collect();
        let per_chunk = (4096 / n_nodes).max(1);
        let mut rho_q = Mat::<C64>::zeros(dim, dim);
        for chunk in comps.chunks(per_chunk) {
            let mut cols = Mat::<C64>::zeros(dim, chunk.len() * n_nodes);
            for (ci, &r) in chunk.iter().enumerate() {
                let lam = rho_spec.values[r].sqrt();
                for k in 0..n_nodes {
                    let col = ci * n_nodes + k;
                    for j in 0..dim {
                        cols[(j, col)] = coeffs[(j, r)] * (lam * envelopes[k][j]);
                    }
                }
            }
            let mut in_q = &to_q * &cols;
            for ci in 0..chunk.len() {
                for k in 0..n_nodes {
                    let col = ci * n_nodes + k;
                    for j in 0..dim {
                        in_q[(j, col)] *= phases[k][j];
                    }
                }
            }
            rho_q += &in_q * in_q.adjoint();
        }
        let rho = &qs.vectors * &rho_q * qs.vectors.adjoint();
        let out = ManyBodyState { rho };

        let trace_deviation = (out.trace() - state.trace()).abs();
        if trace_deviation > settings.trace_tol {
            return Err(Error::QuadratureUnderResolved {
                deviation: trace_deviation,
                tolerance: settings.trace_tol,
            });
        }
        let top_mode_weight = self.top_mode_weight(&out);
        if let Some(tol) = settings.leakage_tol {
            if top_mode_weight > tol {
                return Err(Error::TruncationLeakage { weight: top_mode_weight, tolerance: tol });
            }
        }
        Ok(FeedbackOutcome { state: out, trace_deviation, top_mode_weight })
    }

    /// Population of occupation states that use the highest retained mode.
    pub fn top_mode_weight(&self, state: &ManyBodyState) -> f64 {
        let last = self.n_modes() - 1;
        self.fock
            .states
            .iter()
            .enumerate()
            .filter(|(_, occ)| occ[last] > 0)
            .map(|(i, _)| state.rho[(i, i)].re)
            .sum()
    }

    /// `rho_{mu lambda} = Tr(rho phi_lambda^dagger phi_mu)`.
    pub fn single_atom_dm(&self, state: &ManyBodyState) -> CMat {
        let m = self.n_modes();
        let mut out = Mat::<C64>::zeros(m, m);
        for mu in 0..m {
            for lam in 0..m {
                out[(mu, lam)] = self.sandwich(state, mu, lam, None);
            }
        }
        out
    }

    /// `Tr(T phi_mu rho phi_lambda^dagger)` with `T` on the lower sector
    /// (identity when `None`).
    fn sandwich(&self, state: &ManyBodyState, mu: usize, lam: usize, t: Option<&CMat>) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for &(i, j, a) in &self.annihilators[mu] {
            for &(k, l, b) in &self.annihilators[lam] {
                let tk = match t {
                    Some(t) => t[(k, i)],
                    None if k == i => C64::new(1.0, 0.0),
                    None => continue,
                };
                acc += tk * state.rho[(j, l)] * (a * b);
            }
        }
        acc
    }

    /// `exp(i (alpha A + beta B + gamma N / N_e))` on the `(N-1)`-atom sector.
    pub fn lower_displacement(&self, z: ZVector, n_est: usize) -> Result<CMat> {
        if n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        let ne = n_est as f64;
        let dim = self.lower.dim();
        let n_lo = self.lower.n_atoms as f64;
        let gen = Mat::from_fn(dim, dim, |i, j| {
            let mut v = self.p_lower.matrix[(i, j)] * z.alpha + self.q_lower.matrix[(i, j)] * (z.beta / ne);
            if i == j {
                v += C64::new(z.gamma * n_lo / ne, 0.0);
            }
            v
        });
        linalg::expm_i_hermitian(&gen)
    }

    /// `<phi_lambda^dagger exp(i z . Z) phi_mu>` for one mode pair.
    pub fn correlation_at(&self, state: &ManyBodyState, z: ZVector, mu: usize, lam: usize, n_est: usize) -> Result<C64> {
        let t = self.lower_displacement(z, n_est)?;
        Ok(self.sandwich(state, mu, lam, Some(&t)))
    }

    /// The full `M x M` correlation matrix at `z`.
    pub fn correlation_matrix(&self, state: &ManyBodyState, z: ZVector, n_est: usize) -> Result<CMat> {
        let t = self.lower_displacement(z, n_est)?;
        let m = self.n_modes();
        let lo = self.lower.dim();
        let hi = self.fock.dim();
        let mut out = Mat::<C64>::zeros(m, m);
        for mu in 0..m {
            // phi_mu rho, then T phi_mu rho
            let mut a = Mat::<C64>::zeros(lo, hi);
            for &(i, j, amp) in &self.annihilators[mu] {
                for l in 0..hi {
                    a[(i, l)] += state.rho[(j, l)] * amp;
                }
            }
            let ta = &t * &a;
            for lam in 0..m {
                let mut acc = C64::new(0.0, 0.0);
                for &(k, l, b) in &self.annihilators[lam] {
                    acc += ta[(k, l)] * b;
                }
                out[(mu, lam)] = acc;
            }
        }
        Ok(out)
    }

    /// Free evolution under the non-interacting Hamiltonian for time `t`.
    pub fn free_evolve(&self, state: &ManyBodyState, t: f64) -> ManyBodyState {
        let e: Vec<f64> = self
            .fock
            .states
            .iter()
            .map(|occ| occ.iter().zip(&self.trap.energies).map(|(&n, &en)| n as f64 * en).sum())
            .collect();
        let dim = self.fock.dim();
        ManyBodyState {
            rho: Mat::from_fn(dim, dim, |i, j| state.rho[(i, j)] * C64::from_polar(1.0, -(e[i] - e[j]) * t)),
        }
    }

    /// Heisenberg picture `exp(iHt) X exp(-iHt)` of an operator on the sector.
    pub fn heisenberg(&self, op: &CMat, t: f64) -> CMat {
        let dim = self.fock.dim();
        let e: Vec<f64> = (0..dim).map(|i| self.hamiltonian.matrix[(i, i)].re).collect();
        Mat::from_fn(dim, dim, |i, j| op[(i, j)] * C64::from_polar(1.0, (e[i] - e[j]) * t))
    }

    /// `Tr(rho exp(i (alpha A + beta B + gamma N / N_e)))` on the full sector.
    pub fn macro_characteristic(&self, state: &ManyBodyState, z: ZVector, n_est: usize) -> Result<C64> {
        if n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        let ne = n_est as f64;
        let dim = self.fock.dim();
        let n = self.n_atoms() as f64;
        let gen = Mat::from_fn(dim, dim, |i, j| {
            let mut v = self.p_total.matrix[(i, j)] * z.alpha + self.q_total.matrix[(i, j)] * (z.beta / ne);
            if i == j {
                v += C64::new(z.gamma * n / ne, 0.0);
            }
            v
        });
        Ok(state.expect(&linalg::expm_i_hermitian(&gen)?))
    }

    /// `Tr(rho A^2) - Tr(rho A)^2` for the total momentum.
    pub fn macro_variance_a(&self, state: &ManyBodyState) -> f64 {
        let m = state.expect(&self.p_total.matrix).re;
        let p2 = &self.p_total.matrix * &self.p_total.matrix;
        state.expect(&p2).re - m * m
    }
}

/// Correlation field of an explicit many-body state, evaluated from the
/// definition on every call.
pub struct OracleField {
    system: Arc<ManyBodySystem>,
    state: ManyBodyState,
    n_est: usize,
}

impl OracleField {
    pub fn new(system: Arc<ManyBodySystem>, state: ManyBodyState, n_est: usize) -> Result<Self> {
        if n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        Ok(Self { system, state, n_est })
    }

    pub fn state(&self) -> &ManyBodyState {
        &self.state
    }
}

impl CorrelationField for OracleField {
    fn basis(&self) -> &TrapBasis {
        &self.system.trap
    }
    fn n_est(&self) -> usize {
        self.n_est
    }
    fn kind(&self) -> FieldKind {
        FieldKind::NumericComposed
    }
    fn z_independent(&self) -> bool {
        self.system.n_atoms() == 1
    }
    fn matrix(&self, z: ZVector) -> Result<CMat> {
        self.system.correlation_matrix(&self.state, z, self.n_est)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, max_abs_diff};

    fn trap(d: usize) -> TrapBasis {
        TrapBasis::new(d, 1.0).unwrap()
    }

    #[test]
    fn sector_dimensions() {
        assert_eq!(fock_basis(1, 3).unwrap().dim(), 3);
        assert_eq!(fock_basis(3, 4).unwrap().dim(), 20);
        assert_eq!(sector_dim(3, 4), 20);
        let b = fock_basis(2, 2).unwrap();
        assert_eq!(b.states, vec![vec![2, 0], vec![1, 1], vec![0, 2]]);
        assert!(fock_basis(0, 2).is_err());
    }

    #[test]
    fn sector_enumeration_is_exhaustive() {
        let b = fock_basis(4, 5).unwrap();
        assert_eq!(b.dim(), sector_dim(4, 5));
        let mut seen = std::collections::HashSet::new();
        for s in &b.states {
            assert_eq!(s.iter().sum::<u32>(), 4);
            assert!(seen.insert(s.clone()));
        }
    }

    #[test]
    fn capacity_error_names_dimension() {
        let err = FockBasis::with_cap(10, 10, 5000).unwrap_err();
        match err {
            Error::CapacityExceeded { dim, .. } => assert_eq!(dim, 92378),
            other => panic!("unexpected {other:?}"),
        }
        assert!(err_msg_contains(FockBasis::with_cap(10, 10, 5000).unwrap_err(), "92378"));
    }

    fn err_msg_contains(e: Error, s: &str) -> bool {
        e.to_string().contains(s)
    }

    #[test]
    fn second_quantized_identity_counts_atoms() {
        let b = fock_basis(3, 4).unwrap();
        let n = second_quantize(&SingleAtomOp::new(identity(4)), &b);
        assert!(max_abs_diff(&n.matrix, &linalg::scale(&identity(b.dim()), C64::new(3.0, 0.0))) < 1e-14);
        assert!(max_abs_diff(&n.matrix, &number_op(&b).matrix) < 1e-14);
    }

    #[test]
    fn one_atom_reduces_to_single_atom_block() {
        let t = trap(6);
        let b = fock_basis(1, 4).unwrap();
        let q = hilbert::position_op(&t);
        let sq = second_quantize(&q, &b);
        assert!(max_abs_diff(&sq.matrix, &q.restrict(4).matrix) < 1e-15);
    }

    #[test]
    fn two_atoms_two_modes_by_hand() {
        // states (2,0), (1,1), (0,2); q = dq0 [[0,1],[1,0]]
        // <1,1| a1^dag a0 |2,0> = sqrt(2), <0,2| a1^dag a0 |1,1> = sqrt(2)
        let t = trap(2);
        let b = fock_basis(2, 2).unwrap();
        let q = second_quantize(&hilbert::position_op(&t), &b).matrix;
        let s2 = 2f64.sqrt() * t.dq0;
        let expect = [[0.0, s2, 0.0], [s2, 0.0, s2], [0.0, s2, 0.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((q[(i, j)] - C64::new(expect[i][j], 0.0)).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn macro_commutators() {
        let t = trap(8);
        for (n, ne) in [(2usize, 2usize), (3, 3), (3, 2)] {
            let b = fock_basis(n, 5).unwrap();
            let p = macro_a(&b, &hilbert::momentum_op(&t));
            let q = macro_b(&b, &hilbert::position_op(&t), ne).unwrap();
            let num = number_op(&b);
            assert!(linalg::max_abs(&linalg::commutator(&p.matrix, &num.matrix)) < 1e-12);
            assert!(linalg::max_abs(&linalg::commutator(&q.matrix, &num.matrix)) < 1e-12);
            // [A, B] = -i N / N_e for A = P, B = Q / N_e, checked on states that
            // avoid the top two modes
            let c = linalg::commutator(&p.matrix, &q.matrix);
            let target = -(n as f64) / ne as f64;
            let safe: Vec<usize> = (0..b.dim())
                .filter(|&i| b.states[i][3] == 0 && b.states[i][4] == 0)
                .collect();
            for &i in &safe {
                for &j in &safe {
                    let want = if i == j { C64::new(0.0, target) } else { C64::new(0.0, 0.0) };
                    assert!((c[(i, j)] - want).norm() < 1e-10);
                }
            }
        }
        let b = fock_basis(1, 6).unwrap();
        assert!(macro_b(&b, &hilbert::position_op(&t), 0).is_err());
    }

    #[test]
    fn condensate_single_atom_density() {
        let sys = ManyBodySystem::new(&trap(6), 3, 5).unwrap();
        let rho = sys.single_atom_dm(&ManyBodyState::condensate(&sys.fock));
        let mut expect = Mat::<C64>::zeros(5, 5);
        expect[(0, 0)] = C64::new(3.0, 0.0);
        assert!(max_abs_diff(&rho, &expect) < 1e-14);
    }

    #[test]
    fn symmetric_one_excitation_density() {
        let sys = ManyBodySystem::new(&trap(4), 2, 4).unwrap();
        let mut psi = vec![C64::new(0.0, 0.0); sys.fock.dim()];
        psi[sys.fock.index_of(&[1, 1, 0, 0]).unwrap()] = C64::new(1.0, 0.0);
        let rho = sys.single_atom_dm(&ManyBodyState::pure(&psi));
        let mut expect = Mat::<C64>::zeros(4, 4);
        expect[(0, 0)] = C64::new(1.0, 0.0);
        expect[(1, 1)] = C64::new(1.0, 0.0);
        assert!(max_abs_diff(&rho, &expect) < 1e-14);
    }

    #[test]
    fn single_atom_density_trace_is_atom_number() {
        let sys = ManyBodySystem::new(&trap(5), 3, 5).unwrap();
        let st = ManyBodyState::random_mixture(&sys.fock, 3, 5, 11);
        st.validate(1e-10).unwrap();
        let rho = sys.single_atom_dm(&st);
        assert!((linalg::trace(&rho).re - 3.0).abs() < 1e-10);
        assert!(linalg::hermitian_deviation(&rho) < 1e-12);
    }

    #[test]
    fn correlation_reduces_to_density_at_origin() {
        let sys = ManyBodySystem::new(&trap(5), 3, 5).unwrap();
        let st = ManyBodyState::random_mixture(&sys.fock, 2, 4, 5);
        let d0 = sys.correlation_matrix(&st, ZVector::ZERO, 3).unwrap();
        assert!(max_abs_diff(&d0, &sys.single_atom_dm(&st)) < 1e-12);
        let one = sys.correlation_at(&st, ZVector::new(0.2, -0.4, 0.3), 1, 2, 3).unwrap();
        let all = sys.correlation_matrix(&st, ZVector::new(0.2, -0.4, 0.3), 3).unwrap();
        assert!((one - all[(1, 2)]).norm() < 1e-12);
    }

    #[test]
    fn one_atom_correlation_is_z_independent() {
        let sys = ManyBodySystem::new(&trap(5), 1, 5).unwrap();
        let st = ManyBodyState::random_mixture(&sys.fock, 2, 5, 8);
        let d0 = sys.correlation_matrix(&st, ZVector::ZERO, 1).unwrap();
        let dz = sys.correlation_matrix(&st, ZVector::new(0.7, -1.1, 0.9), 1).unwrap();
        assert!(max_abs_diff(&d0, &dz) < 1e-14);
    }

    #[test]
    fn condensate_correlation_closed_form() {
        let t = trap(20);
        let sys = ManyBodySystem::new(&t, 3, 20).unwrap();
        let st = ManyBodyState::condensate(&sys.fock);
        let n = 3.0;
        for z in [ZVector::new(0.3, -0.5, 0.7), ZVector::new(-0.9, 0.8, -0.2)] {
            let d = sys.correlation_at(&st, z, 0, 0, 3).unwrap();
            let expect = n
                * C64::from_polar(1.0, z.gamma * (1.0 - 1.0 / n))
                * (-(n - 1.0) / 2.0 * (t.dp0.powi(2) * z.alpha.powi(2) + t.dq0.powi(2) / (n * n) * z.beta.powi(2))).exp();
            assert!((d - expect).norm() < 1e-8, "{d} vs {expect}");
        }
    }

    #[test]
    fn free_evolution_basics() {
        let sys = ManyBodySystem::new(&trap(5), 2, 5).unwrap();
        let st = ManyBodyState::random_mixture(&sys.fock, 2, 4, 3);
        assert!(max_abs_diff(&sys.free_evolve(&st, 0.0).rho, &st.rho) < 1e-15);
        let bec = ManyBodyState::condensate(&sys.fock);
        assert!(max_abs_diff(&sys.free_evolve(&bec, 1.234).rho, &bec.rho) < 1e-15);
    }

    #[test]
    fn characteristic_function_basics() {
        let t = trap(20);
        let sys = ManyBodySystem::new(&t, 2, 20).unwrap();
        let st = ManyBodyState::condensate(&sys.fock);
        let one = sys.macro_characteristic(&st, ZVector::ZERO, 2).unwrap();
        assert!((one - C64::new(1.0, 0.0)).norm() < 1e-12);
        let g = sys.macro_characteristic(&st, ZVector::new(0.0, 0.0, 0.8), 3).unwrap();
        assert!((g - C64::from_polar(1.0, 0.8 * 2.0 / 3.0)).norm() < 1e-12);
        // product state: variances N dp0^2 and N dq0^2 / N_e^2
        let (a, b) = (0.6, -0.9);
        let c = sys.macro_characteristic(&st, ZVector::new(a, b, 0.0), 2).unwrap();
        let expect = (-0.5 * (2.0 * t.dp0.powi(2) * a * a + 2.0 * t.dq0.powi(2) / 4.0 * b * b)).exp();
        assert!((c - C64::new(expect, 0.0)).norm() < 1e-10);
    }
}
