//! Correlation-field dynamics for feedback on a bosonic gas.
//!
//! The field is `D_{mu lambda}(z) = <phi_lambda^dagger exp(i z . Z) phi_mu>` with
//! `Z = (A, B, N / N_e)`, `A` the total momentum and `B` the summed position
//! divided by the estimated atom number `N_e`. A feedback loop (Gaussian
//! measurement of `A` with width `sigma` followed by the kick
//! `exp(i f(A) B)`) maps the field at `t-` linearly onto the field at `t+`,
//! with a kernel built only from single-atom matrix elements. At `z = 0` the
//! field is the single-atom density matrix.
//!
//! Conventions used throughout this module:
//!
//! * `[A, B] = -i N / N_e` (from `[q, p] = i`), so a shift of `A` by `f N / N_e`
//!   needs the kick `exp(+i f B)`; see [`crate::hilbert::KickSign`].
//! * Kernel integrals over the outcome `A` and the single-atom readout `A'` are
//!   done in the eigenbasis of the single-atom momentum, where the resolution
//!   amplitudes are diagonal.
//! * With `beta != 0` the left and right resolution amplitudes carry the
//!   arguments `A' + A''` and `A' - A''`. Because the amplitude is Gaussian the
//!   `A''` integral is done in closed form:
//!
//!   `int dA'' e^{i k A''} M(A'+A''-p_a) M(A'-A''-p_b)
//!      = c^2 sqrt(2 pi) sigma e^{-(A'-pbar)^2/(2 sigma^2)} e^{-sigma^2 k^2/2} e^{i k (p_a-p_b)/2}`
//!
//!   with `pbar = (p_a + p_b)/2` and `c^2 = (2 pi sigma^2)^(-1/2)`. The field
//!   before feedback is then needed at `gamma' = gamma + alpha f(A) - beta k / 2`.
//!   For `beta = 0` the `k` integral collapses to `2 pi delta(A'')`.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use faer::Mat;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{self, amplitude, KickSign, LinearResponse, TrapBasis};
use crate::linalg::{self, CMat, Spectrum};
use crate::quadrature::{Grid, PANEL_NODES};

/// Feedback stages a single field may contain.
pub const MAX_FEEDBACK_DEPTH: usize = 3;

/// Coefficient of `beta k` in the shifted `gamma` argument of the kernel.
///
/// Two Weyl recombinations around the field each contribute
/// `+-beta k_{L,R} [A, B] / 2`; with `[A, B] = -i N / N_e` and `k` conjugate to
/// the half-difference `A''` this gives `-1/2`. Checked against the oracle.
pub const BETA_COUPLING: f64 = -0.5;

/// Argument `(alpha, beta, gamma)` of the correlation field.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ZVector {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ZVector {
    pub const ZERO: ZVector = ZVector { alpha: 0.0, beta: 0.0, gamma: 0.0 };

    pub const fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn is_finite(self) -> bool {
        self.alpha.is_finite() && self.beta.is_finite() && self.gamma.is_finite()
    }

    fn key(self) -> [i64; 3] {
        self.to_array().map(|x| (x * 1e12).round() as i64)
    }
}

impl std::ops::Neg for ZVector {
    type Output = ZVector;
    fn neg(self) -> ZVector {
        ZVector::new(-self.alpha, -self.beta, -self.gamma)
    }
}

/// Node counts and range multiplier for the kernel quadratures.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuadSettings {
    pub n_a: usize,
    pub n_a_prime: usize,
    /// Used only by the explicit four-dimensional reference kernel.
    pub n_a_double_prime: usize,
    pub n_k: usize,
    /// Nodes of the numeric Fourier transform over `alpha`.
    pub n_alpha: usize,
    pub range_mult: f64,
}

impl Default for QuadSettings {
    fn default() -> Self {
        Self {
            n_a: 96,
            n_a_prime: 96,
            n_a_double_prime: 48,
            n_k: 64,
            n_alpha: 96,
            range_mult: 8.0,
        }
    }
}

impl QuadSettings {
    pub fn validate(&self) -> Result<()> {
        let counts = [self.n_a, self.n_a_prime, self.n_a_double_prime, self.n_k, self.n_alpha];
        if counts.iter().any(|&n| n < 32) {
            return Err(Error::InvalidParameter(format!("quadrature node counts must be >= 32, got {counts:?}")));
        }
        if !(self.range_mult > 0.0) {
            return Err(Error::InvalidParameter("range_mult must be positive".into()));
        }
        Ok(())
    }

    /// Every node count multiplied by `factor` (at least 16 nodes each).
    pub fn scaled(&self, factor: f64) -> Self {
        let f = |n: usize| ((n as f64 * factor).round() as usize).max(16);
        Self {
            n_a: f(self.n_a),
            n_a_prime: f(self.n_a_prime),
            n_a_double_prime: f(self.n_a_double_prime),
            n_k: f(self.n_k),
            n_alpha: f(self.n_alpha),
            range_mult: self.range_mult,
        }
    }
}

/// Parameters of one feedback loop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedbackConfig {
    /// Standard deviation of the outcome distribution `|M(A)|^2`.
    pub sigma: f64,
    pub response: LinearResponse,
    /// Estimated atom number `N_e`.
    pub n_est: usize,
    #[serde(default)]
    pub kick_sign: KickSign,
    #[serde(default)]
    pub quad: QuadSettings,
    /// Recompute full-kernel values at half resolution and fail when they move
    /// by more than `1e-3` of the largest entry.
    #[serde(default = "default_true")]
    pub check_resolution: bool,
}

fn default_true() -> bool {
    true
}

impl FeedbackConfig {
    /// Negative feedback `f(A) = -A` with measurement width `sigma`.
    pub fn new(sigma: f64, n_est: usize) -> Self {
        Self {
            sigma,
            response: LinearResponse::default(),
            n_est,
            kick_sign: KickSign::Contract,
            quad: QuadSettings::default(),
            check_resolution: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        hilbert::check_sigma(self.sigma)?;
        if self.n_est == 0 {
            return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
        }
        self.quad.validate()
    }

    fn kick_angle(&self, a: f64) -> f64 {
        self.kick_sign.factor() * self.response.eval(a) / self.n_est as f64
    }

    fn gamma_shift(&self, alpha: f64, a: f64) -> f64 {
        alpha * self.kick_sign.factor() * self.response.eval(a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    AnalyticGaussian,
    NumericComposed,
}

/// `D(z) = R exp(i l . z - z^T C z / 2)` with a fixed matrix `R`.
#[derive(Clone, Debug)]
pub struct GaussianForm {
    pub r: CMat,
    pub linear: [f64; 3],
    pub cov: [[f64; 3]; 3],
}

impl GaussianForm {
    pub fn scalar(&self, z: ZVector) -> C64 {
        let z = z.to_array();
        let mut lin = 0.0;
        let mut quad = 0.0;
        for i in 0..3 {
            lin += self.linear[i] * z[i];
            for j in 0..3 {
                quad += z[i] * self.cov[i][j] * z[j];
            }
        }
        C64::new(-0.5 * quad, lin).exp()
    }

    pub fn is_constant(&self) -> bool {
        self.linear.iter().all(|&x| x == 0.0) && self.cov.iter().flatten().all(|&x| x == 0.0)
    }

    /// `int d alpha e^{-i alpha x} scalar(alpha, beta, gamma)` in closed form.
    pub fn alpha_fourier_scalar(&self, x: f64, beta: f64, gamma: f64) -> Result<C64> {
        let c = &self.cov;
        let a = c[0][0];
        if !(a > 0.0) {
            return Err(Error::DeltaSpectrum);
        }
        let l = &self.linear;
        let b = C64::new(-(c[0][1] * beta + c[0][2] * gamma), l[0] - x);
        let k = C64::new(
            -0.5 * (c[1][1] * beta * beta + 2.0 * c[1][2] * beta * gamma + c[2][2] * gamma * gamma),
            l[1] * beta + l[2] * gamma,
        );
        Ok((2.0 * PI / a).sqrt() * (k + b * b / (2.0 * a)).exp())
    }
}

/// A correlation field `D_{mu lambda}(z)` over a truncated trap basis.
pub trait CorrelationField: Send + Sync {
    fn basis(&self) -> &TrapBasis;

    /// Estimated atom number used in `Z`.
    fn n_est(&self) -> usize;

    fn kind(&self) -> FieldKind;

    /// Number of feedback stages folded into this field.
    fn depth(&self) -> usize {
        0
    }

    /// True when the field does not depend on `z` (exactly one atom).
    fn z_independent(&self) -> bool {
        false
    }

    /// `D(z)` as a matrix in the energy basis.
    fn matrix(&self, z: ZVector) -> Result<CMat>;

    /// Closed form, when the field belongs to the Gaussian family.
    fn gaussian(&self) -> Option<GaussianForm> {
        None
    }

    fn evaluate(&self, mu: usize, lambda: usize, z: ZVector) -> Result<C64> {
        Ok(self.matrix(z)?[(mu, lambda)])
    }
}

pub type Field = Arc<dyn CorrelationField>;

/// Field of the Gaussian family.
#[derive(Clone, Debug)]
pub struct GaussianField {
    pub form: GaussianForm,
    basis: TrapBasis,
    n_est: usize,
    depth: usize,
}

impl GaussianField {
    pub fn new(form: GaussianForm, basis: TrapBasis, n_est: usize) -> Self {
        Self { form, basis, n_est, depth: 0 }
    }

    /// z-independent field equal to `rho` everywhere.
    pub fn constant(rho: CMat, basis: TrapBasis, n_est: usize, depth: usize) -> Self {
        Self {
            form: GaussianForm { r: rho, linear: [0.0; 3], cov: [[0.0; 3]; 3] },
            basis,
            n_est,
            depth,
        }
    }
}

impl CorrelationField for GaussianField {
    fn basis(&self) -> &TrapBasis {
        &self.basis
    }
    fn n_est(&self) -> usize {
        self.n_est
    }
    fn kind(&self) -> FieldKind {
        FieldKind::AnalyticGaussian
    }
    fn depth(&self) -> usize {
        self.depth
    }
    fn z_independent(&self) -> bool {
        self.form.is_constant()
    }
    fn matrix(&self, z: ZVector) -> Result<CMat> {
        Ok(linalg::scale(&self.form.r, self.form.scalar(z)))
    }
    fn gaussian(&self) -> Option<GaussianForm> {
        Some(self.form.clone())
    }
}

/// Initial field of `n_atoms` non-interacting bosons all in the trap ground
/// state, with `N_e = N`.
pub fn bec_initial(n_atoms: usize, basis: &TrapBasis) -> Result<GaussianField> {
    bec_initial_with_estimate(n_atoms, n_atoms, basis)
}

/// Condensate field for an arbitrary estimate `N_e`; with one atom removed the
/// remaining `N - 1` atoms are a product of ground states.
pub fn bec_initial_with_estimate(n_atoms: usize, n_est: usize, basis: &TrapBasis) -> Result<GaussianField> {
    if n_atoms < 1 {
        return Err(Error::InvalidParameter("condensate needs at least one atom".into()));
    }
    if n_est == 0 {
        return Err(Error::InvalidParameter("estimated atom number must be positive".into()));
    }
    let n = n_atoms as f64;
    let ne = n_est as f64;
    let d = basis.dim;
    let r = Mat::from_fn(d, d, |i, j| if i == 0 && j == 0 { C64::new(n, 0.0) } else { C64::new(0.0, 0.0) });
    let rest = n - 1.0;
    let mut cov = [[0.0; 3]; 3];
    cov[0][0] = rest * basis.dp0 * basis.dp0;
    cov[1][1] = rest * basis.dq0 * basis.dq0 / (ne * ne);
    let form = GaussianForm { r, linear: [0.0, 0.0, rest / ne], cov };
    Ok(GaussianField::new(form, basis.clone(), n_est))
}

/// Single-atom density matrix: the field at `z = 0`.
pub fn sadm(field: &dyn CorrelationField) -> Result<CMat> {
    field.matrix(ZVector::ZERO)
}

/// Counters for evaluations that pass through an [`Instrumented`] field.
#[derive(Debug, Default)]
pub struct ProbeLog {
    pub calls: AtomicUsize,
    pub beta_nonzero: AtomicUsize,
}

impl ProbeLog {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
    pub fn beta_nonzero(&self) -> usize {
        self.beta_nonzero.load(Ordering::Relaxed)
    }
}

/// Wrapper that counts evaluations. It hides any closed form of the inner
/// field so every use goes through [`CorrelationField::matrix`].
pub struct Instrumented {
    inner: Field,
    pub log: Arc<ProbeLog>,
}

impl Instrumented {
    pub fn new(inner: Field) -> Self {
        Self { inner, log: Arc::new(ProbeLog::default()) }
    }
}

impl CorrelationField for Instrumented {
    fn basis(&self) -> &TrapBasis {
        self.inner.basis()
    }
    fn n_est(&self) -> usize {
        self.inner.n_est()
    }
    fn kind(&self) -> FieldKind {
        FieldKind::NumericComposed
    }
    fn depth(&self) -> usize {
        self.inner.depth()
    }
    fn z_independent(&self) -> bool {
        self.inner.z_independent()
    }
    fn matrix(&self, z: ZVector) -> Result<CMat> {
        self.log.calls.fetch_add(1, Ordering::Relaxed);
        if z.beta != 0.0 {
            self.log.beta_nonzero.fetch_add(1, Ordering::Relaxed);
        }
        self.inner.matrix(z)
    }
}

/// Field after one feedback loop, evaluated lazily through the full kernel and
/// memoized per `z`.
pub struct ComposedField {
    pre: Field,
    cfg: FeedbackConfig,
    depth: usize,
    memo: Mutex<HashMap<[i64; 3], CMat>>,
}

impl CorrelationField for ComposedField {
    fn basis(&self) -> &TrapBasis {
        self.pre.basis()
    }
    fn n_est(&self) -> usize {
        self.pre.n_est()
    }
    fn kind(&self) -> FieldKind {
        FieldKind::NumericComposed
    }
    fn depth(&self) -> usize {
        self.depth
    }
    fn matrix(&self, z: ZVector) -> Result<CMat> {
        let key = z.key();
        if let Some(m) = self.memo.lock().unwrap().get(&key) {
            return Ok(m.clone());
        }
        let m = feedback_full(self.pre.as_ref(), &self.cfg, z)?;
        self.memo.lock().unwrap().insert(key, m.clone());
        Ok(m)
    }
}

/// Field after one feedback loop. One-atom fields stay z-independent and are
/// propagated through the direct single-atom channel.
pub fn apply_feedback(pre: Field, cfg: &FeedbackConfig) -> Result<Field> {
    cfg.validate()?;
    check_estimate(pre.as_ref(), cfg)?;
    let depth = pre.depth() + 1;
    if depth > MAX_FEEDBACK_DEPTH {
        return Err(Error::DepthExceeded(depth));
    }
    if pre.z_independent() {
        let rho = single_atom_channel(&sadm(pre.as_ref())?, pre.basis(), cfg)?;
        return Ok(Arc::new(GaussianField::constant(rho, pre.basis().clone(), pre.n_est(), depth)));
    }
    let mut inner = cfg.clone();
    inner.check_resolution = false;
    Ok(Arc::new(ComposedField { pre, cfg: inner, depth, memo: Mutex::new(HashMap::new()) }))
}

fn check_estimate(field: &dyn CorrelationField, cfg: &FeedbackConfig) -> Result<()> {
    if field.n_est() != cfg.n_est {
        return Err(Error::InvalidParameter(format!(
            "field uses N_e = {} but the feedback loop uses N_e = {}",
            field.n_est(),
            cfg.n_est
        )));
    }
    Ok(())
}

/// Fourier transform of the field over `alpha` at fixed `(beta, gamma)`.
pub enum AlphaSpectrum {
    /// `R g(x)` with `g` known in closed form.
    Separable { form: GaussianForm, beta: f64, gamma: f64 },
    /// Quadrature samples `D(alpha_j, beta, gamma)`.
    Sampled { grid: Grid, values: Vec<CMat> },
}

impl AlphaSpectrum {
    pub fn matrix_at(&self, x: f64) -> Result<CMat> {
        match self {
            AlphaSpectrum::Separable { form, beta, gamma } => {
                Ok(linalg::scale(&form.r, form.alpha_fourier_scalar(x, *beta, *gamma)?))
            }
            AlphaSpectrum::Sampled { grid, values } => {
                let d = values[0].nrows();
                let mut out = linalg::zeros(d);
                for ((a, w), v) in grid.iter().zip(values) {
                    out += linalg::scale(v, C64::from_polar(w, -a * x));
                }
                Ok(out)
            }
        }
    }
}

/// Sampled spectrum on a symmetric grid wide enough for the field to decay.
/// Phase `alpha * x` allowed across one 16-node alpha panel.
const ALPHA_PANEL_PHASE: f64 = 8.0;

/// Alpha grid on `[-half, half]` fine enough that `e^{-i alpha x}` stays
/// resolved for every `|x| <= x_max`.
fn alpha_grid(half: f64, x_max: f64, quad: &QuadSettings) -> Grid {
    let panels = (2.0 * half * x_max / ALPHA_PANEL_PHASE).ceil() as usize;
    Grid::composite(-half, half, quad.n_alpha.max(panels * PANEL_NODES))
}

fn sampled_spectrum(field: &dyn CorrelationField, beta: f64, gamma: f64, x_max: f64, quad: &QuadSettings) -> Result<AlphaSpectrum> {
    let half = alpha_half_width(field, beta, gamma)?;
    let grid = alpha_grid(half, x_max, quad);
    let values = grid
        .nodes
        .iter()
        .map(|&a| field.matrix(ZVector::new(a, beta, gamma)))
        .collect::<Result<Vec<_>>>()?;
    Ok(AlphaSpectrum::Sampled { grid, values })
}

const ALPHA_TAIL_TOL: f64 = 1e-13;
const ALPHA_MAX: f64 = 1e4;
/// Accepted relative tail when the field has hit its numerical noise floor.
const ALPHA_TAIL_FLOOR: f64 = 1e-8;

/// Smallest power-of-two multiple of a base width at which the field has
/// decayed below `ALPHA_TAIL_TOL` of its value at `alpha = 0`.
fn alpha_half_width(field: &dyn CorrelationField, beta: f64, gamma: f64) -> Result<f64> {
    let d0 = linalg::max_abs(&field.matrix(ZVector::new(0.0, beta, gamma))?);
    let base = 0.5 / field.basis().dp0;
    let scale = d0.max(1e-300);
    let mut half = base;
    let mut previous = f64::INFINITY;
    loop {
        let lo = linalg::max_abs(&field.matrix(ZVector::new(-half, beta, gamma))?);
        let hi = linalg::max_abs(&field.matrix(ZVector::new(half, beta, gamma))?);
        let tail = lo.max(hi) / scale;
        if tail <= ALPHA_TAIL_TOL {
            return Ok(half);
        }
        // A numerically evaluated field stops decaying at its quadrature
        // noise floor; the previous width is the last resolved one.
        if tail > previous && previous <= ALPHA_TAIL_FLOOR {
            return Ok(half / 2.0);
        }
        if half >= ALPHA_MAX {
            return Err(Error::AlphaTailUnresolved { residual: tail, alpha: half });
        }
        previous = tail;
        half *= 2.0;
    }
}

/// `D~(x; beta, gamma) = int d alpha e^{-i alpha x} D(alpha, beta, gamma)`,
/// closed form for Gaussian fields and quadrature otherwise. The sampled form
/// is accurate for `|x| <= x_max`.
pub fn alpha_spectrum(field: &dyn CorrelationField, beta: f64, gamma: f64, x_max: f64, quad: &QuadSettings) -> Result<AlphaSpectrum> {
    if field.z_independent() {
        return Err(Error::DeltaSpectrum);
    }
    match field.gaussian() {
        Some(form) => Ok(AlphaSpectrum::Separable { form, beta, gamma }),
        None => sampled_spectrum(field, beta, gamma, x_max, quad),
    }
}

/// One entry of the `alpha` Fourier transform.
pub fn alpha_fourier(
    field: &dyn CorrelationField,
    mu: usize,
    lambda: usize,
    beta: f64,
    gamma: f64,
    x: f64,
    quad: &QuadSettings,
) -> Result<C64> {
    Ok(alpha_spectrum(field, beta, gamma, x.abs(), quad)?.matrix_at(x)?[(mu, lambda)])
}

/// Same transform forced through quadrature even for Gaussian fields.
pub fn alpha_fourier_numeric(
    field: &dyn CorrelationField,
    mu: usize,
    lambda: usize,
    beta: f64,
    gamma: f64,
    x: f64,
    quad: &QuadSettings,
) -> Result<C64> {
    if field.z_independent() {
        return Err(Error::DeltaSpectrum);
    }
    Ok(sampled_spectrum(field, beta, gamma, x.abs(), quad)?.matrix_at(x)?[(mu, lambda)])
}

/// Single-atom operators and spreads that set the quadrature ranges.
struct KernelSetup {
    p: Spectrum,
    q: Spectrum,
    /// `V_q^dagger V_p`: momentum eigenbasis to position eigenbasis.
    p_to_q: CMat,
    n_mean: f64,
    p_mean: f64,
    p_spread: f64,
    macro_mean: f64,
    macro_spread: f64,
    /// Momentum mean and spread of the other `N - 1` atoms.
    rest_mean: f64,
    rest_spread: f64,
}

impl KernelSetup {
    fn new(field: &dyn CorrelationField) -> Result<Self> {
        let basis = field.basis();
        let p_op = hilbert::momentum_op(basis);
        let q_op = hilbert::position_op(basis);
        let p = p_op.spectrum()?;
        let q = q_op.spectrum()?;
        let p_to_q = q.vectors.adjoint() * &p.vectors;
        let rho = sadm(field)?;
        let n_mean = linalg::trace(&rho).re;
        if !(n_mean > 0.0) {
            return Err(Error::InvalidParameter("field has non-positive atom number".into()));
        }
        let p1 = linalg::trace(&(&rho * &p_op.matrix)).re / n_mean;
        let p2 = linalg::trace(&(&rho * &p_op.matrix * &p_op.matrix)).re / n_mean;
        let p_spread = (p2 - p1 * p1).max(0.0).sqrt();
        let (rest_mean, rest_var) = match field.gaussian() {
            Some(g) => (g.linear[0], g.cov[0][0]),
            None => macro_moments(field, &rho)?,
        };
        Ok(Self {
            p,
            q,
            p_to_q,
            n_mean,
            p_mean: p1,
            p_spread,
            macro_mean: rest_mean + p1,
            macro_spread: (rest_var + p_spread * p_spread).sqrt(),
            rest_mean,
            rest_spread: rest_var.sqrt(),
        })
    }

    fn dim(&self) -> usize {
        self.p.dim()
    }

    /// `D~(x)` at fixed `beta, gamma` is the momentum distribution of the other
    /// `N - 1` atoms; beyond `range_mult` spreads of its mean it is dropped.
    fn in_rest_window(&self, cfg: &FeedbackConfig, x: f64) -> bool {
        (x - self.rest_mean).abs() <= cfg.quad.range_mult * self.rest_spread
    }

    fn rest_x_max(&self, cfg: &FeedbackConfig) -> f64 {
        self.rest_mean.abs() + cfg.quad.range_mult * self.rest_spread
    }

    /// Node count for a range of half-width `half`: at least `n_min`, and
    /// enough 16-node panels that each spans at most four times the momentum
    /// spread of the remaining `N - 1` atoms (the width of the ridge along
    /// `A - A'`).
    fn nodes_for(&self, half: f64, n_min: usize, res: f64) -> usize {
        let panel = 4.0 * self.rest_spread;
        let needed = if panel > 0.0 { (2.0 * half / panel).ceil() as usize * PANEL_NODES } else { 0 };
        ((n_min.max(needed) as f64 * res).round() as usize).max(PANEL_NODES)
    }

    fn a_grid(&self, cfg: &FeedbackConfig, res: f64) -> Grid {
        let half = cfg.quad.range_mult * (cfg.sigma + self.macro_spread);
        let n = self.nodes_for(half, cfg.quad.n_a, res);
        Grid::composite(self.macro_mean - half, self.macro_mean + half, n)
    }

    fn a_prime_grid(&self, cfg: &FeedbackConfig, res: f64) -> Grid {
        let half = cfg.quad.range_mult * (cfg.sigma + self.p_spread);
        let n = self.nodes_for(half, cfg.quad.n_a_prime, res);
        Grid::composite(self.p_mean - half, self.p_mean + half, n)
    }

    fn k_grid(&self, cfg: &FeedbackConfig, n: usize) -> Grid {
        let half = cfg.quad.range_mult / cfg.sigma;
        Grid::composite(-half, half, n)
    }

    /// Energy-basis matrix into the momentum eigenbasis.
    fn to_p(&self, m: &CMat) -> CMat {
        self.p.vectors.adjoint() * m * &self.p.vectors
    }

    /// `U(A) X U(A)^dagger` for `X` given in the momentum eigenbasis; result in
    /// the position eigenbasis.
    fn kick_p_to_q(&self, x_p: &CMat, theta: f64) -> CMat {
        let x_q = &self.p_to_q * x_p * self.p_to_q.adjoint();
        let ph: Vec<C64> = self.q.values.iter().map(|&b| C64::from_polar(1.0, theta * b)).collect();
        let d = self.dim();
        Mat::from_fn(d, d, |i, j| x_q[(i, j)] * ph[i] * ph[j].conj())
    }

    fn q_to_energy(&self, m: &CMat) -> CMat {
        &self.q.vectors * m * self.q.vectors.adjoint()
    }
}

/// Mean and variance of the `(N-1)`-atom total momentum read off the field's
/// dependence on `alpha` at the origin.
fn macro_moments(field: &dyn CorrelationField, rho: &CMat) -> Result<(f64, f64)> {
    let h = 1e-3 / field.basis().dp0;
    let t0 = linalg::trace(rho);
    let tp = linalg::trace(&field.matrix(ZVector::new(h, 0.0, 0.0))?);
    let tm = linalg::trace(&field.matrix(ZVector::new(-h, 0.0, 0.0))?);
    let mean = ((tp - tm) / (t0 * 2.0 * h)).im;
    let second = -((tp + tm - t0 * 2.0) / (t0 * h * h)).re;
    Ok((mean, (second - mean * mean).max(0.0)))
}

/// Direct single-atom channel `int dA U(A) M(A - p) rho M(A - p) U(A)^dagger`.
pub fn single_atom_channel(rho: &CMat, basis: &TrapBasis, cfg: &FeedbackConfig) -> Result<CMat> {
    cfg.validate()?;
    let p_op = hilbert::momentum_op(basis);
    let q_op = hilbert::position_op(basis);
    let p = p_op.spectrum()?;
    let q = q_op.spectrum()?;
    let n = linalg::trace(rho).re;
    let p1 = linalg::trace(&(rho * &p_op.matrix)).re / n;
    let p2 = linalg::trace(&(rho * &p_op.matrix * &p_op.matrix)).re / n;
    let spread = (p2 - p1 * p1).max(0.0).sqrt();
    let half = cfg.quad.range_mult * (cfg.sigma + spread);
    let grid = Grid::composite(p1 - half, p1 + half, cfg.quad.n_a);
    let rho_p = p.vectors.adjoint() * rho * &p.vectors;
    let p_to_q = q.vectors.adjoint() * &p.vectors;
    let d = basis.dim;
    let mut acc = linalg::zeros(d);
    for (a, w) in grid.iter() {
        let m: Vec<f64> = p.values.iter().map(|&x| amplitude(a - x, cfg.sigma)).collect();
        let y = Mat::from_fn(d, d, |i, j| rho_p[(i, j)] * (w * m[i] * m[j]));
        let yq = &p_to_q * &y * p_to_q.adjoint();
        let theta = cfg.kick_angle(a);
        let ph: Vec<C64> = q.values.iter().map(|&b| C64::from_polar(1.0, theta * b)).collect();
        acc += Mat::from_fn(d, d, |i, j| yq[(i, j)] * ph[i] * ph[j].conj());
    }
    Ok(&q.vectors * &acc * q.vectors.adjoint())
}

fn check_trace(out: &CMat, n_mean: f64) -> Result<()> {
    let dev = (linalg::trace(out).re - n_mean).abs();
    if dev > 1e-4 * n_mean {
        return Err(Error::KernelUnderResolved(format!(
            "trace {} differs from the atom number {} by {:e}",
            linalg::trace(out).re,
            n_mean,
            dev
        )));
    }
    Ok(())
}

/// Single-atom density matrix right after one feedback loop.
///
/// Evaluates
/// `rho(t+) = (1/2pi) int dA dA' U(A) M(A' - p) D~(A - A'; 0, 0) M(A' - p) U(A)^dagger`
/// on a tensor Gauss-Legendre grid, building the resolution amplitudes as
/// matrix functions in the energy basis. A z-independent field goes through
/// the direct single-atom channel instead.
pub fn feedback_reduced(pre: &dyn CorrelationField, cfg: &FeedbackConfig) -> Result<CMat> {
    cfg.validate()?;
    check_estimate(pre, cfg)?;
    if pre.z_independent() {
        let rho = sadm(pre)?;
        let out = single_atom_channel(&rho, pre.basis(), cfg)?;
        check_trace(&out, linalg::trace(&rho).re)?;
        return Ok(out);
    }
    let setup = KernelSetup::new(pre)?;
    let basis = pre.basis();
    let d = basis.dim;
    let p_op = hilbert::momentum_op(basis);
    let q_op = hilbert::position_op(basis);
    let spectrum = alpha_spectrum(pre, 0.0, 0.0, setup.rest_x_max(cfg), &cfg.quad)?;
    let a_grid = setup.a_grid(cfg, 1.0);
    let ap_grid = setup.a_prime_grid(cfg, 1.0);
    let amps = ap_grid
        .nodes
        .iter()
        .map(|&ap| hilbert::resolution_amplitude(ap, cfg.sigma, &p_op).map(|m| m.matrix))
        .collect::<Result<Vec<_>>>()?;

    let mut out = linalg::zeros(d);
    match &spectrum {
        AlphaSpectrum::Separable { form, .. } => {
            let sandwiched: Vec<CMat> = amps.iter().map(|m| m * &form.r * m).collect();
            for (a, wa) in a_grid.iter() {
                let mut x = linalg::zeros(d);
                for ((ap, wp), s) in ap_grid.iter().zip(&sandwiched) {
                    let g = form.alpha_fourier_scalar(a - ap, 0.0, 0.0)?;
                    x += linalg::scale(s, g * wp);
                }
                let u = hilbert::kick_unitary_signed(a, cfg.response, cfg.n_est, &q_op, cfg.kick_sign)?.matrix;
                out += linalg::scale(&linalg::conjugate_by(&u, &x), C64::new(wa, 0.0));
            }
        }
        AlphaSpectrum::Sampled { .. } => {
            for (a, wa) in a_grid.iter() {
                let mut x = linalg::zeros(d);
                for ((ap, wp), m) in ap_grid.iter().zip(&amps) {
                    if !setup.in_rest_window(cfg, a - ap) {
                        continue;
                    }
                    let dt = spectrum.matrix_at(a - ap)?;
                    x += linalg::scale(&(m * &dt * m), C64::new(wp, 0.0));
                }
                let u = hilbert::kick_unitary_signed(a, cfg.response, cfg.n_est, &q_op, cfg.kick_sign)?.matrix;
                out += linalg::scale(&linalg::conjugate_by(&u, &x), C64::new(wa, 0.0));
            }
        }
    }
    let out = linalg::scale(&out, C64::new(1.0 / (2.0 * PI), 0.0));
    check_trace(&out, setup.n_mean)?;
    Ok(out)
}

/// `D(z, t+)` over all mode pairs after one feedback loop.
///
/// For `beta = 0` this is a two-dimensional `(A, A')` quadrature; otherwise a
/// three-dimensional `(A, A', k)` quadrature with the `A''` integral done in
/// closed form (see the module docs). z-independent fields go through the
/// direct single-atom channel.
pub fn feedback_full(pre: &dyn CorrelationField, cfg: &FeedbackConfig, z: ZVector) -> Result<CMat> {
    cfg.validate()?;
    check_estimate(pre, cfg)?;
    if !z.is_finite() {
        return Err(Error::InvalidParameter(format!("non-finite z {z:?}")));
    }
    if pre.depth() + 1 > MAX_FEEDBACK_DEPTH {
        return Err(Error::DepthExceeded(pre.depth() + 1));
    }
    if pre.z_independent() {
        return single_atom_channel(&sadm(pre)?, pre.basis(), cfg);
    }
    let setup = KernelSetup::new(pre)?;
    let out = full_kernel(pre, cfg, &setup, z, 1.0)?;
    if cfg.check_resolution {
        let coarse = full_kernel(pre, cfg, &setup, z, 0.5)?;
        let scale = linalg::max_abs(&out).max(1e-300);
        let change = linalg::max_abs_diff(&out, &coarse) / scale;
        if change > 1e-3 {
            return Err(Error::KernelUnderResolved(format!(
                "relative change {change:e} between half and full resolution at z = {z:?}"
            )));
        }
    }
    if z == ZVector::ZERO {
        check_trace(&out, setup.n_mean)?;
    }
    Ok(out)
}

fn full_kernel(pre: &dyn CorrelationField, cfg: &FeedbackConfig, setup: &KernelSetup, z: ZVector, res: f64) -> Result<CMat> {
    let quad = cfg.quad.scaled(res);
    if z.beta == 0.0 {
        kernel_beta_zero(pre, cfg, setup, &quad, z, res)
    } else {
        kernel_beta_nonzero(pre, cfg, setup, &quad, z, res)
    }
}

/// Pair index helpers for elementwise work in the momentum eigenbasis.
fn pair_table<F: Fn(usize, usize) -> C64>(d: usize, f: F) -> Vec<C64> {
    let mut v = Vec::with_capacity(d * d);
    for j in 0..d {
        for i in 0..d {
            v.push(f(i, j));
        }
    }
    v
}

fn kernel_beta_zero(pre: &dyn CorrelationField, cfg: &FeedbackConfig, setup: &KernelSetup, quad: &QuadSettings, z: ZVector, res: f64) -> Result<CMat> {
    let d = setup.dim();
    let pv = &setup.p.values;
    let a_grid = setup.a_grid(cfg, res);
    let ap_grid = setup.a_prime_grid(cfg, res);
    let sigma = cfg.sigma;
    // m(A' - p_a) m(A' - p_b) per A'
    let envelopes: Vec<Vec<f64>> = ap_grid
        .nodes
        .iter()
        .map(|&ap| {
            let m: Vec<f64> = pv.iter().map(|&x| amplitude(ap - x, sigma)).collect();
            let mut e = Vec::with_capacity(d * d);
            for j in 0..d {
                for i in 0..d {
                    e.push(m[i] * m[j]);
                }
            }
            e
        })
        .collect();

    let mut acc = linalg::zeros(d);
    let gaussian = pre.gaussian();
    let mut sampled_cache: HashMap<i64, (Grid, Vec<CMat>)> = HashMap::new();
    for (a, wa) in a_grid.iter() {
        let gamma_p = z.gamma + cfg.gamma_shift(z.alpha, a);
        let mut y = vec![C64::new(0.0, 0.0); d * d];
        match &gaussian {
            Some(form) => {
                let r_p = setup.to_p(&form.r);
                let r = pair_table(d, |i, j| r_p[(i, j)]);
                for ((ap, wp), env) in ap_grid.iter().zip(&envelopes) {
                    let x = a - ap;
                    let s = form.alpha_fourier_scalar(x, 0.0, gamma_p)? * C64::from_polar(wp, z.alpha * x);
                    for ((yv, rv), ev) in y.iter_mut().zip(&r).zip(env) {
                        *yv += s * *rv * *ev;
                    }
                }
            }
            None => {
                let key = (gamma_p * 1e12).round() as i64;
                if !sampled_cache.contains_key(&key) {
                    if let AlphaSpectrum::Sampled { grid, values } = sampled_spectrum(pre, 0.0, gamma_p, setup.rest_x_max(cfg), quad)? {
                        let vp = values.iter().map(|v| setup.to_p(v)).collect();
                        sampled_cache.insert(key, (grid, vp));
                    }
                }
                let (agrid, vals) = &sampled_cache[&key];
                for ((alpha_j, wj), dj) in agrid.iter().zip(vals) {
                    // sum over A' of e^{i (alpha - alpha_j)(A - A')} envelope
                    let mut phi = vec![C64::new(0.0, 0.0); d * d];
                    for ((ap, wp), env) in ap_grid.iter().zip(&envelopes) {
                        if !setup.in_rest_window(cfg, a - ap) {
                            continue;
                        }
                        let s = C64::from_polar(wp, (z.alpha - alpha_j) * (a - ap));
                        for (pv, ev) in phi.iter_mut().zip(env) {
                            *pv += s * *ev;
                        }
                    }
                    let mut idx = 0;
                    for jj in 0..d {
                        for ii in 0..d {
                            y[idx] += phi[idx] * dj[(ii, jj)] * wj;
                            idx += 1;
                        }
                    }
                }
            }
        }
        let y_p = Mat::from_fn(d, d, |i, j| y[j * d + i]);
        acc += linalg::scale(&setup.kick_p_to_q(&y_p, cfg.kick_angle(a)), C64::new(wa, 0.0));
    }
    Ok(linalg::scale(&setup.q_to_energy(&acc), C64::new(1.0 / (2.0 * PI), 0.0)))
}

fn kernel_beta_nonzero(pre: &dyn CorrelationField, cfg: &FeedbackConfig, setup: &KernelSetup, quad: &QuadSettings, z: ZVector, res: f64) -> Result<CMat> {
    let d = setup.dim();
    let np = d * d;
    let pv = &setup.p.values;
    let sigma = cfg.sigma;
    let a_grid = setup.a_grid(cfg, res);
    let ap_grid = setup.a_prime_grid(cfg, res);
    let k_grid = setup.k_grid(cfg, quad.n_k);
    let c2 = 1.0 / (2.0 * PI * sigma * sigma).sqrt();
    let pref = c2 * (2.0 * PI).sqrt() * sigma / (4.0 * PI * PI);

    // G[A'][pair] = exp(-(A' - pbar)^2 / (2 sigma^2)), E[k][pair] = exp(i k delta / 2 - sigma^2 k^2 / 2)
    let g_tab: Vec<Vec<f64>> = ap_grid
        .nodes
        .iter()
        .map(|&ap| {
            let mut v = Vec::with_capacity(np);
            for j in 0..d {
                for i in 0..d {
                    let pbar = 0.5 * (pv[i] + pv[j]);
                    v.push((-(ap - pbar).powi(2) / (2.0 * sigma * sigma)).exp());
                }
            }
            v
        })
        .collect();
    let e_mat = Mat::from_fn(k_grid.len(), np, |kk, pair| {
        let (i, j) = (pair % d, pair / d);
        let k = k_grid.nodes[kk];
        C64::from_polar((-0.5 * sigma * sigma * k * k).exp(), 0.5 * k * (pv[i] - pv[j]))
    });

    let mut acc = linalg::zeros(d);
    match pre.gaussian() {
        Some(form) => {
            let r_p = setup.to_p(&form.r);
            let r = pair_table(d, |i, j| r_p[(i, j)]);
            for (a, wa) in a_grid.iter() {
                let gamma0 = z.gamma + cfg.gamma_shift(z.alpha, a);
                let s = Mat::from_fn(ap_grid.len(), k_grid.len(), |ia, ik| {
                    let (ap, wp) = (ap_grid.nodes[ia], ap_grid.weights[ia]);
                    let (k, wk) = (k_grid.nodes[ik], k_grid.weights[ik]);
                    let x = a - ap;
                    let g = form
                        .alpha_fourier_scalar(x, z.beta, gamma0 + BETA_COUPLING * z.beta * k)
                        .unwrap_or(C64::new(0.0, 0.0));
                    g * C64::from_polar(wp * wk, z.alpha * x)
                });
                let h = &s * &e_mat;
                let mut y = vec![C64::new(0.0, 0.0); np];
                for (ia, g) in g_tab.iter().enumerate() {
                    for pair in 0..np {
                        y[pair] += h[(ia, pair)] * g[pair];
                    }
                }
                let y_p = Mat::from_fn(d, d, |i, j| y[j * d + i] * r[j * d + i] * pref);
                acc += linalg::scale(&setup.kick_p_to_q(&y_p, cfg.kick_angle(a)), C64::new(wa, 0.0));
            }
        }
        None => {
            // Generic field: D~ by quadrature over alpha with the sum over A'
            // folded into phi[j][pair] per outcome A.
            let half = alpha_half_width(pre, z.beta, z.gamma)?;
            let agrid = alpha_grid(half, setup.rest_x_max(cfg), quad);
            for (a, wa) in a_grid.iter() {
                let gamma0 = z.gamma + cfg.gamma_shift(z.alpha, a);
                let phi: Vec<Vec<C64>> = agrid
                    .nodes
                    .iter()
                    .map(|&alpha_j| {
                        let mut v = vec![C64::new(0.0, 0.0); np];
                        for ((ap, wp), g) in ap_grid.iter().zip(&g_tab) {
                            if !setup.in_rest_window(cfg, a - ap) {
                                continue;
                            }
                            let s = C64::from_polar(wp, (z.alpha - alpha_j) * (a - ap));
                            for (vv, gv) in v.iter_mut().zip(g) {
                                *vv += s * *gv;
                            }
                        }
                        v
                    })
                    .collect();
                let mut y = vec![C64::new(0.0, 0.0); np];
                for (ik, (k, wk)) in k_grid.iter().enumerate() {
                    let gamma_p = gamma0 + BETA_COUPLING * z.beta * k;
                    for ((alpha_j, wj), ph) in agrid.iter().zip(&phi) {
                        let dj = setup.to_p(&pre.matrix(ZVector::new(alpha_j, z.beta, gamma_p))?);
                        let mut idx = 0;
                        for jj in 0..d {
                            for ii in 0..d {
                                y[idx] += e_mat[(ik, idx)] * ph[idx] * dj[(ii, jj)] * (wk * wj);
                                idx += 1;
                            }
                        }
                    }
                }
                let y_p = Mat::from_fn(d, d, |i, j| y[j * d + i] * pref);
                acc += linalg::scale(&setup.kick_p_to_q(&y_p, cfg.kick_angle(a)), C64::new(wa, 0.0));
            }
        }
    }
    Ok(setup.q_to_energy(&acc))
}

/// Reference evaluation of the feedback kernel with all four integrals
/// `(A, A', A'', k)` done by quadrature and the resolution amplitudes
/// evaluated at `A' + A''` (left) and `A' - A''` (right).
///
/// Only practical for small bases and node counts; it exists to check the
/// closed-form `A''` reduction used by [`feedback_full`]. Requires a Gaussian
/// field and `beta != 0`.
pub fn feedback_full_direct(pre: &dyn CorrelationField, cfg: &FeedbackConfig, z: ZVector) -> Result<CMat> {
    cfg.validate()?;
    check_estimate(pre, cfg)?;
    let form = pre
        .gaussian()
        .ok_or_else(|| Error::InvalidParameter("reference kernel needs a Gaussian field".into()))?;
    if z.beta == 0.0 {
        return Err(Error::InvalidParameter("reference kernel needs beta != 0".into()));
    }
    let setup = KernelSetup::new(pre)?;
    let d = setup.dim();
    let pv = &setup.p.values;
    let sigma = cfg.sigma;
    let quad = &cfg.quad;
    let a_grid = setup.a_grid(cfg, 1.0);
    let ap_grid = setup.a_prime_grid(cfg, 1.0);
    let k_grid = setup.k_grid(cfg, quad.n_k);
    let half = quad.range_mult * sigma;
    let app_grid = Grid::composite(-half, half, quad.n_a_double_prime);
    let r_p = setup.to_p(&form.r);
    let mut acc = linalg::zeros(d);
    for (a, wa) in a_grid.iter() {
        let gamma0 = z.gamma + cfg.gamma_shift(z.alpha, a);
        let mut y = linalg::zeros(d);
        for (ap, wp) in ap_grid.iter() {
            let x = a - ap;
            let s = k_grid
                .iter()
                .map(|(k, wk)| {
                    let g = form.alpha_fourier_scalar(x, z.beta, gamma0 + BETA_COUPLING * z.beta * k)?;
                    Ok((k, g * C64::from_polar(wp * wk / (4.0 * PI * PI), z.alpha * x)))
                })
                .collect::<Result<Vec<_>>>()?;
            for (app, wpp) in app_grid.iter() {
                let t: C64 = s.iter().map(|&(k, sk)| sk * C64::from_polar(wpp, k * app)).sum();
                let ml: Vec<f64> = pv.iter().map(|&v| amplitude(ap + app - v, sigma)).collect();
                let mr: Vec<f64> = pv.iter().map(|&v| amplitude(ap - app - v, sigma)).collect();
                for j in 0..d {
                    for i in 0..d {
                        y[(i, j)] += t * r_p[(i, j)] * (ml[i] * mr[j]);
                    }
                }
            }
        }
        acc += linalg::scale(&setup.kick_p_to_q(&y, cfg.kick_angle(a)), C64::new(wa, 0.0));
    }
    Ok(setup.q_to_energy(&acc))
}
