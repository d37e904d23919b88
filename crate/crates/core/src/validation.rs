//! The validation suite: kernel path against the Fock-space oracle and closed
//! forms, grouped into ten numbered criteria.
//!
//! Physical parameters are fixed per criterion (negative feedback `f(A) = -A`,
//! `N_e = N`); the trap frequency, truncation, node counts, oracle settings
//! and kick sign come from the run configuration.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corrdyn::{self, CorrelationField, FeedbackConfig, Field, ZVector};
use crate::error::{Error, Result};
use crate::experiments::{self, RunConfig};
use crate::freeprop;
use crate::hilbert::{KickSign, LinearResponse, TrapBasis};
use crate::linalg::{self, CMat};
use crate::observables::{self, MomentReport};
use crate::oracle::{self, ManyBodyState, ManyBodySystem, OracleField, OracleSettings};

pub const CRITERIA: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
}

/// One line of the validation report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    pub status: Status,
    pub observed: f64,
    pub tolerance: f64,
    /// The physical statement the check exercises.
    pub paper_ref: String,
}

impl CheckResult {
    /// Passes when `observed <= tolerance` (NaN fails).
    pub fn new(check: impl Into<String>, observed: f64, tolerance: f64, relation: impl Into<String>) -> Self {
        let status = if observed <= tolerance { Status::Pass } else { Status::Fail };
        Self { check: check.into(), status, observed, tolerance, paper_ref: relation.into() }
    }

    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CriterionReport {
    pub id: usize,
    pub title: String,
    pub checks: Vec<CheckResult>,
    pub seconds: f64,
}

impl CriterionReport {
    pub fn passed(&self) -> bool {
        !self.checks.is_empty() && self.checks.iter().all(CheckResult::passed)
    }
}

/// Settings shared by all criteria.
#[derive(Clone, Debug)]
pub struct Context {
    pub omega: f64,
    pub dim: usize,
    pub quad: corrdyn::QuadSettings,
    pub oracle_modes: Option<usize>,
    pub a_nodes: usize,
    pub fock_cap: usize,
    pub kick_sign: KickSign,
}

impl Context {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            omega: cfg.omega,
            dim: cfg.dim,
            quad: cfg.quad.clone(),
            oracle_modes: cfg.oracle.n_modes,
            a_nodes: cfg.oracle.a_nodes,
            fock_cap: cfg.oracle.fock_cap,
            kick_sign: cfg.kick_sign,
        }
    }

    fn basis(&self) -> Result<TrapBasis> {
        TrapBasis::new(self.dim, self.omega)
    }

    fn feedback(&self, basis: &TrapBasis, n_atoms: usize, sigma_over_dp0: f64) -> FeedbackConfig {
        FeedbackConfig {
            sigma: sigma_over_dp0 * basis.dp0,
            response: LinearResponse::default(),
            n_est: n_atoms,
            kick_sign: self.kick_sign,
            quad: self.quad.clone(),
            check_resolution: true,
        }
    }

    fn modes(&self, n_atoms: usize, sigma_over_dp0: f64) -> usize {
        self.oracle_modes.unwrap_or_else(|| oracle::suggested_modes(n_atoms, sigma_over_dp0))
    }

    /// Correlated test states occupy the lowest three modes and spread
    /// further than a condensate, so they get four extra modes.
    fn mixed_modes(&self, n_atoms: usize, sigma_over_dp0: f64) -> usize {
        self.oracle_modes.unwrap_or_else(|| oracle::suggested_modes(n_atoms, sigma_over_dp0) + 4)
    }

    fn settings(&self) -> OracleSettings {
        OracleSettings { a_nodes: self.a_nodes, ..OracleSettings::default() }
    }

    fn system(&self, n_atoms: usize, n_modes: usize) -> Result<ManyBodySystem> {
        ManyBodySystem::with_cap(&TrapBasis::new(n_modes, self.omega)?, n_atoms, n_modes, self.fock_cap)
    }

    fn run_config(&self) -> RunConfig {
        RunConfig {
            omega: self.omega,
            dim: self.dim,
            quad: self.quad.clone(),
            kick_sign: self.kick_sign,
            ..RunConfig::default()
        }
    }
}

/// Oracle run: moments before and after one loop.
struct OracleRun {
    system: ManyBodySystem,
    post_state: ManyBodyState,
    pre: MomentReport,
    post: MomentReport,
    trace_deviation: f64,
}

fn oracle_run(ctx: &Context, system: ManyBodySystem, state: ManyBodyState, sigma_over_dp0: f64) -> Result<OracleRun> {
    let n = system.n_atoms();
    let fb = ctx.feedback(&system.trap, n, sigma_over_dp0);
    let out = system.exact_feedback(&state, &fb, &ctx.settings())?;
    let pre = observables::moments(&system.single_atom_dm(&state), &system.trap)?;
    let post = observables::moments(&system.single_atom_dm(&out.state), &system.trap)?;
    Ok(OracleRun { system, post_state: out.state, pre, post, trace_deviation: out.trace_deviation })
}

fn oracle_bec(ctx: &Context, n_atoms: usize, sigma_over_dp0: f64) -> Result<OracleRun> {
    let system = ctx.system(n_atoms, ctx.modes(n_atoms, sigma_over_dp0))?;
    let state = ManyBodyState::condensate(&system.fock);
    oracle_run(ctx, system, state, sigma_over_dp0)
}

fn kernel_bec(ctx: &Context, n_atoms: usize, sigma_over_dp0: f64) -> Result<(CMat, MomentReport)> {
    let basis = ctx.basis()?;
    let pre = corrdyn::bec_initial(n_atoms, &basis)?;
    let rho = corrdyn::feedback_reduced(&pre, &ctx.feedback(&basis, n_atoms, sigma_over_dp0))?;
    let m = observables::moments(&rho, &basis)?;
    Ok((rho, m))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn tag(n: usize, s: f64) -> String {
    format!("N={n}, sigma/dp0={s}")
}

const R_SIGMA2: &str = "one atom keeps only the measurement variance sigma^2";
const R_MEAN: &str = "feedback compensates the mean momentum without affecting the position";
const R_BACKACTION: &str = "measurement back-action adds 1/(4 sigma^2) to the position variance";
const R_AVAR: &str = "momentum variance reduced by the knowledge gained on the total momentum";
const R_BEC: &str = "condensate momentum variance dp0^2 (1 - 1/N) + sigma^2/N^2";
const R_KERNEL: &str = "feedback kernel maps the correlation field exactly";
const R_FIG2: &str = "single-atom momentum variance converges to the ground-state value";
const R_FIG3: &str = "uncertainty product reaches [1 + (dp0/sigma)^2]^(1/2) for large N";
const R_FREE: &str = "free evolution maps the field through V(t)^T z and energy phases";
const R_DECOR: &str = "imprecise measurements generate almost no correlations between atoms";
const R_CHANNEL: &str = "the feedback loop is a trace-preserving completely positive map";
const R_KICK: &str = "the kick shifts the measured observable by f(A) N / N_e";

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "single-atom exact channel",
        2 => "moment relations",
        3 => "momentum-variance identity on correlated states",
        4 => "condensate closed form",
        5 => "kernel against oracle field",
        6 => "momentum-variance asymptote",
        7 => "uncertainty-product asymptote and minimum",
        8 => "free-evolution kernel",
        9 => "decorrelation trend",
        10 => "channel sanity",
        _ => "unknown",
    }
}

/// Runs one criterion; numerical errors inside are reported as failed checks,
/// capacity and configuration errors are returned.
pub fn run_criterion(id: usize, ctx: &Context) -> Result<CriterionReport> {
    let start = Instant::now();
    let result = match id {
        1 => criterion_1(ctx),
        2 => criterion_2(ctx),
        3 => criterion_3(ctx),
        4 => criterion_4(ctx),
        5 => criterion_5(ctx),
        6 => criterion_6(ctx),
        7 => criterion_7(ctx),
        8 => criterion_8(ctx),
        9 => criterion_9(ctx),
        10 => criterion_10(ctx),
        _ => return Err(Error::InvalidParameter(format!("unknown criterion {id}"))),
    };
    let checks = match result {
        Ok(c) => c,
        Err(e) if matches!(e.exit_code(), 2 | 4) => return Err(e),
        Err(e) => vec![CheckResult::new(format!("error: {e}"), f64::NAN, 0.0, "computation completed")],
    };
    Ok(CriterionReport { id, title: title(id).into(), checks, seconds: start.elapsed().as_secs_f64() })
}

pub fn run_all(ctx: &Context) -> Result<Vec<CriterionReport>> {
    (1..=CRITERIA).map(|id| run_criterion(id, ctx)).collect()
}

fn criterion_1(ctx: &Context) -> Result<Vec<CheckResult>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for s in [1.0, 1.5, 2.0] {
        let o = oracle_bec(ctx, 1, s)?;
        let sigma2 = (s * o.system.trap.dp0).powi(2);
        out.push(CheckResult::new(format!("oracle var_p / sigma^2 - 1, {}", tag(1, s)), rel(o.post.var_p, sigma2), 1e-6, R_SIGMA2));
        let (_, k) = kernel_bec(ctx, 1, s)?;
        out.push(CheckResult::new(format!("kernel var_p / sigma^2 - 1, {}", tag(1, s)), rel(k.var_p, sigma2), 1e-4, R_SIGMA2));
    }
    out.push(CheckResult::new("runtime [s]", start.elapsed().as_secs_f64(), 1.0, R_SIGMA2));
    Ok(out)
}

fn criterion_2(ctx: &Context) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let s = 1.5;
    for n in 1..=3usize {
        let system = ctx.system(n, ctx.mixed_modes(n, s))?;
        let state = ManyBodyState::random_mixture(&system.fock, 2, 3, 10 + n as u64);
        let o = oracle_run(ctx, system, state, s)?;
        let sigma = s * o.system.trap.dp0;
        let t = tag(n, s);
        out.push(CheckResult::new(format!("<p> after, correlated state, {t}"), o.post.mean_p.abs(), 1e-8, R_MEAN));
        out.push(CheckResult::new(format!("<q> change, correlated state, {t}"), (o.post.mean_q - o.pre.mean_q).abs(), 1e-8, R_MEAN));
        let dq = o.post.var_q - o.pre.var_q - 1.0 / (4.0 * sigma * sigma);
        out.push(CheckResult::new(format!("var_q increase - 1/(4 sigma^2), {t}"), dq.abs(), 1e-6, R_BACKACTION));
    }
    out.push(kick_law_check(ctx)?);
    Ok(out)
}

/// `U^dagger A U - (A + f N / N_e)` on states confined to low modes, with
/// `U = exp(i sign f B)` built on the full sector.
pub fn kick_law_check(ctx: &Context) -> Result<CheckResult> {
    let (n, m, low, f) = (2usize, 24usize, 6usize, 0.5);
    let system = ctx.system(n, m)?;
    let b = system.macro_b(n)?;
    let u = linalg::expm_i_hermitian(&linalg::scale(&b, num_complex::Complex64::new(ctx.kick_sign.factor() * f, 0.0)))?;
    let a = &system.p_total.matrix;
    let lhs = u.adjoint() * a * &u;
    let safe: Vec<usize> = (0..system.fock.dim())
        .filter(|&i| system.fock.states[i].iter().skip(low).all(|&k| k == 0))
        .collect();
    let shift = f * n as f64 / n as f64;
    let mut dev = 0.0f64;
    for &i in &safe {
        for &j in &safe {
            let expect = a[(i, j)] + if i == j { num_complex::Complex64::new(shift, 0.0) } else { num_complex::Complex64::new(0.0, 0.0) };
            dev = dev.max((lhs[(i, j)] - expect).norm());
        }
    }
    Ok(CheckResult::new("kick transformation law on low-mode states, N=2", dev, 1e-8, R_KICK))
}

fn criterion_3(ctx: &Context) -> Result<Vec<CheckResult>> {
    let (n, s) = (3usize, 1.5);
    let mut out = Vec::new();
    let system = Arc::new(ctx.system(n, ctx.mixed_modes(n, s))?);
    for seed in 1..=5u64 {
        let state = ManyBodyState::random_mixture(&system.fock, 3, 3, seed);
        let fb = ctx.feedback(&system.trap, n, s);
        let post = system.exact_feedback(&state, &fb, &ctx.settings())?;
        let pre_m = observables::moments(&system.single_atom_dm(&state), &system.trap)?;
        let post_m = observables::moments(&system.single_atom_dm(&post.state), &system.trap)?;
        let macro_var = observables::macro_variance_a(&system, &state);
        let r = observables::avar_check(&pre_m, macro_var, &post_m, n, fb.sigma);
        out.push(CheckResult::new(format!("momentum-variance identity residual, seed {seed}"), r.abs(), 1e-6, R_AVAR));
    }
    Ok(out)
}

fn criterion_4(ctx: &Context) -> Result<Vec<CheckResult>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for n in 1..=5usize {
        let widths: &[f64] = if n <= 3 { &[1.0, 2.0] } else { &[2.0] };
        for &s in widths {
            let o = oracle_bec(ctx, n, s)?;
            let d = (o.post.var_p_scaled - observables::bec_var_p_scaled(n, s)).abs();
            out.push(CheckResult::new(format!("oracle var_p_scaled vs closed form, {}", tag(n, s)), d, 1e-6, R_BEC));
        }
        for s in [1.0, 1.5, 2.0] {
            let (_, k) = kernel_bec(ctx, n, s)?;
            let d = (k.var_p_scaled - observables::bec_var_p_scaled(n, s)).abs();
            out.push(CheckResult::new(format!("kernel var_p_scaled vs closed form, {}", tag(n, s)), d, 1e-3, R_BEC));
        }
    }
    out.push(CheckResult::new("runtime [s]", start.elapsed().as_secs_f64(), 60.0, R_BEC));
    Ok(out)
}

/// Pseudo-random points in `[-1, 1]^3`.
pub fn random_z(count: usize, seed: u64) -> Vec<ZVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| ZVector::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect()
}

fn block_rel_err(kernel: &CMat, oracle: &CMat, k: usize) -> f64 {
    let kb = linalg::leading_block(kernel, k);
    let ob = linalg::leading_block(oracle, k);
    linalg::max_abs_diff(&kb, &ob) / linalg::max_abs(&ob)
}

fn criterion_5(ctx: &Context) -> Result<Vec<CheckResult>> {
    let start = Instant::now();
    let mut out = Vec::new();
    for n in [2usize, 3] {
        for s in [1.0, 2.0] {
            let o = oracle_bec(ctx, n, s)?;
            let m = o.system.n_modes();
            let basis = TrapBasis::new(m + 8, ctx.omega)?;
            let fb = ctx.feedback(&basis, n, s);
            let pre = corrdyn::bec_initial(n, &basis)?;
            let block = m.min(10);
            let mut worst = 0.0f64;
            for z in random_z(10, 100 * n as u64 + (10.0 * s) as u64) {
                let k = corrdyn::feedback_full(&pre, &fb, z)?;
                let r = o.system.correlation_matrix(&o.post_state, z, n)?;
                worst = worst.max(block_rel_err(&k, &r, block));
            }
            out.push(CheckResult::new(format!("max relative error over 10 z, {}", tag(n, s)), worst, 1e-3, R_KERNEL));
            let full = corrdyn::feedback_full(&pre, &fb, ZVector::ZERO)?;
            let reduced = corrdyn::feedback_reduced(&pre, &fb)?;
            out.push(CheckResult::new(
                format!("full kernel at z=0 vs reduced map, {}", tag(n, s)),
                linalg::max_abs_diff(&full, &reduced),
                1e-6,
                R_KERNEL,
            ));
        }
    }
    out.push(CheckResult::new("runtime [s]", start.elapsed().as_secs_f64(), 300.0, R_KERNEL));
    Ok(out)
}

fn criterion_6(ctx: &Context) -> Result<Vec<CheckResult>> {
    let cfg = ctx.run_config();
    let rows = experiments::fig2_rows(&cfg)?;
    let mut out = Vec::new();
    for &s in &cfg.sigma_over_dp0 {
        let curve: Vec<_> = rows.iter().filter(|r| r.sigma_over_dp0 == s).collect();
        let last = curve.iter().find(|r| r.n_atoms == 100).expect("N = 100 in default list");
        out.push(CheckResult::new(
            format!("var_p_scaled at N=100 vs closed form, sigma/dp0={s}"),
            (last.value - observables::bec_var_p_scaled(100, s)).abs(),
            1e-3,
            R_FIG2,
        ));
        // Beyond N = 2 sigma~^2 the curve rises monotonically towards 1 from below.
        let tail: Vec<f64> = curve.iter().filter(|r| r.n_atoms as f64 >= 2.0 * s * s).map(|r| r.value).collect();
        let violations = tail.windows(2).filter(|w| w[1] <= w[0]).count() + tail.iter().filter(|&&v| v >= 1.0).count();
        out.push(CheckResult::new(
            format!("non-monotone steps approaching 1 from below, sigma/dp0={s}"),
            violations as f64,
            0.0,
            R_FIG2,
        ));
    }
    Ok(out)
}

fn criterion_7(ctx: &Context) -> Result<Vec<CheckResult>> {
    let mut cfg = ctx.run_config();
    cfg.sigma_over_dp0 = vec![1.0];
    cfg.n_atoms = (1..=10).chain([200]).collect();
    let rows = experiments::fig3_rows(&cfg)?;
    let mut out = Vec::new();
    let big = rows.iter().find(|r| r.n_atoms == 200).unwrap();
    out.push(CheckResult::new("product at N=200 vs sqrt(2)", (big.value - 2f64.sqrt()).abs(), 1e-2, R_FIG3));
    let small: Vec<_> = rows.iter().filter(|r| r.n_atoms <= 10).collect();
    let best = small.iter().min_by(|a, b| a.value.total_cmp(&b.value)).unwrap();
    out.push(CheckResult::new("|argmin N - 2| over N = 1..10", (best.n_atoms as f64 - 2.0).abs(), 0.0, R_FIG3));
    out.push(CheckResult::new("minimum vs sqrt(1.5)", (best.value - 1.5f64.sqrt()).abs(), 1e-3, R_FIG3));
    let oracle_vals: Vec<f64> = (1..=3)
        .map(|n| oracle_bec(ctx, n, 1.0).map(|o| o.post.uncertainty_product_scaled))
        .collect::<Result<_>>()?;
    out.push(CheckResult::new("oracle product at N=2 vs sqrt(1.5)", (oracle_vals[1] - 1.5f64.sqrt()).abs(), 1e-3, R_FIG3));
    out.push(CheckResult::new(
        "oracle: N=2 below N=1 and N=3 (margin)",
        oracle_vals[1] - oracle_vals[0].min(oracle_vals[2]),
        0.0,
        R_FIG3,
    ));
    Ok(out)
}

fn criterion_8(ctx: &Context) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let w = ctx.omega;
    let zs = random_z(6, 808);
    let periods = [("quarter", PI / (2.0 * w)), ("half", PI / w)];
    for (name, t) in periods {
        let v = freeprop::harmonic_vz(t, w, 2)?;
        let inv = freeprop::harmonic_vz(-t, w, 2)?;
        out.push(CheckResult::new(
            format!("V(-t) V(t) - 1, {name} period"),
            inv.compose(&v).max_abs_diff(&freeprop::PropagationMatrix::identity()),
            1e-12,
            R_FREE,
        ));
        let split = freeprop::harmonic_vz(0.3 * t, w, 2)?.compose(&freeprop::harmonic_vz(0.7 * t, w, 2)?);
        out.push(CheckResult::new(format!("V(t1) V(t2) - V(t1 + t2), {name} period"), split.max_abs_diff(&v), 1e-12, R_FREE));
    }

    // correlated two-atom state in six modes
    let system = Arc::new(ctx.system(2, 6)?);
    let state = ManyBodyState::random_mixture(&system.fock, 3, 4, 88);
    let field: Field = Arc::new(OracleField::new(system.clone(), state.clone(), 2)?);
    let t_h = PI / (4.0 * w);
    let heis = system.heisenberg(&system.p_total.matrix, t_h);
    let vh = freeprop::harmonic_vz(t_h, w, 2)?;
    let b = system.macro_b(2)?;
    let predicted = &linalg::scale(&system.p_total.matrix, num_complex::Complex64::new(vh.v[0][0], 0.0))
        + &linalg::scale(&b, num_complex::Complex64::new(vh.v[0][1], 0.0));
    out.push(CheckResult::new("Heisenberg A(t) vs V prediction, t = pi/(4 w)", linalg::max_abs_diff(&heis, &predicted), 1e-8, R_FREE));
    for (name, t) in periods {
        let v = freeprop::harmonic_vz(t, w, 2)?;
        let evolved = freeprop::evolve_correlation(field.clone(), t, &v)?;
        let truth = OracleField::new(system.clone(), system.free_evolve(&state, t), 2)?;
        let mut worst = 0.0f64;
        for &z in &zs {
            worst = worst.max(linalg::max_abs_diff(&evolved.matrix(z)?, &truth.matrix(z)?));
        }
        out.push(CheckResult::new(format!("evolved field vs oracle, correlated N=2, {name} period"), worst, 1e-6, R_FREE));
    }

    // analytic condensate field against the oracle condensate
    let n = 2;
    let big = Arc::new(ctx.system(n, 20)?);
    let bec = ManyBodyState::condensate(&big.fock);
    let basis = TrapBasis::new(20, w)?;
    let gauss: Field = Arc::new(corrdyn::bec_initial(n, &basis)?);
    for (name, t) in periods {
        let v = freeprop::harmonic_vz(t, w, n)?;
        let evolved = freeprop::evolve_correlation(gauss.clone(), t, &v)?;
        let truth_state = big.free_evolve(&bec, t);
        let mut worst = 0.0f64;
        for &z in &zs {
            let o = big.correlation_matrix(&truth_state, z, n)?;
            worst = worst.max(linalg::max_abs_diff(&evolved.matrix(z)?, &o));
        }
        out.push(CheckResult::new(format!("evolved condensate field vs oracle, {name} period"), worst, 1e-6, R_FREE));
    }
    Ok(out)
}

/// Distance between the loop acting on the correlated condensate field and
/// the same loop acting on independent atoms with the same single-atom
/// density matrix, for `n_atoms` atoms and each width.
pub fn decorrelation_statistic(ctx: &Context, n_atoms: usize, widths: &[f64]) -> Result<Vec<f64>> {
    let basis = ctx.basis()?;
    let pre = corrdyn::bec_initial(n_atoms, &basis)?;
    let rho = corrdyn::sadm(&pre)?;
    widths
        .iter()
        .map(|&s| {
            let fb = ctx.feedback(&basis, n_atoms, s);
            let full = corrdyn::feedback_reduced(&pre, &fb)?;
            let independent = corrdyn::single_atom_channel(&rho, &basis, &fb)?;
            Ok(linalg::frobenius(&(&full - &independent)))
        })
        .collect()
}

fn criterion_9(ctx: &Context) -> Result<Vec<CheckResult>> {
    let widths = [2.0, 5.0, 10.0, 20.0];
    let e = decorrelation_statistic(ctx, 10, &widths)?;
    let out: Vec<CheckResult> = e
        .windows(2)
        .zip(widths.windows(2))
        .map(|(pair, w)| CheckResult::new(format!("E({}) / E({}), N=10", w[1], w[0]), pair[1] / pair[0], 1.0 - f64::EPSILON, R_DECOR))
        .collect();
    Ok(out)
}

fn criterion_10(ctx: &Context) -> Result<Vec<CheckResult>> {
    let mut out = Vec::new();
    let mut trace_dev = 0.0f64;
    let mut min_eig = f64::INFINITY;
    for n in 1..=3usize {
        for s in [1.0, 1.5, 2.0] {
            let o = oracle_bec(ctx, n, s)?;
            trace_dev = trace_dev.max(o.trace_deviation);
            min_eig = min_eig.min(o.post_state.min_eigenvalue()?);
            let system = ctx.system(n, ctx.mixed_modes(n, s))?;
            let mixed = ManyBodyState::random_mixture(&system.fock, 2, 3, 7);
            let r = oracle_run(ctx, system, mixed, s)?;
            trace_dev = trace_dev.max(r.trace_deviation);
            min_eig = min_eig.min(r.post_state.min_eigenvalue()?);
        }
    }
    out.push(CheckResult::new("oracle trace deviation over grid", trace_dev, 1e-8, R_CHANNEL));
    out.push(CheckResult::new("oracle output minimum eigenvalue (negated)", -min_eig, 1e-8, R_CHANNEL));

    let mut kernel_dev = 0.0f64;
    let mut hermitian = 0.0f64;
    for n in [1usize, 2, 3, 4, 5, 10, 100] {
        for s in [1.0, 1.5, 2.0] {
            let (rho, m) = kernel_bec(ctx, n, s)?;
            kernel_dev = kernel_dev.max(rel(m.n_atoms_mean, n as f64));
            hermitian = hermitian.max(linalg::hermitian_deviation(&rho));
        }
    }
    out.push(CheckResult::new("kernel relative trace deviation over grid", kernel_dev, 1e-4, R_CHANNEL));
    out.push(CheckResult::new("kernel output Hermiticity over grid", hermitian, 1e-8, R_CHANNEL));

    let (n, s) = (3usize, 1.5);
    let (small, _) = kernel_bec(ctx, n, s)?;
    let doubled = Context { dim: 2 * ctx.dim, ..ctx.clone() };
    let (large, _) = kernel_bec(&doubled, n, s)?;
    out.push(CheckResult::new(
        format!("kernel truncation doubling d={} -> {}, leading 10x10, {}", ctx.dim, 2 * ctx.dim, tag(n, s)),
        linalg::max_abs_diff(&linalg::leading_block(&small, 10), &linalg::leading_block(&large, 10)),
        1e-8,
        R_CHANNEL,
    ));

    let (n, s) = (2usize, 1.0);
    let base = oracle_bec(ctx, n, s)?;
    let fine = Context { a_nodes: 2 * ctx.a_nodes, ..ctx.clone() };
    let fine_run = oracle_bec(&fine, n, s)?;
    out.push(CheckResult::new(
        format!("oracle node doubling {} -> {}, {}", ctx.a_nodes, 2 * ctx.a_nodes, tag(n, s)),
        linalg::max_abs_diff(&base.post_state.rho, &fine_run.post_state.rho),
        1e-8,
        R_CHANNEL,
    ));
    let m = base.system.n_modes();
    let wider = Context { oracle_modes: Some(m + 8), ..ctx.clone() };
    let wide_run = oracle_bec(&wider, n, s)?;
    out.push(CheckResult::new(
        format!("oracle mode increase M={} -> {}, single-atom matrix, {}", m, m + 8, tag(n, s)),
        linalg::max_abs_diff(
            &linalg::leading_block(&base.system.single_atom_dm(&base.post_state), 10),
            &linalg::leading_block(&wide_run.system.single_atom_dm(&wide_run.post_state), 10),
        ),
        1e-8,
        R_CHANNEL,
    ));
    Ok(out)
}

/// Flat report for the `validate` command.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ValidationReport {
    pub all_pass: bool,
    pub checks: Vec<CheckResult>,
}

pub fn report(criteria: &[CriterionReport]) -> ValidationReport {
    let checks: Vec<CheckResult> = criteria
        .iter()
        .flat_map(|c| {
            c.checks.iter().cloned().map(move |mut r| {
                r.check = format!("[{}] {}: {}", c.id, c.title, r.check);
                r
            })
        })
        .collect();
    ValidationReport { all_pass: checks.iter().all(CheckResult::passed), checks }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx() -> Context {
        Context::from_config(&RunConfig::default())
    }

    #[test]
    fn check_status_follows_tolerance() {
        assert!(CheckResult::new("a", 1e-9, 1e-8, "r").passed());
        assert!(CheckResult::new("a", 1e-8, 1e-8, "r").passed());
        assert!(!CheckResult::new("a", 2e-8, 1e-8, "r").passed());
        assert!(!CheckResult::new("a", f64::NAN, 1e-8, "r").passed());
        let empty = CriterionReport { id: 1, title: "t".into(), checks: vec![], seconds: 0.0 };
        assert!(!empty.passed());
    }

    #[test]
    fn report_serializes_expected_fields() {
        let c = CriterionReport { id: 2, title: title(2).into(), checks: vec![CheckResult::new("x", 0.5, 1.0, "r")], seconds: 0.0 };
        let r = report(&[c]);
        assert!(r.all_pass);
        let v = serde_json::to_value(&r.checks[0]).unwrap();
        for key in ["check", "status", "observed", "tolerance", "paper_ref"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["status"], "pass");
    }

    #[test]
    fn kick_law_holds_with_contract_sign_only() {
        let mut c = ctx();
        assert!(kick_law_check(&c).unwrap().passed());
        c.kick_sign = KickSign::Flipped;
        let flipped = kick_law_check(&c).unwrap();
        assert!(!flipped.passed());
        // the shift reverses, so the deviation is twice the kick
        assert!((flipped.observed - 1.0).abs() < 1e-8);
    }

    #[test]
    fn random_z_is_reproducible() {
        assert_eq!(random_z(5, 7), random_z(5, 7));
        assert_ne!(random_z(5, 7), random_z(5, 8));
    }

    #[test]
    fn every_criterion_has_a_title() {
        for id in 1..=CRITERIA {
            assert!(!title(id).is_empty());
        }
        assert!(run_criterion(CRITERIA + 1, &ctx()).is_err());
    }
}
