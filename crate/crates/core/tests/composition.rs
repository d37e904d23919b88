//! Feedback sequences through the correlation-field kernel against the same
//! sequences in the Fock-space simulator.

use std::f64::consts::PI;
use std::sync::Arc;

use bosefeed::corrdyn::{self, bec_initial, FeedbackConfig, Field, Instrumented, QuadSettings};
use bosefeed::freeprop::{evolve_correlation, harmonic_vz};
use bosefeed::hilbert::TrapBasis;
use bosefeed::linalg::{self, CMat};
use bosefeed::oracle::{suggested_modes, ManyBodyState, ManyBodySystem, OracleSettings};

const N: usize = 2;
const S: f64 = 1.0;

fn leading_block_diff(a: &CMat, b: &CMat, k: usize) -> f64 {
    let mut m = 0.0f64;
    for i in 0..k {
        for j in 0..k {
            m = m.max((a[(i, j)] - b[(i, j)]).norm());
        }
    }
    m
}

struct Setup {
    system: ManyBodySystem,
    basis: TrapBasis,
    cfg: FeedbackConfig,
}

fn setup() -> Setup {
    let omega = 1.0;
    let m = suggested_modes(N, S);
    let system = ManyBodySystem::new(&TrapBasis::new(m, omega).unwrap(), N, m).unwrap();
    let basis = TrapBasis::new(m, omega).unwrap();
    let cfg = FeedbackConfig { quad: QuadSettings { n_a: 48, n_a_prime: 48, n_a_double_prime: 32, n_k: 32, n_alpha: 48, range_mult: 6.0 }, ..FeedbackConfig::new(S * basis.dp0, N) };
    Setup { system, basis, cfg }
}

fn oracle_step(s: &Setup, state: &ManyBodyState) -> ManyBodyState {
    let settings = OracleSettings { leakage_tol: None, ..OracleSettings::default() };
    s.system.exact_feedback(state, &s.cfg, &settings).unwrap().state
}

#[test]
fn two_loops_match_the_oracle() {
    let s = setup();
    let pre: Field = Arc::new(bec_initial(N, &s.basis).unwrap());
    let once = corrdyn::apply_feedback(pre, &s.cfg).unwrap();
    let twice = corrdyn::feedback_reduced(once.as_ref(), &s.cfg).unwrap();

    let state = ManyBodyState::condensate(&s.system.fock);
    let exact = s.system.single_atom_dm(&oracle_step(&s, &oracle_step(&s, &state)));

    let diff = leading_block_diff(&twice, &exact, 10);
    println!("two loops: leading-block difference {diff:e}");
    assert!(diff < 1e-4, "{diff:e}");
    assert!((linalg::trace(&twice).re - N as f64).abs() < 1e-6);
}

#[test]
fn loop_then_evolution_then_loop_matches_the_oracle() {
    let s = setup();
    let t = PI / 4.0;
    let pre: Field = Arc::new(bec_initial(N, &s.basis).unwrap());
    let probe = Instrumented::new(corrdyn::apply_feedback(pre, &s.cfg).unwrap());
    let log = probe.log.clone();
    let evolved = evolve_correlation(Arc::new(probe), t, &harmonic_vz(t, 1.0, N).unwrap()).unwrap();
    let after = corrdyn::feedback_reduced(evolved.as_ref(), &s.cfg).unwrap();
    // rotation in the (A, B) plane mixes the position argument into the
    // momentum argument, so the composed field is probed away from beta = 0
    assert!(log.beta_nonzero() > 0);

    let state = ManyBodyState::condensate(&s.system.fock);
    let mid = s.system.free_evolve(&oracle_step(&s, &state), t);
    let exact = s.system.single_atom_dm(&oracle_step(&s, &mid));

    let diff = leading_block_diff(&after, &exact, 10);
    println!("loop, quarter period, loop: leading-block difference {diff:e}");
    assert!(diff < 1e-4, "{diff:e}");
    assert!(linalg::hermitian_deviation(&after) < 1e-8);
}
