//! Two feedback loops separated by a quarter trap period, compared with the
//! same sequence in the Fock-space simulator.
//!
//! Usage: cargo run --release --example feedback_sequence

use std::f64::consts::PI;
use std::sync::Arc;

use bosefeed::corrdyn::{self, FeedbackConfig, Field, QuadSettings};
use bosefeed::freeprop::{evolve_correlation, harmonic_vz};
use bosefeed::hilbert::TrapBasis;
use bosefeed::oracle::{suggested_modes, ManyBodyState, ManyBodySystem, OracleSettings};
use bosefeed::{linalg, observables};

fn main() -> bosefeed::Result<()> {
    let (n, s, t) = (2, 1.0, PI / 4.0);
    let modes = suggested_modes(n, s);
    let basis = TrapBasis::new(modes, 1.0)?;
    // lighter grids than the defaults; the comparison stays far below 1e-6
    let quad = QuadSettings { n_a: 48, n_a_prime: 48, n_a_double_prime: 32, n_k: 32, n_alpha: 48, range_mult: 6.0 };
    let cfg = FeedbackConfig { quad, ..FeedbackConfig::new(s * basis.dp0, n) };

    let start: Field = Arc::new(corrdyn::bec_initial(n, &basis)?);
    let once = corrdyn::apply_feedback(start, &cfg)?;
    let evolved = evolve_correlation(once, t, &harmonic_vz(t, 1.0, n)?)?;
    let kernel = corrdyn::feedback_reduced(evolved.as_ref(), &cfg)?;

    let system = ManyBodySystem::new(&basis, n, modes)?;
    let settings = OracleSettings { leakage_tol: None, ..OracleSettings::default() };
    let state = ManyBodyState::condensate(&system.fock);
    let mid = system.free_evolve(&system.exact_feedback(&state, &cfg, &settings)?.state, t);
    let exact = system.single_atom_dm(&system.exact_feedback(&mid, &cfg, &settings)?.state);

    let k = observables::moments(&kernel, &basis)?;
    let e = observables::moments(&exact, &basis)?;
    println!("var_p / dp0^2: kernel {:.10}, oracle {:.10}", k.var_p_scaled, e.var_p_scaled);
    println!("var_q / dq0^2: kernel {:.10}, oracle {:.10}", k.var_q_scaled, e.var_q_scaled);
    let block = linalg::max_abs_diff(&linalg::leading_block(&kernel, 10), &linalg::leading_block(&exact, 10));
    println!("leading 10x10 block difference: {block:e}");
    Ok(())
}
