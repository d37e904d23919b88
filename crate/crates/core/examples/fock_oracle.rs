//! Exact feedback on a three-atom condensate in a truncated Fock space.
//!
//! Usage: cargo run --release --example fock_oracle

use bosefeed::corrdyn::FeedbackConfig;
use bosefeed::hilbert::TrapBasis;
use bosefeed::observables;
use bosefeed::oracle::{suggested_modes, ManyBodyState, ManyBodySystem, OracleSettings};

fn main() -> bosefeed::Result<()> {
    let (n, s) = (3, 1.5);
    let modes = suggested_modes(n, s);
    let system = ManyBodySystem::new(&TrapBasis::new(modes, 1.0)?, n, modes)?;
    println!("N = {n}, M = {modes}, Fock dimension {}", system.fock.dim());

    let state = ManyBodyState::condensate(&system.fock);
    let cfg = FeedbackConfig::new(s * system.trap.dp0, n);
    let out = system.exact_feedback(&state, &cfg, &OracleSettings::default())?;
    println!("trace deviation {:e}, top-mode weight {:e}", out.trace_deviation, out.top_mode_weight);

    let m = observables::moments(&system.single_atom_dm(&out.state), &system.trap)?;
    println!("var_p / dp0^2 after feedback: {:.12}", m.var_p_scaled);
    println!("closed form:                  {:.12}", observables::bec_var_p_scaled(n, s));
    Ok(())
}
