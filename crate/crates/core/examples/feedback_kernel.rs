//! One feedback loop on a condensate through the correlation-field kernel,
//! for a range of atom numbers.
//!
//! Usage: cargo run --release --example feedback_kernel

use bosefeed::corrdyn::{self, FeedbackConfig, ZVector};
use bosefeed::hilbert::TrapBasis;
use bosefeed::{linalg, observables};

fn main() -> bosefeed::Result<()> {
    let basis = TrapBasis::new(40, 1.0)?;
    let s = 1.5;
    println!("{:>4} {:>16} {:>16}", "N", "var_p/dp0^2", "closed form");
    for n in [1, 2, 5, 10, 50] {
        let field = corrdyn::bec_initial(n, &basis)?;
        let cfg = FeedbackConfig::new(s * basis.dp0, n);
        let rho = corrdyn::feedback_reduced(&field, &cfg)?;
        let m = observables::moments(&rho, &basis)?;
        println!("{n:>4} {:>16.12} {:>16.12}", m.var_p_scaled, observables::bec_var_p_scaled(n, s));
    }

    // the full kernel at z = 0 reproduces the reduced map
    let field = corrdyn::bec_initial(3, &basis)?;
    let cfg = FeedbackConfig::new(s * basis.dp0, 3);
    let full = corrdyn::feedback_full(&field, &cfg, ZVector::ZERO)?;
    let reduced = corrdyn::feedback_reduced(&field, &cfg)?;
    println!("full kernel at z = 0 vs reduced map: {:e}", linalg::max_abs_diff(&full, &reduced));
    Ok(())
}
