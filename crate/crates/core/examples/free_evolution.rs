//! Free evolution of a correlation field between feedback loops.
//!
//! Usage: cargo run --example free_evolution

use std::f64::consts::PI;
use std::sync::Arc;

use bosefeed::corrdyn::{self, Field, ZVector};
use bosefeed::freeprop::{evolve_correlation, free_particle_vz, harmonic_vz};
use bosefeed::hilbert::TrapBasis;
use bosefeed::linalg;

fn main() -> bosefeed::Result<()> {
    let (omega, n) = (1.0, 3);
    let basis = TrapBasis::new(10, omega)?;
    let field: Field = Arc::new(corrdyn::bec_initial(n, &basis)?);

    let quarter = harmonic_vz(PI / (2.0 * omega), omega, n)?;
    println!("quarter-period V(z):");
    for row in quarter.v {
        println!("  [{:+.4} {:+.4} {:+.4}]", row[0], row[1], row[2]);
    }
    let shear = free_particle_vz(0.5, n)?;
    println!("free flight, t = 0.5: B(t) = B + {} A", shear.v[1][0]);

    // the condensate is stationary: after a full period the field is unchanged
    let period = 2.0 * PI / omega;
    let evolved = evolve_correlation(field.clone(), period, &harmonic_vz(period, omega, n)?)?;
    let z = ZVector::new(0.4, -0.2, 0.1);
    let diff = linalg::max_abs_diff(&evolved.matrix(z)?, &field.matrix(z)?);
    println!("one trap period later: |D(t) - D(0)| = {diff:e}");
    Ok(())
}
