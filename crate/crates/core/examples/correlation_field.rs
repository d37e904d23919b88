//! The condensate correlation field D(z) and its single-atom density matrix.
//!
//! Usage: cargo run --example correlation_field

use bosefeed::corrdyn::{self, CorrelationField, ZVector};
use bosefeed::hilbert::TrapBasis;

fn main() -> bosefeed::Result<()> {
    let basis = TrapBasis::new(8, 1.0)?;
    let field = corrdyn::bec_initial(4, &basis)?;
    let rho = corrdyn::sadm(&field)?;
    println!("D(0) = rho: rho_00 = {}, trace = {}", rho[(0, 0)], bosefeed::linalg::trace(&rho));

    for alpha in [0.0, 0.5, 1.0, 2.0] {
        let z = ZVector::new(alpha / basis.dp0, 0.0, 0.0);
        println!("alpha * dp0 = {alpha}: D_00 = {:.6e}", field.evaluate(0, 0, z)?.re);
    }

    // alpha Fourier transform: distribution of the other atoms' total momentum
    let quad = corrdyn::QuadSettings::default();
    for x in [-2.0, 0.0, 2.0] {
        let closed = corrdyn::alpha_fourier(&field, 0, 0, 0.0, 0.0, x, &quad)?;
        let numeric = corrdyn::alpha_fourier_numeric(&field, 0, 0, 0.0, 0.0, x, &quad)?;
        println!("x = {x:+}: closed {:.10e}, quadrature {:.10e}", closed.re, numeric.re);
    }
    Ok(())
}
