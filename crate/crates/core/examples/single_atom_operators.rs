//! Ladder-operator matrices in a truncated trap basis: the canonical
//! commutator, a resolution amplitude and a feedback kick.
//!
//! Usage: cargo run --example single_atom_operators

use bosefeed::hilbert::{self, LinearResponse, TrapBasis};
use bosefeed::linalg;

fn main() -> bosefeed::Result<()> {
    let basis = TrapBasis::new(20, 1.0)?;
    let q = hilbert::position_op(&basis);
    let p = hilbert::momentum_op(&basis);
    println!("dq0 = {}, dp0 = {}, dq0 * dp0 = {}", basis.dq0, basis.dp0, basis.dq0 * basis.dp0);

    // [q, p] = i away from the truncation edge
    let c = linalg::commutator(&q.matrix, &p.matrix);
    println!("[q, p] on the lowest level: {}", c[(0, 0)]);
    println!("[q, p] on the top level:    {}  (truncation)", c[(19, 19)]);

    let sigma = basis.dp0;
    let m = hilbert::resolution_amplitude(0.3, sigma, &p)?;
    println!("M(0.3 - p) is Hermitian: {:e}", linalg::hermitian_deviation(&m.matrix));

    let u = hilbert::kick_unitary(0.3, LinearResponse::new(-1.0, 0.0), 4, &q)?;
    let unitarity = linalg::max_abs_diff(&(u.matrix.adjoint() * &u.matrix), &linalg::identity(basis.dim));
    println!("kick for A = 0.3, N_e = 4: |U^dagger U - 1| = {unitarity:e}");
    Ok(())
}
