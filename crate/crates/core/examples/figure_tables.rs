//! Momentum variance and uncertainty product after one loop, as the CSV
//! tables written by `bosefeed fig2` and `bosefeed fig3`.
//!
//! Usage: cargo run --release --example figure_tables

use bosefeed::experiments::{self, RunConfig};

fn main() -> bosefeed::Result<()> {
    let cfg = RunConfig { n_atoms: vec![1, 2, 3, 5, 10, 100], sigma_over_dp0: vec![1.0, 2.0], ..RunConfig::default() };
    print!("{}", experiments::run_fig2(&cfg)?);
    println!();
    print!("{}", experiments::run_fig3(&cfg)?);
    Ok(())
}
