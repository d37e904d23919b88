//! Run selected acceptance criteria and print their checks as JSON.
//!
//! Usage: cargo run --release --example validation_report -- 1 8

use bosefeed::experiments::RunConfig;
use bosefeed::validation::{report, run_criterion, Context};

fn main() -> bosefeed::Result<()> {
    let ids: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids = if ids.is_empty() { vec![1, 8] } else { ids };
    let ctx = Context::from_config(&RunConfig::default());
    let criteria = ids.iter().map(|&id| run_criterion(id, &ctx)).collect::<bosefeed::Result<Vec<_>>>()?;
    for c in &criteria {
        eprintln!("criterion {} ({}): {}", c.id, c.title, if c.passed() { "PASS" } else { "FAIL" });
    }
    println!("{}", serde_json::to_string_pretty(&report(&criteria))?);
    Ok(())
}
