//! Rolling evaluation of every engine on the bundled synthetic fixture.
//!
//! cargo run --release --example rolling_fixture

use std::time::Instant;

use densecast::eval::{compute_metrics, rolling_run, RunConfig};
use densecast::fixture::SyntheticFixture;

fn main() -> densecast::Result<()> {
    let cfg = RunConfig::fixture_default("results/fixture");
    let fixture = SyntheticFixture::generate(cfg.data.fixture_seed);
    let start = Instant::now();
    let records = rolling_run(&fixture, &cfg)?;
    println!("{} records in {:.1?}", records.len(), start.elapsed());
    let failed = records.iter().filter(|r| !r.is_ok()).count();
    if failed > 0 {
        println!("{failed} flagged records");
        for r in records.iter().filter(|r| !r.is_ok()).take(5) {
            println!("  {} {} {}: {}", r.engine, r.info_set, r.quarter, r.error.as_deref().unwrap_or(""));
        }
    }
    let metrics = compute_metrics(&records)?;
    println!("{:<10} {:>4} {:>4} {:>8} {:>8} {:>10} {:>10}", "engine", "set", "n", "rmse", "mae", "rel_naive", "p_dm");
    for r in &metrics.rows {
        println!(
            "{:<10} {:>4} {:>4} {:>8.4} {:>8.4} {:>10} {:>10}",
            r.engine.to_string(),
            r.info_set.to_string(),
            r.n,
            r.rmse,
            r.mae,
            r.rel_rmse_naive.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
            r.dm_p_naive_sq.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into()),
        );
    }
    Ok(())
}
