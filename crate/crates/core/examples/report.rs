//! Runs the naive benchmark over the fixture and renders the fan chart,
//! histogram grid and metrics page.
//!
//! cargo run --example report -- [out_dir]

use std::path::PathBuf;

use densecast::app::cmd_run;
use densecast::eval::{Engine, RunConfig};
use densecast::fredmd::InfoSetKind;
use densecast::report::{write_report, ReportConfig};

fn main() -> densecast::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| "results/naive".into());
    let mut cfg = RunConfig::fixture_default(&out);
    cfg.engines.list = vec![Engine::Naive];
    cfg.engines.info_sets = vec![InfoSetKind::M3];
    let outcome = cmd_run(&cfg, None)?;
    let files = write_report(&outcome.records, &out.join("report"), &ReportConfig::default())?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
