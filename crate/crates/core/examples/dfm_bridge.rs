//! Single-factor model on the fixture panel, bridged to quarterly growth,
//! with its Gaussian density nowcast.
//!
//! cargo run --release --example dfm_bridge

use densecast::calendar::Quarter;
use densecast::dfm::{density_nowcast_dfm, fit_bridge, fit_dfm, DfmConfig};
use densecast::eval::{DfmSettings, VintageSource};
use densecast::fixture::SyntheticFixture;
use densecast::fredmd::{dfm_feature_subset, InfoSetKind};

fn main() -> densecast::Result<()> {
    let fixture = SyntheticFixture::generate(7);
    let q = Quarter::new(2015, 2)?;
    let vintage = fixture.vintage(InfoSetKind::M3.cutoff(q))?;
    let target = fixture.target()?;

    let panel = dfm_feature_subset(&vintage)?;
    let spec = fit_dfm(&panel, &DfmConfig::default(), None)?;
    println!("factor AR {:.3?}, loglik {:.1}, {} EM sweeps", spec.factor_ar, spec.loglik, spec.em_iterations);
    for (m, l) in spec.mnemonics.iter().zip(&spec.loadings) {
        println!("  {m:<10} loading {l:+.3}");
    }

    let history = target.range(q.add(-200), q);
    let bridge = fit_bridge(&spec.factor_scores, &history, &DfmSettings::default().bridge_config())?;
    let d = density_nowcast_dfm(&bridge, &spec, &spec.factor_scores, q)?;
    let (lo, hi) = d.interval(1.96);
    println!("{q}: nowcast {:.3} (95% {lo:.3}..{hi:.3}), actual {:.3}", d.mean, target.get(q).unwrap_or(f64::NAN));
    Ok(())
}
