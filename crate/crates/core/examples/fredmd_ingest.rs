//! Parses a FRED-MD style CSV, applies transform codes and fills the
//! ragged edge with AR(1) extrapolation.
//!
//! cargo run --example fredmd_ingest

use densecast::calendar::YearMonth;
use densecast::fredmd::{extrapolate_ragged_edge, parse_vintage, RaggedPanel};

const CSV: &str = "\
sasdate,INDPRO,UNRATE,CPIAUCSL
Transform:,5,2,6
1/1/2019,102.1,4.0,252.6
2/1/2019,101.6,3.8,253.3
3/1/2019,101.4,3.8,254.2
4/1/2019,100.8,3.7,255.5
5/1/2019,101.1,3.6,256.1
6/1/2019,101.3,3.6,256.1
7/1/2019,101.0,3.7,256.6
8/1/2019,101.6,3.6,256.8
9/1/2019,101.2,3.5,257.3
10/1/2019,100.4,3.6,257.8
11/1/2019,101.3,3.6,258.3
12/1/2019,,3.6,258.8
";

fn main() -> densecast::Result<()> {
    let vintage = parse_vintage(CSV.as_bytes())?;
    println!("release {} with {} series x {} months", vintage.release_tag, vintage.n_series(), vintage.n_months());
    for (m, t) in vintage.mnemonics.iter().zip(&vintage.tcodes) {
        println!("  {m:<9} tcode {}", t.code());
    }

    // second differences of log CPI need two lags
    let first = YearMonth::new(2019, 3)?;
    let cutoff = YearMonth::new(2019, 12)?;
    let ragged = RaggedPanel::from_vintage(&vintage, first, cutoff)?;
    println!("INDPRO growth at {cutoff}: {:?}", ragged.values.last().unwrap()[0]);

    let panel = extrapolate_ragged_edge(&ragged, cutoff)?;
    println!("after extrapolation: {:.5}", panel.values.last().unwrap()[0]);
    Ok(())
}
