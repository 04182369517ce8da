//! Summary statistics, normality test and kernel density of a skewed sample.
//!
//! cargo run --example density_stats

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal};

use densecast::stats::{describe, kde, silverman_bandwidth, Bandwidth};

fn main() -> densecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let dist = LogNormal::new(0.0, 0.5).unwrap();
    let xs: Vec<f64> = (0..500).map(|_| dist.sample(&mut rng)).collect();

    let s = describe(&xs)?;
    println!("{}", serde_json::to_string_pretty(&s)?);

    let h = silverman_bandwidth(&xs).unwrap_or(f64::NAN);
    let grid: Vec<f64> = (0..=12).map(|i| 0.25 * i as f64).collect();
    let dens = kde(&xs, &grid, Bandwidth::Auto)?;
    println!("Silverman bandwidth {h:.4}");
    for (x, d) in grid.iter().zip(dens) {
        println!("{x:>5.2} {d:.4} {}", "#".repeat((d * 60.0) as usize));
    }
    Ok(())
}
