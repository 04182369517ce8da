//! Point accuracy and the Diebold-Mariano test for two forecast series.
//!
//! cargo run --example compare_forecasts

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use densecast::eval::{diebold_mariano, dm_stars, rmse_mae};

fn main() -> densecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let sharp = Normal::new(0.0, 0.8).unwrap();
    let blunt = Normal::new(0.2, 1.2).unwrap();
    let ea: Vec<f64> = (0..44).map(|_| sharp.sample(&mut rng)).collect();
    let eb: Vec<f64> = (0..44).map(|_| blunt.sample(&mut rng)).collect();

    let (ra, ma) = rmse_mae(&ea)?;
    let (rb, mb) = rmse_mae(&eb)?;
    println!("A: RMSE {ra:.3} MAE {ma:.3}");
    println!("B: RMSE {rb:.3} MAE {mb:.3}  (relative RMSE {:.3})", ra / rb);

    let sq = |e: &[f64]| e.iter().map(|v| v * v).collect::<Vec<_>>();
    let ab = |e: &[f64]| e.iter().map(|v| v.abs()).collect::<Vec<_>>();
    let (s, p) = diebold_mariano(&sq(&ea), &sq(&eb))?;
    println!("DM squared loss:  stat {s:+.3}, p {p:.4} {}", dm_stars(p));
    let (s, p) = diebold_mariano(&ab(&ea), &ab(&eb))?;
    println!("DM absolute loss: stat {s:+.3}, p {p:.4} {}", dm_stars(p));
    Ok(())
}
