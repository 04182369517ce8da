//! Trains the convolutional regressor on a noisy nonlinear toy problem
//! with early stopping and the bottleneck L1 penalty.
//!
//! cargo run --release --example train_network

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use densecast::nn::{bottleneck_sparsity, train, Architecture, Dataset, Network, Tensor, TrainConfig};

/// Sequences of 6 steps x 4 features; only feature 0 drives the target.
pub fn toy(n: usize, rng: &mut impl Rng) -> Dataset {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for _ in 0..n {
        let x: Vec<f64> = (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let signal: f64 = (0..6).map(|t| x[t * 4]).sum::<f64>() / 6.0;
        ys.push((2.0 * signal).sin() + 0.05 * rng.gen_range(-1.0..1.0));
        xs.push(Tensor::new(vec![6, 4], x).unwrap());
    }
    Dataset::new(xs, ys).unwrap()
}

fn main() -> densecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (train_set, val_set) = (toy(400, &mut rng), toy(100, &mut rng));
    let arch = Architecture {
        dropout: 0.0,
        l1_lambda: 5e-3,
        ..Architecture::default()
    };
    let mut net = Network::new(arch.layers(6, 4)?, vec![6, 4], &mut rng)?;
    let cfg = TrainConfig {
        learning_rate: 0.01,
        max_epochs: 300,
        ..TrainConfig::default()
    };
    let before = net.mse(&val_set)?;
    let hist = train(&mut net, &train_set, &val_set, &cfg)?;
    println!(
        "{} epochs, best at {}: validation MSE {before:.4} -> {:.4}",
        hist.epochs_run(),
        hist.best_epoch,
        hist.best_val_loss()
    );
    println!("bottleneck sparsity {:.2}", bottleneck_sparsity(&net)?);
    Ok(())
}
