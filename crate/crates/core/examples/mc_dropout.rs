//! Monte Carlo dropout: repeated stochastic passes through a trained
//! network form an empirical predictive density.
//!
//! cargo run --release --example mc_dropout

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use densecast::mc_dropout::predict_mcdropout;
use densecast::nn::{train, Activation, Dataset, LayerSpec, Network, Tensor, TrainConfig};
use densecast::stats::describe;

fn data(n: usize, rng: &mut impl Rng) -> Dataset {
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let ys = xs.iter().map(|x| (3.0 * x).sin() + 0.1 * rng.gen_range(-1.0..1.0)).collect();
    Dataset::new(xs.into_iter().map(|x| Tensor::vector(vec![x])).collect(), ys).unwrap()
}

fn main() -> densecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (tr, val) = (data(400, &mut rng), data(80, &mut rng));
    let specs = vec![
        LayerSpec::Dense { inputs: 1, outputs: 32 },
        LayerSpec::Activation { act: Activation::Relu },
        LayerSpec::Dropout { p: 0.2 },
        LayerSpec::Dense { inputs: 32, outputs: 1 },
    ];
    let mut net = Network::new(specs, vec![1], &mut rng)?;
    let cfg = TrainConfig {
        learning_rate: 0.02,
        max_epochs: 300,
        rng_seed: 4,
        ..TrainConfig::default()
    };
    train(&mut net, &tr, &val, &cfg)?;
    for x in [-0.5, 0.0, 0.5, 2.0] {
        let d = predict_mcdropout(&net, &Tensor::vector(vec![x]), 1000, 8)?;
        let s = describe(d.samples())?;
        println!("x = {x:+.1}: mean {:+.3}, std {:.3}, skew {:+.2}{}", s.mean, s.std, s.skew, s.skew_stars);
    }
    Ok(())
}
