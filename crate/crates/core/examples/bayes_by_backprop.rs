//! Variational posterior over the weights of a small network, started from
//! a deterministic pilot fit, and its predictive density.
//!
//! cargo run --release --example bayes_by_backprop

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use densecast::bbb::{pilot_obs_sigma, predict_bbb, train_bbb, BbbConfig, VariationalNetwork};
use densecast::nn::{train, Activation, Dataset, LayerSpec, Network, Tensor, TrainConfig};

fn data(n: usize, rng: &mut impl Rng) -> Dataset {
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
    let ys = xs.iter().map(|x| x * x / 2.0 + 0.2 * rng.gen_range(-1.0..1.0)).collect();
    Dataset::new(xs.into_iter().map(|x| Tensor::vector(vec![x])).collect(), ys).unwrap()
}

fn main() -> densecast::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (tr, val) = (data(300, &mut rng), data(60, &mut rng));
    let specs = vec![
        LayerSpec::Dense { inputs: 1, outputs: 16 },
        LayerSpec::Activation { act: Activation::Tanh },
        LayerSpec::Dense { inputs: 16, outputs: 1 },
    ];
    let mut pilot = Network::new(specs, vec![1], &mut rng)?;
    let tc = TrainConfig {
        learning_rate: 0.02,
        max_epochs: 200,
        ..TrainConfig::default()
    };
    train(&mut pilot, &tr, &val, &tc)?;
    let sigma = pilot_obs_sigma(&pilot, &val)?;

    // the likelihood gradient scales with 1 / sigma^2, so the step shrinks
    let cfg = BbbConfig {
        train: TrainConfig {
            learning_rate: 0.002,
            max_epochs: 400,
            rng_seed: 5,
            ..tc
        },
        ..BbbConfig::default()
    };
    let mut vnet = VariationalNetwork::from_network(pilot, cfg.rho_init, cfg.prior_sigma, sigma)?;
    let state = train_bbb(&mut vnet, &tr, &val, &cfg)?;
    println!("observation sigma {sigma:.3}; best epoch {}; KL {:.1}", state.best_epoch, vnet.kl());
    for x in [-1.5, 0.0, 1.0, 3.0] {
        let d = predict_bbb(&vnet, &Tensor::vector(vec![x]), 500, 1)?;
        println!("x = {x:+.1}: mean {:+.3}, std {:.3} (truth {:.3})", d.mean(), d.std(), x * x / 2.0);
    }
    Ok(())
}
