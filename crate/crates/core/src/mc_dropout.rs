//! Monte Carlo dropout: predictive densities from repeated forward passes
//! with freshly sampled Bernoulli dropout masks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{DropoutMode, LayerSpec, Network, Tensor};
use crate::stats::EmpiricalDensity;

/// Keep-indicators for every maskable neuron, one vector per dropout layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DropoutMask {
    pub z: Vec<Vec<bool>>,
}

impl DropoutMask {
    /// iid Bernoulli(1 - p) keep-indicators with each layer's own `p`.
    pub fn sample(net: &Network, rng: &mut impl Rng) -> Self {
        let z = net
            .maskable_sizes()
            .into_iter()
            .zip(net.dropout_rates())
            .map(|(m, p)| (0..m).map(|_| rng.gen::<f64>() >= p).collect())
            .collect();
        Self { z }
    }

    pub fn ones(net: &Network) -> Self {
        Self {
            z: net.maskable_sizes().into_iter().map(|m| vec![true; m]).collect(),
        }
    }

    /// Total number of maskable neurons `M`.
    pub fn len(&self) -> usize {
        self.z.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One ensemble member: the shared network seen through a mask.
#[derive(Debug, Clone, Copy)]
pub struct MaskedMember<'a> {
    net: &'a Network,
    mask: &'a DropoutMask,
}

/// Views `net` through `mask`; no weights are copied.
pub fn apply_mask<'a>(net: &'a Network, mask: &'a DropoutMask) -> Result<MaskedMember<'a>> {
    let sizes = net.maskable_sizes();
    let lens: Vec<usize> = mask.z.iter().map(Vec::len).collect();
    if sizes != lens {
        return Err(Error::Contract(format!(
            "mask layer sizes {lens:?} do not match the network's maskable neurons {sizes:?}"
        )));
    }
    Ok(MaskedMember { net, mask })
}

impl MaskedMember<'_> {
    /// Member output with inverted dropout scaling on kept neurons.
    pub fn predict(&self, x: &Tensor) -> Result<f64> {
        Ok(self.net.forward(x, DropoutMode::Fixed(&self.mask.z))?.output)
    }

    /// `w ⊙ gamma(z)`: the network's parameters with the outgoing weights of
    /// every dropped neuron set to zero and nothing else changed.
    pub fn masked_weights(&self) -> Vec<Vec<f64>> {
        let mut params = self.net.params().to_vec();
        let specs = self.net.specs();
        let mut d = 0;
        for (i, s) in specs.iter().enumerate() {
            if !matches!(s, LayerSpec::Dropout { .. }) {
                continue;
            }
            let keep = &self.mask.z[d];
            d += 1;
            let Some((j, LayerSpec::Dense { inputs, outputs })) =
                specs.iter().enumerate().skip(i + 1).find(|(_, s)| s.weight_len() > 0)
            else {
                continue;
            };
            for (n, _) in keep.iter().enumerate().filter(|(_, k)| !**k) {
                for o in 0..*outputs {
                    params[j][o * inputs + n] = 0.0;
                }
            }
        }
        params
    }
}

/// `n` training-mode forward passes of `net` at `x`. Pass `i` draws its
/// masks from stream `i` of a ChaCha8 generator seeded with `seed`.
pub fn predict_mcdropout(net: &Network, x: &Tensor, n: usize, seed: u64) -> Result<EmpiricalDensity> {
    if n < 2 {
        return Err(Error::Contract(format!("predictive density needs at least 2 draws, got {n}")));
    }
    if net.dropout_rates().iter().all(|&p| p == 0.0) {
        log::warn!("network has no active dropout; the Monte Carlo density is degenerate");
    }
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            Ok(net.forward(x, DropoutMode::Sample(&mut rng))?.output)
        })
        .collect::<Result<Vec<_>>>()?;
    EmpiricalDensity::new(samples)
}
