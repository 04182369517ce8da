use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, RngCore};

use crate::error::{Error, Result};
use crate::fredmd::SequenceSet;

use super::layers::{conv_backward, conv_forward, dense_backward, dense_forward, LayerSpec};
use super::tensor::Tensor;

static NEXT_TAG: AtomicU64 = AtomicU64::new(1);

/// Fresh identifier for a parameter state; caches remember the tag they
/// were computed under.
pub fn fresh_tag() -> u64 {
    NEXT_TAG.fetch_add(1, Ordering::Relaxed)
}

/// Inputs with scalar targets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub xs: Vec<Tensor>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn new(xs: Vec<Tensor>, ys: Vec<f64>) -> Result<Self> {
        if xs.len() != ys.len() {
            return Err(Error::Shape(format!("{} inputs for {} targets", xs.len(), ys.len())));
        }
        Ok(Self { xs, ys })
    }

    pub fn from_sequences(set: &SequenceSet) -> Result<Self> {
        let xs = set
            .sequences
            .iter()
            .map(|s| Tensor::from_rows(&s.x))
            .collect::<Result<Vec<_>>>()?;
        Self::new(xs, set.targets())
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn map_targets(&self, f: impl Fn(f64) -> f64) -> Dataset {
        Dataset {
            xs: self.xs.clone(),
            ys: self.ys.iter().map(|&y| f(y)).collect(),
        }
    }
}

/// How dropout layers behave in a forward pass.
pub enum DropoutMode<'a> {
    /// No masking.
    Off,
    /// Fresh Bernoulli(1 - p) masks from the generator.
    Sample(&'a mut dyn RngCore),
    /// Given keep-vectors, one per dropout layer in order.
    Fixed(&'a [Vec<bool>]),
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct Cache {
    tag: u64,
    inputs: Vec<Tensor>,
    /// Per-layer dropout multipliers (0 or 1/(1-p)); empty for other layers.
    scales: Vec<Vec<f64>>,
    pub output: f64,
}

/// Sequential network mapping a `(seq_len, features)` input to a scalar.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    specs: Vec<LayerSpec>,
    input_shape: Vec<usize>,
    params: Vec<Vec<f64>>,
    tag: u64,
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(specs: Vec<LayerSpec>, input_shape: Vec<usize>, rng: &mut impl Rng) -> Result<Self> {
        let params = specs
            .iter()
            .map(|s| {
                let (fi, fo) = s.fans();
                let limit = if fi + fo > 0 { (6.0 / (fi + fo) as f64).sqrt() } else { 0.0 };
                let mut p: Vec<f64> = (0..s.weight_len()).map(|_| rng.gen_range(-limit..=limit)).collect();
                p.extend(std::iter::repeat_n(0.0, s.bias_len()));
                p
            })
            .collect();
        Self::from_params(specs, input_shape, params)
    }

    pub fn from_params(specs: Vec<LayerSpec>, input_shape: Vec<usize>, params: Vec<Vec<f64>>) -> Result<Self> {
        let mut shape = input_shape.clone();
        for (i, s) in specs.iter().enumerate() {
            s.validate()?;
            if i > 0 && matches!(s, LayerSpec::Conv1dBottleneck { .. }) {
                return Err(Error::Validation("the bottleneck must be the first layer".into()));
            }
            shape = s.output_shape(&shape)?;
        }
        if shape != [1] {
            return Err(Error::Shape(format!("network output shape {shape:?}, expected [1]")));
        }
        if params.len() != specs.len() || specs.iter().zip(&params).any(|(s, p)| s.param_len() != p.len()) {
            return Err(Error::Shape("parameter buffers do not match the layers".into()));
        }
        Ok(Self {
            specs,
            input_shape,
            params,
            tag: fresh_tag(),
        })
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    pub fn params(&self) -> &[Vec<f64>] {
        &self.params
    }

    pub fn tag(&self) -> u64 {
        self.tag
    }

    /// Replaces the parameters; outstanding caches become stale.
    pub fn set_params(&mut self, params: Vec<Vec<f64>>) -> Result<()> {
        if params.len() != self.specs.len() || self.specs.iter().zip(&params).any(|(s, p)| s.param_len() != p.len()) {
            return Err(Error::Shape("parameter buffers do not match the layers".into()));
        }
        self.params = params;
        self.tag = fresh_tag();
        Ok(())
    }

    /// Mutates the parameters in place; outstanding caches become stale.
    pub fn update_params(&mut self, f: impl FnOnce(&mut [Vec<f64>])) {
        f(&mut self.params);
        self.tag = fresh_tag();
    }

    pub fn n_params(&self) -> usize {
        self.specs.iter().map(LayerSpec::param_len).sum()
    }

    pub fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.specs.iter().map(|s| vec![0.0; s.param_len()]).collect()
    }

    /// L1 weight and weight count of the bottleneck, if present.
    pub fn bottleneck(&self) -> Option<(f64, usize)> {
        match self.specs.first()? {
            s @ LayerSpec::Conv1dBottleneck { l1_lambda, .. } => Some((*l1_lambda, s.weight_len())),
            _ => None,
        }
    }

    /// `lambda * ||w_b||_1` over bottleneck weights (biases excluded).
    pub fn l1_penalty(&self, params: &[Vec<f64>]) -> f64 {
        match self.bottleneck() {
            Some((lambda, nw)) => lambda * params[0][..nw].iter().map(|w| w.abs()).sum::<f64>(),
            None => 0.0,
        }
    }

    /// Adds `lambda * sign(w)` (0 at w = 0) to the bottleneck weight gradients.
    pub fn add_l1_subgradient(&self, params: &[Vec<f64>], grads: &mut [Vec<f64>]) {
        if let Some((lambda, nw)) = self.bottleneck() {
            for (g, w) in grads[0][..nw].iter_mut().zip(&params[0][..nw]) {
                if *w != 0.0 {
                    *g += lambda * w.signum();
                }
            }
        }
    }

    /// Neuron counts of the dropout layers, in order.
    pub fn maskable_sizes(&self) -> Vec<usize> {
        let mut shape = self.input_shape.clone();
        let mut out = Vec::new();
        for s in &self.specs {
            if matches!(s, LayerSpec::Dropout { .. }) {
                out.push(shape.iter().product());
            }
            shape = s.output_shape(&shape).expect("validated");
        }
        out
    }

    pub fn dropout_rates(&self) -> Vec<f64> {
        self.specs
            .iter()
            .filter_map(|s| match s {
                LayerSpec::Dropout { p } => Some(*p),
                _ => None,
            })
            .collect()
    }

    pub fn forward(&self, x: &Tensor, mode: DropoutMode<'_>) -> Result<Cache> {
        self.forward_with(&self.params, self.tag, x, mode)
    }

    /// Inference-mode output.
    pub fn predict(&self, x: &Tensor) -> Result<f64> {
        Ok(self.forward(x, DropoutMode::Off)?.output)
    }

    /// Forward pass under external parameters identified by `tag`.
    pub fn forward_with(&self, params: &[Vec<f64>], tag: u64, x: &Tensor, mut mode: DropoutMode<'_>) -> Result<Cache> {
        if x.shape() != self.input_shape.as_slice() {
            return Err(Error::Shape(format!(
                "input shape {:?}, network expects {:?}",
                x.shape(),
                self.input_shape
            )));
        }
        let mut inputs = Vec::with_capacity(self.specs.len());
        let mut scales = Vec::with_capacity(self.specs.len());
        let mut cur = x.clone();
        let mut dropout_idx = 0;
        for (spec, p) in self.specs.iter().zip(params) {
            let shape = cur.shape().to_vec();
            let out_shape = spec.output_shape(&shape)?;
            let mut scale = Vec::new();
            let next = match *spec {
                LayerSpec::Conv1dBottleneck {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                }
                | LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => conv_forward(cur.data(), shape[0], in_channels, out_channels, kernel, p),
                LayerSpec::Dense { inputs: nin, outputs } => dense_forward(cur.data(), nin, outputs, p),
                LayerSpec::Flatten => cur.data().to_vec(),
                LayerSpec::Activation { act } => cur.data().iter().map(|&v| act.apply(v)).collect(),
                LayerSpec::Dropout { p: rate } => {
                    let keep_scale = 1.0 / (1.0 - rate);
                    let n = cur.len();
                    scale = match &mut mode {
                        DropoutMode::Off => vec![1.0; n],
                        DropoutMode::Sample(_) if rate == 0.0 => vec![1.0; n],
                        DropoutMode::Sample(rng) => (0..n)
                            .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep_scale })
                            .collect(),
                        DropoutMode::Fixed(masks) => {
                            let m = masks.get(dropout_idx).ok_or_else(|| {
                                Error::Contract(format!("no mask for dropout layer {dropout_idx}"))
                            })?;
                            if m.len() != n {
                                return Err(Error::Contract(format!(
                                    "mask for dropout layer {dropout_idx} has {} entries, layer has {n}",
                                    m.len()
                                )));
                            }
                            m.iter().map(|&k| if k { keep_scale } else { 0.0 }).collect()
                        }
                    };
                    dropout_idx += 1;
                    cur.data().iter().zip(&scale).map(|(v, s)| v * s).collect()
                }
            };
            inputs.push(cur);
            scales.push(scale);
            cur = Tensor::new(out_shape, next)?;
        }
        let output = cur.data()[0];
        if !output.is_finite() {
            return Err(Error::Numeric("non-finite network output".into()));
        }
        Ok(Cache {
            tag,
            inputs,
            scales,
            output,
        })
    }

    /// Gradients of `dy * output` with respect to every parameter.
    pub fn backward(&self, cache: &Cache, dy: f64) -> Result<Vec<Vec<f64>>> {
        self.backward_with(&self.params, self.tag, cache, dy)
    }

    pub fn backward_with(&self, params: &[Vec<f64>], tag: u64, cache: &Cache, dy: f64) -> Result<Vec<Vec<f64>>> {
        let mut grads = self.zero_grads();
        self.accumulate_backward(params, tag, cache, dy, &mut grads)?;
        Ok(grads)
    }

    /// Adds the gradients of `dy * output` into `grads`.
    pub fn accumulate_backward(
        &self,
        params: &[Vec<f64>],
        tag: u64,
        cache: &Cache,
        dy: f64,
        grads: &mut [Vec<f64>],
    ) -> Result<()> {
        if cache.tag != tag || cache.inputs.len() != self.specs.len() {
            return Err(Error::Contract("backward called with a stale forward cache".into()));
        }
        let mut g = vec![dy];
        for (i, spec) in self.specs.iter().enumerate().rev() {
            let x = &cache.inputs[i];
            let shape = x.shape();
            g = match *spec {
                LayerSpec::Conv1dBottleneck {
                    in_channels,
                    out_channels,
                    kernel,
                    ..
                }
                | LayerSpec::Conv1d {
                    in_channels,
                    out_channels,
                    kernel,
                } => conv_backward(
                    x.data(),
                    &g,
                    shape[0],
                    in_channels,
                    out_channels,
                    kernel,
                    &params[i],
                    &mut grads[i],
                    i > 0,
                ),
                LayerSpec::Dense { inputs: nin, outputs } => dense_backward(x.data(), &g, nin, outputs, &params[i], &mut grads[i]),
                LayerSpec::Flatten => g,
                LayerSpec::Activation { act } => x.data().iter().zip(&g).map(|(&v, &gv)| gv * act.derivative(v)).collect(),
                LayerSpec::Dropout { .. } => g.iter().zip(&cache.scales[i]).map(|(a, s)| a * s).collect(),
            };
        }
        Ok(())
    }

    /// Mean squared error over `data` and its gradient (no penalty).
    pub fn mse_and_grad(
        &self,
        params: &[Vec<f64>],
        tag: u64,
        data: &Dataset,
        idx: &[usize],
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, Vec<Vec<f64>>)> {
        let mut grads = self.zero_grads();
        let mut loss = 0.0;
        let n = idx.len() as f64;
        for &i in idx {
            let mode = match rng.as_deref_mut() {
                Some(r) => DropoutMode::Sample(r),
                None => DropoutMode::Off,
            };
            let cache = self.forward_with(params, tag, &data.xs[i], mode)?;
            let err = cache.output - data.ys[i];
            loss += err * err / n;
            self.accumulate_backward(params, tag, &cache, 2.0 * err / n, &mut grads)?;
        }
        Ok((loss, grads))
    }

    /// Inference-mode mean squared error.
    pub fn mse(&self, data: &Dataset) -> Result<f64> {
        let mut s = 0.0;
        for (x, y) in data.xs.iter().zip(&data.ys) {
            s += (self.predict(x)? - y).powi(2);
        }
        Ok(s / data.len().max(1) as f64)
    }
}

/// Fraction of bottleneck weights with magnitude below `1e-4`.
pub fn bottleneck_sparsity(net: &Network) -> Result<f64> {
    let (_, nw) = net
        .bottleneck()
        .ok_or_else(|| Error::Contract("network has no bottleneck layer".into()))?;
    let small = net.params()[0][..nw].iter().filter(|w| w.abs() < 1e-4).count();
    Ok(small as f64 / nw as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::{Activation, Architecture};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn toy_network(dropout: f64, seed: u64) -> Network {
        let arch = Architecture {
            bottleneck_channels: 3,
            conv_channels: 2,
            conv_kernel: 2,
            hidden: 4,
            dropout,
            l1_lambda: 0.05,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Network::new(arch.layers(4, 3).unwrap(), vec![4, 3], &mut rng).unwrap();
        // move biases off zero so ReLUs sit away from their kinks
        net.update_params(|ps| {
            for p in ps.iter_mut() {
                for v in p.iter_mut() {
                    if *v == 0.0 {
                        *v = rng.gen_range(0.05..0.3);
                    }
                }
            }
        });
        net
    }

    fn toy_input(seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::new(vec![4, 3], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
    }

    #[test]
    fn gradients_match_central_differences() {
        let net = toy_network(0.0, 3);
        let data = Dataset::new(vec![toy_input(1), toy_input(2)], vec![0.7, -0.4]).unwrap();
        let idx = [0, 1];
        let objective = |ps: &[Vec<f64>]| {
            let (mse, _) = net.mse_and_grad(ps, 0, &data, &idx, None).unwrap();
            mse + net.l1_penalty(ps)
        };
        let (_, mut grads) = net.mse_and_grad(net.params(), 0, &data, &idx, None).unwrap();
        net.add_l1_subgradient(net.params(), &mut grads);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for l in 0..grads.len() {
            for k in 0..grads[l].len() {
                let mut plus = net.params().to_vec();
                plus[l][k] += h;
                let mut minus = net.params().to_vec();
                minus[l][k] -= h;
                let fd = (objective(&plus) - objective(&minus)) / (2.0 * h);
                worst = worst.max(rel_err(grads[l][k], fd));
            }
        }
        assert!(worst <= 1e-5, "max relative error {worst}");
    }

    #[test]
    fn tanh_and_identity_layers_pass_gradient_check() {
        let specs = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 6, outputs: 3 },
            LayerSpec::Activation { act: Activation::Tanh },
            LayerSpec::Dense { inputs: 3, outputs: 2 },
            LayerSpec::Activation { act: Activation::Identity },
            LayerSpec::Dense { inputs: 2, outputs: 1 },
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = Network::new(specs, vec![2, 3], &mut rng).unwrap();
        let x = Tensor::new(vec![2, 3], vec![0.3, -0.1, 0.8, 0.5, -0.7, 0.2]).unwrap();
        let cache = net.forward(&x, DropoutMode::Off).unwrap();
        let grads = net.backward(&cache, 1.0).unwrap();
        let h = 1e-6;
        for l in 0..grads.len() {
            for k in 0..grads[l].len() {
                let mut plus = net.params().to_vec();
                plus[l][k] += h;
                let mut minus = net.params().to_vec();
                minus[l][k] -= h;
                let fp = net.forward_with(&plus, 0, &x, DropoutMode::Off).unwrap().output;
                let fm = net.forward_with(&minus, 0, &x, DropoutMode::Off).unwrap().output;
                assert!(rel_err(grads[l][k], (fp - fm) / (2.0 * h)) <= 1e-5);
            }
        }
    }

    #[test]
    fn fixed_masks_pass_gradient_check() {
        let net = toy_network(0.4, 8);
        let x = toy_input(4);
        let masks: Vec<Vec<bool>> = net
            .maskable_sizes()
            .iter()
            .map(|&m| (0..m).map(|i| i % 3 != 1).collect())
            .collect();
        let cache = net.forward(&x, DropoutMode::Fixed(&masks)).unwrap();
        let grads = net.backward(&cache, 1.0).unwrap();
        let h = 1e-6;
        for l in 0..grads.len() {
            for k in 0..grads[l].len() {
                let mut plus = net.params().to_vec();
                plus[l][k] += h;
                let mut minus = net.params().to_vec();
                minus[l][k] -= h;
                let fp = net.forward_with(&plus, 0, &x, DropoutMode::Fixed(&masks)).unwrap().output;
                let fm = net.forward_with(&minus, 0, &x, DropoutMode::Fixed(&masks)).unwrap().output;
                assert!(rel_err(grads[l][k], (fp - fm) / (2.0 * h)) <= 1e-5, "layer {l} param {k}");
            }
        }
    }

    #[test]
    fn hand_evaluated_identity_network() {
        // flatten(2x2 ones) -> dense(4->2, w=1, b=0) -> dense(2->1, w=1, b=0)
        let specs = vec![
            LayerSpec::Flatten,
            LayerSpec::Dense { inputs: 4, outputs: 2 },
            LayerSpec::Dense { inputs: 2, outputs: 1 },
        ];
        let params = vec![vec![], [vec![1.0; 8], vec![0.0; 2]].concat(), vec![1.0, 1.0, 0.0]];
        let net = Network::from_params(specs, vec![2, 2], params).unwrap();
        let x = Tensor::new(vec![2, 2], vec![1.0; 4]).unwrap();
        assert_eq!(net.predict(&x).unwrap(), 8.0);
    }

    #[test]
    fn zero_rate_train_equals_inference() {
        let net = toy_network(0.0, 1);
        let x = toy_input(9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = net.forward(&x, DropoutMode::Sample(&mut rng)).unwrap().output;
        assert_eq!(a, net.predict(&x).unwrap());
    }

    #[test]
    fn inverted_dropout_is_unbiased() {
        // identity layer: dropout(p=0.5) then dense(1->1, w=1)
        let specs = vec![
            LayerSpec::Flatten,
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { inputs: 1, outputs: 1 },
        ];
        let net = Network::from_params(specs, vec![1, 1], vec![vec![], vec![], vec![1.0, 0.0]]).unwrap();
        let x = Tensor::new(vec![1, 1], vec![2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let mean = (0..n)
            .map(|_| net.forward(&x, DropoutMode::Sample(&mut rng)).unwrap().output)
            .sum::<f64>()
            / n as f64;
        assert!((mean - 2.0).abs() < 0.02 * 2.0);
    }

    #[test]
    fn l1_subgradient_sign() {
        let net = toy_network(0.0, 2);
        let mut ps = net.params().to_vec();
        ps[0][0] = 0.1;
        ps[0][1] = 0.0;
        let mut g = net.zero_grads();
        net.add_l1_subgradient(&ps, &mut g);
        assert_eq!(g[0][0], 0.05);
        assert_eq!(g[0][1], 0.0);
        // biases are not penalized
        let nw = net.bottleneck().unwrap().1;
        assert!(g[0][nw..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn stale_cache_is_contract_error() {
        let mut net = toy_network(0.0, 2);
        let cache = net.forward(&toy_input(1), DropoutMode::Off).unwrap();
        net.update_params(|ps| ps[1][0] += 1.0);
        assert!(matches!(net.backward(&cache, 1.0), Err(Error::Contract(_))));
    }

    #[test]
    fn wrong_input_shape_is_shape_error() {
        let net = toy_network(0.0, 2);
        let x = Tensor::zeros(vec![3, 3]);
        assert!(matches!(net.predict(&x), Err(Error::Shape(_))));
    }

    #[test]
    fn sparsity_requires_bottleneck() {
        let specs = vec![LayerSpec::Flatten, LayerSpec::Dense { inputs: 2, outputs: 1 }];
        let net = Network::from_params(specs, vec![1, 2], vec![vec![], vec![0.0, 1.0, 0.0]]).unwrap();
        assert!(matches!(bottleneck_sparsity(&net), Err(Error::Contract(_))));
    }
}
