use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_min_rows, fit, glorot, FlatModel, TrainConfig, TrainTrace};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
        }
    }

    /// Derivative expressed through the activation value `a = φ(z)`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
        }
    }
}

/// Fully connected network with a linear output unit.
///
/// `params` stores, for each layer in order, the row-major weight matrix
/// (`out × in`) followed by the bias vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub layer_sizes: Vec<usize>,
    pub activation: Activation,
    pub params: Vec<f64>,
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize], activation: Activation) -> Result<Self> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) || *layer_sizes.last().unwrap() != 1 {
            return Err(Error::Dimension(format!(
                "layer sizes {layer_sizes:?} must be positive and end in a single output"
            )));
        }
        let n = layer_sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum();
        Ok(MlpParams {
            layer_sizes: layer_sizes.to_vec(),
            activation,
            params: vec![0.0; n],
        })
    }

    /// Glorot-uniform weights and zero biases.
    pub fn init(layer_sizes: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        let mut p = Self::zeros(layer_sizes, activation)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut offset = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            glorot(&mut rng, fan_in, fan_out, &mut p.params[offset..offset + fan_in * fan_out]);
            offset += fan_out * (fan_in + 1);
        }
        Ok(p)
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.layer_sizes.windows(2).map(move |w| {
            let start = offset;
            offset += w[1] * (w[0] + 1);
            (start, w[0], w[1])
        })
    }

    /// Weight matrix of layer `k` (0-based).
    pub fn weights(&self, k: usize) -> Matrix {
        let (start, fan_in, fan_out) = self.layers().nth(k).expect("layer index");
        Matrix::from_vec(fan_out, fan_in, self.params[start..start + fan_in * fan_out].to_vec())
    }

    pub fn biases(&self, k: usize) -> &[f64] {
        let (start, fan_in, fan_out) = self.layers().nth(k).expect("layer index");
        let b = start + fan_in * fan_out;
        &self.params[b..b + fan_out]
    }

    /// Pre-activations and activations for each layer, input included.
    fn forward_trace(&self, x: &[f64]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let last = self.layer_sizes.len() - 2;
        let mut zs = Vec::with_capacity(last + 1);
        let mut acts = vec![x.to_vec()];
        for (k, (start, fan_in, fan_out)) in self.layers().enumerate() {
            let w = &self.params[start..start + fan_in * fan_out];
            let b = &self.params[start + fan_in * fan_out..start + fan_out * (fan_in + 1)];
            let input = acts.last().unwrap();
            let z: Vec<f64> = (0..fan_out)
                .map(|i| {
                    let row = &w[i * fan_in..(i + 1) * fan_in];
                    row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>() + b[i]
                })
                .collect();
            let a = if k == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            zs.push(z);
            acts.push(a);
        }
        (zs, acts)
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_size() {
            return Err(Error::Dimension(format!(
                "input has {} features, network expects {}",
                x.len(),
                self.input_size()
            )));
        }
        Ok(())
    }

    /// `∂output/∂θ` in the flat parameter layout.
    pub fn output_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut g = vec![0.0; self.params.len()];
        self.accumulate_gradient(&x.to_vec(), &|_| 1.0, &mut g);
        Ok(g)
    }
}

impl FlatModel for MlpParams {
    type Input = Vec<f64>;

    fn params(&self) -> &[f64] {
        &self.params
    }

    fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn predict(&self, x: &Vec<f64>) -> f64 {
        self.forward_trace(x).1.last().unwrap()[0]
    }

    fn accumulate_gradient(&self, x: &Vec<f64>, dout: &dyn Fn(f64) -> f64, grad: &mut [f64]) -> f64 {
        let (zs, acts) = self.forward_trace(x);
        let out = acts.last().unwrap()[0];
        let layers: Vec<_> = self.layers().collect();
        let last = layers.len() - 1;
        // delta = ∂L/∂z for the current layer
        let mut delta = vec![dout(out)];
        for k in (0..=last).rev() {
            let (start, fan_in, fan_out) = layers[k];
            if k != last {
                for (d, (&z, &a)) in delta.iter_mut().zip(zs[k].iter().zip(&acts[k + 1])) {
                    *d *= self.activation.derivative(z, a);
                }
            }
            let input = &acts[k];
            for i in 0..fan_out {
                let row = &mut grad[start + i * fan_in..start + (i + 1) * fan_in];
                for (g, a) in row.iter_mut().zip(input) {
                    *g += delta[i] * a;
                }
                grad[start + fan_in * fan_out + i] += delta[i];
            }
            if k > 0 {
                let w = &self.params[start..start + fan_in * fan_out];
                let mut prev = vec![0.0; fan_in];
                for i in 0..fan_out {
                    for (p, wij) in prev.iter_mut().zip(&w[i * fan_in..(i + 1) * fan_in]) {
                        *p += wij * delta[i];
                    }
                }
                delta = prev;
            }
        }
        out
    }
}

/// Network output for one feature vector.
pub fn mlp_forward(params: &MlpParams, x: &[f64]) -> Result<f64> {
    params.check_input(x)?;
    Ok(params.forward_trace(x).1.last().unwrap()[0])
}

/// Trains a network on `(rows of x, y)`, both already in scaled space.
pub fn mlp_train(
    x: &Matrix,
    y: &[f64],
    cfg: &TrainConfig,
    hidden: &[usize],
    activation: Activation,
) -> Result<(MlpParams, TrainTrace)> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch { left: x.rows(), right: y.len() });
    }
    check_min_rows(y.len(), "training rows")?;
    let mut sizes = vec![x.cols()];
    sizes.extend_from_slice(hidden);
    sizes.push(1);
    let model = MlpParams::init(&sizes, activation, cfg.seed)?;
    let inputs: Vec<Vec<f64>> = (0..x.rows()).map(|i| x.row(i).to_vec()).collect();
    fit(model, &inputs, y, cfg)
}
