//! Dense feed-forward network: tanh hidden layers, linear output.
//!
//! Parameters are one flat vector, layer by layer: the `out × in` weight
//! matrix in row-major order followed by the `out` biases.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::PredictorError;
use crate::scalar::Real;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp<T> {
    layer_sizes: Vec<usize>,
    params: Vec<T>,
}

/// Number of parameters for a layer chain.
pub fn param_count(layer_sizes: &[usize]) -> usize {
    layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Mlp<T> {
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self, PredictorError> {
        check_sizes(layer_sizes)?;
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params: vec![T::zero(); param_count(layer_sizes)],
        })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self, PredictorError> {
        let mut m = Self::zeros(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut off = 0;
        for w in layer_sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for p in &mut m.params[off..off + fan_in * fan_out] {
                *p = T::lit(rng.random_range(-a..a));
            }
            off += fan_in * fan_out + fan_out;
        }
        Ok(m)
    }

    pub fn from_params(layer_sizes: &[usize], params: Vec<T>) -> Result<Self, PredictorError> {
        check_sizes(layer_sizes)?;
        let expected = param_count(layer_sizes);
        if params.len() != expected {
            return Err(PredictorError::Dimension {
                expected,
                got: params.len(),
            });
        }
        Ok(Self {
            layer_sizes: layer_sizes.to_vec(),
            params,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn params(&self) -> &[T] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [T] {
        &mut self.params
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    /// Activations of every layer, input included.
    fn activations(&self, x: &[T]) -> Vec<Vec<T>> {
        let n_layers = self.layer_sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.to_vec());
        let mut off = 0;
        for (l, w) in self.layer_sizes.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = &self.params[off..off + n_in * n_out];
            let bias = &self.params[off + n_in * n_out..off + n_in * n_out + n_out];
            let prev = &acts[l];
            let last = l + 1 == n_layers;
            let next: Vec<T> = (0..n_out)
                .map(|j| {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    let z = row.iter().zip(prev).fold(bias[j], |s, (&wij, &a)| s + wij * a);
                    if last {
                        z
                    } else {
                        z.tanh()
                    }
                })
                .collect();
            acts.push(next);
            off += n_in * n_out + n_out;
        }
        acts
    }

    pub fn forward(&self, x: &[T]) -> Result<Vec<T>, PredictorError> {
        if x.len() != self.input_dim() {
            return Err(PredictorError::Dimension {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(self.activations(x).pop().unwrap())
    }

    /// `½ Σ_i ‖f(x_i) − y_i‖²`.
    pub fn batch_loss(&self, xs: &[Vec<T>], ys: &[Vec<T>]) -> Result<T, PredictorError> {
        let mut loss = T::zero();
        for (x, y) in xs.iter().zip(ys) {
            loss += super::squared_loss(y, &self.forward(x)?);
        }
        Ok(loss)
    }

    /// `½ Σ_i ‖f(x_i) − y_i‖²` and its gradient with respect to the parameters.
    pub fn loss_and_grad(&self, xs: &[Vec<T>], ys: &[Vec<T>]) -> Result<(T, Vec<T>), PredictorError> {
        let mut grad = vec![T::zero(); self.params.len()];
        let mut loss = T::zero();
        let half = T::lit(0.5);
        for (x, y) in xs.iter().zip(ys) {
            if x.len() != self.input_dim() || y.len() != self.output_dim() {
                return Err(PredictorError::Dimension {
                    expected: self.input_dim(),
                    got: x.len(),
                });
            }
            let acts = self.activations(x);
            let out = acts.last().unwrap();
            let mut delta: Vec<T> = out.iter().zip(y).map(|(&o, &t)| o - t).collect();
            loss += half * delta.iter().map(|&d| d * d).sum::<T>();
            self.backprop(&acts, &mut delta, &mut grad);
        }
        Ok((loss, grad))
    }

    /// Accumulates the gradient for one sample; `delta` is dL/d(output).
    fn backprop(&self, acts: &[Vec<T>], delta: &mut Vec<T>, grad: &mut [T]) {
        let n_layers = self.layer_sizes.len() - 1;
        let mut offs = Vec::with_capacity(n_layers);
        let mut off = 0;
        for w in self.layer_sizes.windows(2) {
            offs.push(off);
            off += w[0] * w[1] + w[1];
        }
        for l in (0..n_layers).rev() {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let off = offs[l];
            let prev = &acts[l];
            for j in 0..n_out {
                let d = delta[j];
                let row = off + j * n_in;
                for i in 0..n_in {
                    grad[row + i] += d * prev[i];
                }
                grad[off + n_in * n_out + j] += d;
            }
            if l > 0 {
                let weights = &self.params[off..off + n_in * n_out];
                let mut back = vec![T::zero(); n_in];
                for (j, &d) in delta.iter().enumerate() {
                    let row = &weights[j * n_in..(j + 1) * n_in];
                    for (b, &w) in back.iter_mut().zip(row) {
                        *b += w * d;
                    }
                }
                // tanh' = 1 − a²
                for (b, &a) in back.iter_mut().zip(prev) {
                    *b *= T::one() - a * a;
                }
                *delta = back;
            }
        }
    }

    /// θ ← θ − α·g.
    pub fn apply_gradient(&mut self, grad: &[T], alpha: T) {
        for (p, &g) in self.params.iter_mut().zip(grad) {
            *p -= alpha * g;
        }
    }
}

fn check_sizes(layer_sizes: &[usize]) -> Result<(), PredictorError> {
    if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
        return Err(PredictorError::Architecture(format!("{layer_sizes:?}")));
    }
    Ok(())
}
