use ndarray::Array2;
use rand::Rng;

use super::tape::{Tape, Var};
use crate::error::{check_len, Error, Result};

/// Anything with a flat list of trainable tensors.
pub trait Module {
    fn tensors(&self) -> Vec<&Array2<f64>>;
    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Registers every tensor as a differentiable leaf.
    fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors()
            .into_iter()
            .map(|t| tape.param(t.clone()))
            .collect()
    }

    /// Records every tensor as a constant, for forward passes whose
    /// parameters must not receive gradients.
    fn register_constant(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors()
            .into_iter()
            .map(|t| tape.constant(t.clone()))
            .collect()
    }

    fn flat_params(&self) -> Vec<f64> {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.iter().copied().collect::<Vec<_>>())
            .collect()
    }

    fn all_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// Fully connected network with `tanh` hidden activations and a linear
/// output layer.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    /// `[w0, b0, w1, b1, ...]`; weights are `in×out`, biases `1×out`.
    tensors: Vec<Array2<f64>>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases. The output layer is scaled by
    /// `out_scale` (use 0 for a zero-initialized head).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        let n_layers = sizes.len() - 1;
        let mut tensors = Vec::with_capacity(2 * n_layers);
        for (l, pair) in sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let scale = if l + 1 == n_layers { out_scale } else { 1.0 };
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| {
                scale * rng.random_range(-limit..limit)
            });
            tensors.push(w);
            tensors.push(Array2::zeros((1, fan_out)));
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            tensors,
        })
    }

    pub fn from_tensors(sizes: Vec<usize>, tensors: Vec<Array2<f64>>) -> Result<Self> {
        if sizes.len() < 2 {
            return Err(Error::Config(format!("invalid layer sizes {sizes:?}")));
        }
        check_len("mlp tensor count", 2 * (sizes.len() - 1), tensors.len())?;
        for (l, pair) in sizes.windows(2).enumerate() {
            let w = &tensors[2 * l];
            let b = &tensors[2 * l + 1];
            if w.dim() != (pair[0], pair[1]) || b.dim() != (1, pair[1]) {
                return Err(Error::Dimension {
                    what: "mlp layer shape",
                    expected: pair[0] * pair[1],
                    got: w.len(),
                });
            }
        }
        Ok(Mlp { sizes, tensors })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least two sizes")
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Batched forward pass without recording a tape.
    pub fn forward(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        check_len("mlp input width", self.input_dim(), x.ncols())?;
        let mut h = x.dot(&self.tensors[0]) + &self.tensors[1];
        for l in 1..self.n_layers() {
            h.mapv_inplace(super::tape::tanh);
            h = h.dot(&self.tensors[2 * l]) + &self.tensors[2 * l + 1];
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let row = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .expect("row vector shape matches length");
        Ok(self.forward(&row)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass recorded on `tape`; `vars` are this network's registered
    /// tensors.
    pub fn forward_tape(&self, tape: &mut Tape, vars: &[Var], x: Var) -> Var {
        let mut h = tape.linear(x, vars[0], vars[1]);
        for l in 1..self.n_layers() {
            h = tape.tanh(h);
            h = tape.linear(h, vars[2 * l], vars[2 * l + 1]);
        }
        h
    }

    /// Polyak averaging `self ← (1 − k)·self + k·source`.
    pub fn soft_update_from(&mut self, source: &Mlp, k: f64) {
        for (t, s) in self.tensors.iter_mut().zip(&source.tensors) {
            t.zip_mut_with(s, |t, &s| *t = (1.0 - k) * *t + k * s);
        }
    }
}

impl Module for Mlp {
    fn tensors(&self) -> Vec<&Array2<f64>> {
        self.tensors.iter().collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        self.tensors.iter_mut().collect()
    }
}
