use serde::{Deserialize, Serialize};

use super::dropout::{apply_mask, validate_probability};
use super::{join, Parameters, Phase};
use crate::error::{Error, Result};
use crate::tensor::{Matrix, Rng};

/// Affine map `y = W x + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    /// `out x in`.
    pub weights: Matrix,
    /// `out x 1`.
    pub bias: Matrix,
}

impl Linear {
    pub fn zeros(input_dim: usize, output_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(output_dim, input_dim),
            bias: Matrix::zeros(output_dim, 1),
        }
    }

    pub fn init(input_dim: usize, output_dim: usize, rng: &mut Rng) -> Self {
        Self {
            weights: Matrix::glorot_uniform(output_dim, input_dim, rng),
            bias: Matrix::zeros(output_dim, 1),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.weights.matvec(x)?;
        for (v, b) in y.iter_mut().zip(self.bias.as_slice()) {
            *v += b;
        }
        Ok(y)
    }

    /// Accumulates parameter gradients for input `x` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], dy: &[f64], grads: &mut Linear) -> Result<Vec<f64>> {
        if dy.len() != self.output_dim() {
            return Err(Error::shape("linear backward", self.output_dim(), dy.len()));
        }
        grads.weights.add_outer(dy, x, 1.0)?;
        for (b, d) in grads.bias.as_mut_slice().iter_mut().zip(dy) {
            *b += d;
        }
        self.weights.matvec_transposed(dy)
    }
}

impl Parameters for Linear {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        f(join(prefix, "weights"), &self.weights);
        f(join(prefix, "bias"), &self.bias);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        f(join(prefix, "weights"), &mut self.weights);
        f(join(prefix, "bias"), &mut self.bias);
    }
}

/// Feed-forward network with ReLU between layers and a linear output.
///
/// Dropout with probability `dropout` is applied to the input of every layer
/// except the first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    dropout: f64,
}

#[derive(Debug, Clone)]
pub struct MlpTape {
    /// Input of every layer after dropout.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations of every hidden layer.
    pre: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl Mlp {
    /// `sizes = [in, hidden..., out]`.
    pub fn init(sizes: &[usize], dropout: f64, rng: &mut Rng) -> Result<Self> {
        Self::build(sizes, dropout, |i, o| Linear::init(i, o, rng))
    }

    pub fn zeros(sizes: &[usize], dropout: f64) -> Result<Self> {
        Self::build(sizes, dropout, Linear::zeros)
    }

    fn build(sizes: &[usize], dropout: f64, mut make: impl FnMut(usize, usize) -> Linear) -> Result<Self> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(Error::invalid("mlp sizes", format!("{sizes:?}")));
        }
        validate_probability(dropout)?;
        Ok(Self {
            layers: sizes.windows(2).map(|w| make(w[0], w[1])).collect(),
            dropout,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, Linear::output_dim)
    }

    pub fn sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Linear::output_dim))
            .collect()
    }

    pub fn dropout(&self) -> f64 {
        self.dropout
    }

    pub fn forward(&self, x: &[f64], phase: &mut Phase<'_>) -> Result<(Vec<f64>, MlpTape)> {
        if x.len() != self.input_dim() {
            return Err(Error::shape("mlp input", self.input_dim(), x.len()));
        }
        let last = self.layers.len() - 1;
        let mut tape = MlpTape {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(last),
            masks: Vec::with_capacity(self.layers.len()),
        };
        let mut act = x.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mask = if l > 0 { phase.mask(self.dropout, act.len()) } else { None };
            let input = apply_mask(&act, mask.as_deref());
            let z = layer.forward(&input)?;
            tape.inputs.push(input);
            tape.masks.push(mask);
            if l < last {
                act = z.iter().map(|v| v.max(0.0)).collect();
                tape.pre.push(z);
            } else {
                act = z;
            }
        }
        Ok((act, tape))
    }

    pub fn backward(&self, tape: &MlpTape, dy: &[f64], grads: &mut Mlp) -> Result<Vec<f64>> {
        if tape.inputs.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(Error::shape("mlp backward tape", self.layers.len(), tape.inputs.len()));
        }
        let mut d = dy.to_vec();
        for l in (0..self.layers.len()).rev() {
            if l < self.layers.len() - 1 {
                for (dv, z) in d.iter_mut().zip(&tape.pre[l]) {
                    if *z <= 0.0 {
                        *dv = 0.0;
                    }
                }
            }
            d = self.layers[l].backward(&tape.inputs[l], &d, &mut grads.layers[l])?;
            if let Some(m) = &tape.masks[l] {
                d = apply_mask(&d, Some(m));
            }
        }
        Ok(d)
    }
}

impl Parameters for Mlp {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.layers.visit(prefix, f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.layers.visit_mut(prefix, f);
    }
}
