use serde::{Deserialize, Serialize};

use super::{blocks, scale, squared_norm, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Classical momentum SGD: `v <- μ v - η g; θ <- θ + v`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdMomentum {
    pub learning_rate: f64,
    pub momentum: f64,
    #[serde(skip)]
    velocity: Vec<Matrix>,
}

impl Default for SgdMomentum {
    fn default() -> Self {
        Self::new(0.01, 0.9)
    }
}

impl SgdMomentum {
    pub fn new(learning_rate: f64, momentum: f64) -> Self {
        Self {
            learning_rate,
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self) -> &[Matrix] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, velocity: Vec<Matrix>) {
        self.velocity = velocity;
    }

    pub fn reset(&mut self) {
        self.velocity.clear();
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_blocks = blocks(grads);
        if self.velocity.is_empty() {
            self.velocity = grad_blocks.iter().map(|(_, g)| g.zeros_like()).collect();
        }
        if self.velocity.len() != grad_blocks.len() {
            return Err(Error::shape("sgd velocity", self.velocity.len(), grad_blocks.len()));
        }
        for (v, (_, g)) in self.velocity.iter_mut().zip(&grad_blocks) {
            if v.shape() != g.shape() {
                return Err(Error::shape("sgd velocity block", format!("{:?}", v.shape()), format!("{:?}", g.shape())));
            }
            v.scale(self.momentum);
            v.add_scaled(g, -self.learning_rate)?;
        }
        let velocity = &self.velocity;
        let mut idx = 0;
        let mut err = None;
        params.visit_mut("", &mut |name, p| {
            match velocity.get(idx) {
                Some(v) if v.shape() == p.shape() => {
                    p.add_scaled(v, 1.0).expect("shape checked");
                }
                _ => {
                    err.get_or_insert(Error::shape("sgd parameter block", "velocity-shaped block", name));
                }
            }
            idx += 1;
        });
        match err {
            Some(e) => Err(e),
            None if idx != velocity.len() => Err(Error::shape("sgd parameters", velocity.len(), idx)),
            None => Ok(()),
        }
    }
}

/// Rescales `grads` so that its global L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm<P: Parameters>(grads: &mut P, max_norm: f64) -> f64 {
    let norm = squared_norm(grads).sqrt();
    if norm > max_norm && norm > 0.0 {
        scale(grads, max_norm / norm);
    }
    norm
}
