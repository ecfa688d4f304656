use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DropoutMode {
    Train,
    Eval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutSpec {
    p: f64,
    pub mode: DropoutMode,
}

impl DropoutSpec {
    /// `p` is the probability of dropping a unit; must lie in `[0, 1)`.
    pub fn new(p: f64, mode: DropoutMode) -> Result<Self> {
        validate_probability(p)?;
        Ok(Self { p, mode })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

pub(crate) fn validate_probability(p: f64) -> Result<()> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::invalid("dropout probability", format!("{p} not in [0, 1)")));
    }
    Ok(())
}

/// Inverted dropout: in training mode each unit is kept with probability
/// `1 - p` and kept units are scaled by `1 / (1 - p)`; evaluation is the identity.
///
/// Returns the output and the mask (`0` or `1 / (1 - p)` per unit) when one was drawn.
pub fn dropout(spec: &DropoutSpec, x: &[f64], rng: &mut Rng) -> (Vec<f64>, Option<Vec<f64>>) {
    if spec.mode == DropoutMode::Eval || spec.p == 0.0 {
        return (x.to_vec(), None);
    }
    let mask = draw_mask(spec.p, x.len(), rng);
    (apply_mask(x, Some(&mask)), Some(mask))
}

fn draw_mask(p: f64, len: usize, rng: &mut Rng) -> Vec<f64> {
    let keep = 1.0 / (1.0 - p);
    (0..len).map(|_| if rng.bernoulli(p) { 0.0 } else { keep }).collect()
}

pub(crate) fn apply_mask(x: &[f64], mask: Option<&[f64]>) -> Vec<f64> {
    match mask {
        None => x.to_vec(),
        Some(m) => x.iter().zip(m).map(|(a, b)| a * b).collect(),
    }
}

/// Whether a forward pass samples dropout masks, and from which stream.
pub enum Phase<'a> {
    Eval,
    Train(&'a mut Rng),
}

impl Phase<'_> {
    pub fn is_train(&self) -> bool {
        matches!(self, Phase::Train(_))
    }

    pub fn mode(&self) -> DropoutMode {
        if self.is_train() {
            DropoutMode::Train
        } else {
            DropoutMode::Eval
        }
    }

    /// A fresh mask of `len` units, or `None` when no dropout applies.
    pub(crate) fn mask(&mut self, p: f64, len: usize) -> Option<Vec<f64>> {
        match self {
            Phase::Train(rng) if p > 0.0 => Some(draw_mask(p, len, rng)),
            _ => None,
        }
    }
}
