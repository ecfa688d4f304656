//! Differentiable building blocks with hand-written backward passes.
//!
//! Every parameterized block implements [`Parameters`]. Gradients are stored
//! in a value of the same type as the parameters, so an optimizer, a
//! checkpoint or the gradient checker can walk both in lockstep.

mod checkpoint;
pub(crate) mod dropout;
mod gradcheck;
mod linear;
mod lstm;
mod sgd;

pub use checkpoint::{block_names, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dropout::{dropout, DropoutMode, DropoutSpec, Phase};
pub use gradcheck::{gradcheck, BlockReport, GradCheckReport, FD_STEP};
pub use linear::{Linear, Mlp, MlpTape};
pub use lstm::{LstmCell, LstmState, LstmTape};
pub use sgd::{clip_global_norm, SgdMomentum};

use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// A set of named parameter blocks visited in a fixed order.
pub trait Parameters: Clone {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix));
    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix));
}

pub(crate) fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

impl<P: Parameters> Parameters for Vec<P> {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for (i, p) in self.iter().enumerate() {
            p.visit(&join(prefix, &i.to_string()), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for (i, p) in self.iter_mut().enumerate() {
            p.visit_mut(&join(prefix, &i.to_string()), f);
        }
    }
}

pub fn blocks<P: Parameters>(p: &P) -> Vec<(String, &Matrix)> {
    let mut out = Vec::new();
    p.visit("", &mut |name, m| out.push((name, m)));
    out
}

pub fn zeros_like<P: Parameters>(p: &P) -> P {
    let mut z = p.clone();
    z.visit_mut("", &mut |_, m| m.fill(0.0));
    z
}

pub fn parameter_count<P: Parameters>(p: &P) -> usize {
    blocks(p).iter().map(|(_, m)| m.len()).sum()
}

pub fn squared_norm<P: Parameters>(p: &P) -> f64 {
    blocks(p).iter().map(|(_, m)| m.squared_norm()).sum()
}

pub fn scale<P: Parameters>(p: &mut P, s: f64) {
    p.visit_mut("", &mut |_, m| m.scale(s));
}

pub fn all_finite<P: Parameters>(p: &P) -> bool {
    blocks(p).iter().all(|(_, m)| m.is_finite())
}

/// `dst += s * src`; both must have identical block structure.
pub fn add_scaled<P: Parameters>(dst: &mut P, src: &P, s: f64) -> Result<()> {
    let src_blocks = blocks(src);
    let mut i = 0;
    let mut err = None;
    dst.visit_mut("", &mut |name, m| {
        if err.is_some() {
            return;
        }
        match src_blocks.get(i) {
            Some((_, other)) => {
                if let Err(e) = m.add_scaled(other, s) {
                    err = Some(e);
                }
            }
            None => err = Some(Error::shape("add_scaled", "matching block", name)),
        }
        i += 1;
    });
    if let Some(e) = err {
        return Err(e);
    }
    if i != src_blocks.len() {
        return Err(Error::shape("add_scaled", src_blocks.len(), i));
    }
    Ok(())
}

/// Exact equality of every block (bitwise on values).
pub fn bit_equal<P: Parameters>(a: &P, b: &P) -> bool {
    let (ba, bb) = (blocks(a), blocks(b));
    ba.len() == bb.len()
        && ba.iter().zip(&bb).all(|((na, ma), (nb, mb))| {
            na == nb
                && ma.shape() == mb.shape()
                && ma
                    .as_slice()
                    .iter()
                    .zip(mb.as_slice())
                    .all(|(x, y)| x.to_bits() == y.to_bits())
        })
}
