use std::fmt;

use serde::Serialize;

use super::{blocks, Parameters};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so that gradients that are zero
/// up to rounding do not produce spurious failures.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub name: String,
    pub entries: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub blocks: Vec<BlockReport>,
    pub passed: bool,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.blocks.iter().map(|b| b.max_rel_error).fold(0.0, f64::max)
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<40} {:>8} {:>12} {:>12}  status", "block", "entries", "max_rel", "max_abs")?;
        for b in &self.blocks {
            let status = if b.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<40} {:>8} {:>12.3e} {:>12.3e}  {status}",
                b.name, b.entries, b.max_rel_error, b.max_abs_error
            )?;
        }
        write!(
            f,
            "{} (tolerance {:.0e}, worst {:.3e})",
            if self.passed { "PASS" } else { "FAIL" },
            self.tolerance,
            self.max_rel_error()
        )
    }
}

/// Compares the analytic gradient returned by `eval` against central finite
/// differences with step [`FD_STEP`] on every parameter entry.
///
/// `eval` maps parameters to `(loss, gradient)` and must be deterministic; it
/// is evaluated twice at `params` and any bitwise disagreement in the loss is
/// reported as [`Error::NonDeterministic`]. Per entry the relative error is
/// `|a - n| / max(|a|, |n|, 1e-6)`.
pub fn gradcheck<P, F>(params: &P, mut eval: F, tolerance: f64) -> Result<GradCheckReport>
where
    P: Parameters,
    F: FnMut(&P) -> Result<(f64, P)>,
{
    let (loss, analytic) = eval(params)?;
    let (again, _) = eval(params)?;
    if loss.to_bits() != again.to_bits() {
        return Err(Error::NonDeterministic {
            first: loss,
            second: again,
        });
    }
    let analytic: Vec<(String, Matrix)> = blocks(&analytic)
        .into_iter()
        .map(|(n, m)| (n, m.clone()))
        .collect();
    let mut work = params.clone();
    let mut reports = Vec::with_capacity(analytic.len());
    for (b, (name, grad)) in analytic.iter().enumerate() {
        let mut max_rel: f64 = 0.0;
        let mut max_abs: f64 = 0.0;
        for k in 0..grad.len() {
            let original = entry(&mut work, b, k, |v| *v)?;
            entry(&mut work, b, k, |v| *v = original + FD_STEP)?;
            let plus = eval(&work)?.0;
            entry(&mut work, b, k, |v| *v = original - FD_STEP)?;
            let minus = eval(&work)?.0;
            entry(&mut work, b, k, |v| *v = original)?;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let a = grad.as_slice()[k];
            let abs = (a - numeric).abs();
            let rel = abs / a.abs().max(numeric.abs()).max(REL_FLOOR);
            max_abs = max_abs.max(abs);
            max_rel = max_rel.max(if rel.is_nan() { f64::INFINITY } else { rel });
        }
        reports.push(BlockReport {
            name: name.clone(),
            entries: grad.len(),
            max_rel_error: max_rel,
            max_abs_error: max_abs,
        });
    }
    let passed = reports.iter().all(|r| r.max_rel_error < tolerance);
    Ok(GradCheckReport {
        tolerance,
        blocks: reports,
        passed,
    })
}

fn entry<P: Parameters, T>(p: &mut P, block: usize, index: usize, f: impl FnOnce(&mut f64) -> T) -> Result<T> {
    let mut f = Some(f);
    let mut out = None;
    let mut b = 0;
    p.visit_mut("", &mut |_, m| {
        if b == block {
            if let (Some(v), Some(g)) = (m.as_mut_slice().get_mut(index), f.take()) {
                out = Some(g(v));
            }
        }
        b += 1;
    });
    out.ok_or_else(|| Error::shape("gradcheck entry", format!("block {block} index {index}"), "out of range"))
}
