use std::ops::RangeInclusive;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sampling of the observed window: one snippet every `alpha` seconds,
/// `s_enc` encoding steps followed by `s_ant` anticipation steps.
///
/// Steps are 1-based: `t = 1..=S` with `S = s_enc + s_ant`; predictions are
/// emitted for `t = s_enc + 1..=S`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineSpec {
    pub alpha: f64,
    pub s_enc: usize,
    pub s_ant: usize,
}

impl Default for TimelineSpec {
    fn default() -> Self {
        Self {
            alpha: 0.25,
            s_enc: 6,
            s_ant: 8,
        }
    }
}

impl TimelineSpec {
    pub fn new(alpha: f64, s_enc: usize, s_ant: usize) -> Result<Self> {
        let spec = Self { alpha, s_enc, s_ant };
        spec.validate()?;
        Ok(spec)
    }

    /// Early recognition over `n` uniformly sampled snippets: no encoding stage.
    pub fn early_recognition(alpha: f64, n: usize) -> Result<Self> {
        Self::new(alpha, 0, n)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("{} must be positive", self.alpha)));
        }
        if self.s_ant == 0 {
            return Err(Error::invalid("s_ant", "must be at least 1"));
        }
        Ok(())
    }

    pub fn total_steps(&self) -> usize {
        self.s_enc + self.s_ant
    }

    pub fn anticipation_steps(&self) -> RangeInclusive<usize> {
        self.s_enc + 1..=self.total_steps()
    }

    /// Number of unrolling iterations at step `t`: `S + 1 - t`.
    pub fn unroll_count(&self, t: usize) -> Result<usize> {
        if !self.anticipation_steps().contains(&t) {
            return Err(Error::invalid(
                "step",
                format!("{t} outside anticipation stage {:?}", self.anticipation_steps()),
            ));
        }
        Ok(self.total_steps() + 1 - t)
    }

    pub fn anticipation_time(&self, t: usize) -> Result<f64> {
        Ok(self.alpha * self.unroll_count(t)? as f64)
    }

    /// Seconds of video observed at step `t`.
    pub fn observation_time(&self, t: usize) -> f64 {
        self.alpha * t as f64
    }

    /// Fraction `t / S` of the sequence observed at step `t`.
    pub fn observation_ratio(&self, t: usize) -> f64 {
        t as f64 / self.total_steps() as f64
    }

    /// Anticipation times of all prediction steps, in step order (largest first).
    pub fn anticipation_times(&self) -> Vec<f64> {
        self.anticipation_steps()
            .map(|t| self.alpha * (self.total_steps() + 1 - t) as f64)
            .collect()
    }

    /// Prediction step whose anticipation time is closest to `tau`; ties pick the earlier step.
    pub fn step_nearest_anticipation_time(&self, tau: f64) -> usize {
        let mut best = self.s_enc + 1;
        let mut best_gap = f64::INFINITY;
        for t in self.anticipation_steps() {
            let gap = (self.alpha * (self.total_steps() + 1 - t) as f64 - tau).abs();
            if gap < best_gap - 1e-12 {
                best = t;
                best_gap = gap;
            }
        }
        best
    }
}
