use serde::{Deserialize, Serialize};

use super::{TimelineSpec, UnrollMode};
use crate::error::{Error, Result};
use crate::nn::dropout::apply_mask;
use crate::nn::{join, Linear, LstmCell, LstmState, LstmTape, Parameters, Phase};
use crate::tensor::{Matrix, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    /// Rolling encoder plus unrolling decoder.
    RollingUnrolling,
    /// Single LSTM baseline: scores are read off the rolling hidden state.
    RollingOnly,
}

/// One modality branch: rolling LSTM, unrolling LSTM and linear score head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuBranch {
    pub modality: String,
    pub kind: BranchKind,
    pub rolling: LstmCell,
    pub unrolling: Option<LstmCell>,
    pub head: Linear,
    /// Drop probability on every LSTM input and on the head input.
    pub dropout: f64,
    /// Draw a fresh mask for every LSTM step (otherwise one mask per sequence and role).
    pub resample_masks_per_step: bool,
}

/// Outputs for the anticipation steps `s_enc + 1..=S`, in order.
#[derive(Debug, Clone)]
pub struct BranchOutput {
    pub scores: Vec<Vec<f64>>,
    /// Rolling `(h, c)` at each anticipation step.
    pub rolling_states: Vec<LstmState>,
}

#[derive(Debug, Clone)]
pub struct BranchTape {
    spec: TimelineSpec,
    rolling: Vec<LstmTape>,
    unrolling: Vec<Vec<LstmTape>>,
    head_inputs: Vec<Vec<f64>>,
    head_masks: Vec<Option<Vec<f64>>>,
}

struct Masks {
    p: f64,
    per_step: bool,
    rolling: Option<Option<Vec<f64>>>,
    unrolling: Option<Option<Vec<f64>>>,
    head: Option<Option<Vec<f64>>>,
}

enum Role {
    Rolling,
    Unrolling,
    Head,
}

impl Masks {
    fn draw(&mut self, role: Role, len: usize, phase: &mut Phase<'_>) -> Option<Vec<f64>> {
        if self.per_step {
            return phase.mask(self.p, len);
        }
        let slot = match role {
            Role::Rolling => &mut self.rolling,
            Role::Unrolling => &mut self.unrolling,
            Role::Head => &mut self.head,
        };
        slot.get_or_insert_with(|| phase.mask(self.p, len)).clone()
    }
}

impl RuBranch {
    pub fn init(
        modality: impl Into<String>,
        kind: BranchKind,
        input_dim: usize,
        hidden_dim: usize,
        num_actions: usize,
        dropout: f64,
        rng: &mut Rng,
    ) -> Result<Self> {
        crate::nn::dropout::validate_probability(dropout)?;
        if input_dim == 0 || hidden_dim == 0 || num_actions == 0 {
            return Err(Error::invalid(
                "branch dimensions",
                format!("input {input_dim}, hidden {hidden_dim}, actions {num_actions}"),
            ));
        }
        let rolling = LstmCell::init(input_dim, hidden_dim, rng);
        let unrolling = match kind {
            BranchKind::RollingUnrolling => Some(LstmCell::init(input_dim, hidden_dim, rng)),
            BranchKind::RollingOnly => None,
        };
        let head = Linear::init(hidden_dim, num_actions, rng);
        Ok(Self {
            modality: modality.into(),
            kind,
            rolling,
            unrolling,
            head,
            dropout,
            resample_masks_per_step: true,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.rolling.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.rolling.hidden_dim()
    }

    pub fn num_actions(&self) -> usize {
        self.head.output_dim()
    }

    pub fn forward(
        &self,
        features: &Matrix,
        spec: &TimelineSpec,
        mode: UnrollMode,
        phase: &mut Phase<'_>,
    ) -> Result<(BranchOutput, BranchTape)> {
        spec.validate()?;
        let total = spec.total_steps();
        if features.rows() != total {
            return Err(Error::shape("branch features rows", total, features.rows()));
        }
        if features.cols() != self.input_dim() {
            return Err(Error::shape("branch feature dim", self.input_dim(), features.cols()));
        }
        let mut masks = Masks {
            p: self.dropout,
            per_step: self.resample_masks_per_step,
            rolling: None,
            unrolling: None,
            head: None,
        };
        let dim = self.input_dim();
        let mut out = BranchOutput {
            scores: Vec::with_capacity(spec.s_ant),
            rolling_states: Vec::with_capacity(spec.s_ant),
        };
        let mut tape = BranchTape {
            spec: *spec,
            rolling: Vec::with_capacity(total),
            unrolling: Vec::with_capacity(spec.s_ant),
            head_inputs: Vec::with_capacity(spec.s_ant),
            head_masks: Vec::with_capacity(spec.s_ant),
        };
        let mut state = LstmState::zeros(self.hidden_dim());
        for t in 1..=total {
            let mask = masks.draw(Role::Rolling, dim, phase);
            let x = apply_mask(features.row(t - 1), mask.as_deref());
            let (next, rtape) = self.rolling.step(&x, &state)?;
            state = next;
            tape.rolling.push(rtape);
            if t <= spec.s_enc {
                continue;
            }
            let final_h = match &self.unrolling {
                None => {
                    tape.unrolling.push(Vec::new());
                    state.h.clone()
                }
                Some(cell) => {
                    let n = spec.unroll_count(t)?;
                    let mut u = state.clone();
                    let mut utapes = Vec::with_capacity(n);
                    for j in 1..=n {
                        let row = match mode {
                            UnrollMode::Anticipation => t,
                            UnrollMode::SequenceCompletion => t + j - 1,
                        };
                        let mask = masks.draw(Role::Unrolling, dim, phase);
                        let x = apply_mask(features.row(row - 1), mask.as_deref());
                        let (next, utape) = cell.step(&x, &u)?;
                        u = next;
                        utapes.push(utape);
                    }
                    tape.unrolling.push(utapes);
                    u.h
                }
            };
            let hmask = masks.draw(Role::Head, final_h.len(), phase);
            let head_in = apply_mask(&final_h, hmask.as_deref());
            out.scores.push(self.head.forward(&head_in)?);
            tape.head_inputs.push(head_in);
            tape.head_masks.push(hmask);
            out.rolling_states.push(state.clone());
        }
        Ok((out, tape))
    }

    /// Backpropagation through time.
    ///
    /// `d_scores[k]` is the gradient of the loss with respect to the scores of
    /// the `k`-th anticipation step; `d_rolling[k]`, when given, is an extra
    /// gradient on the rolling state at that step (from the attention network).
    pub fn backward(
        &self,
        tape: &BranchTape,
        d_scores: &[Vec<f64>],
        d_rolling: Option<&[LstmState]>,
        grads: &mut RuBranch,
    ) -> Result<()> {
        let spec = tape.spec;
        if d_scores.len() != spec.s_ant || tape.rolling.len() != spec.total_steps() {
            return Err(Error::shape("branch backward steps", spec.s_ant, d_scores.len()));
        }
        if let Some(d) = d_rolling {
            if d.len() != spec.s_ant {
                return Err(Error::shape("branch backward rolling grads", spec.s_ant, d.len()));
            }
        }
        let hd = self.hidden_dim();
        let mut d_state = LstmState::zeros(hd);
        for t in (1..=spec.total_steps()).rev() {
            if t > spec.s_enc {
                let k = t - spec.s_enc - 1;
                let d_head_in = self.head.backward(&tape.head_inputs[k], &d_scores[k], &mut grads.head)?;
                let d_final = apply_mask(&d_head_in, tape.head_masks[k].as_deref());
                match (&self.unrolling, grads.unrolling.as_mut()) {
                    (None, _) => add_into(&mut d_state.h, &d_final),
                    (Some(cell), Some(gcell)) => {
                        let mut du = LstmState {
                            h: d_final,
                            c: vec![0.0; hd],
                        };
                        for utape in tape.unrolling[k].iter().rev() {
                            du = cell.backward(utape, &du, gcell)?.1;
                        }
                        add_into(&mut d_state.h, &du.h);
                        add_into(&mut d_state.c, &du.c);
                    }
                    (Some(_), None) => {
                        return Err(Error::shape("branch grads", "unrolling cell", "none"));
                    }
                }
                if let Some(d) = d_rolling {
                    add_into(&mut d_state.h, &d[k].h);
                    add_into(&mut d_state.c, &d[k].c);
                }
            }
            d_state = self.rolling.backward(&tape.rolling[t - 1], &d_state, &mut grads.rolling)?.1;
        }
        Ok(())
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (a, b) in dst.iter_mut().zip(src) {
        *a += b;
    }
}

impl Parameters for RuBranch {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        self.rolling.visit(&join(prefix, "rolling"), f);
        if let Some(u) = &self.unrolling {
            u.visit(&join(prefix, "unrolling"), f);
        }
        self.head.visit(&join(prefix, "head"), f);
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        self.rolling.visit_mut(&join(prefix, "rolling"), f);
        if let Some(u) = &mut self.unrolling {
            u.visit_mut(&join(prefix, "unrolling"), f);
        }
        self.head.visit_mut(&join(prefix, "head"), f);
    }
}
