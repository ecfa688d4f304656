use serde::{Deserialize, Serialize};

use super::branch::{BranchKind, BranchOutput, BranchTape, RuBranch};
use super::{anticipation_loss_grad, TimelineSpec, UnrollMode};
use crate::error::{Error, Result};
use crate::nn::{join, zeros_like, LstmState, Mlp, MlpTape, Parameters, Phase};
use crate::tensor::{dot, softmax, Matrix, Rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FusionStrategy {
    /// A single branch over the concatenated modality features.
    Early,
    /// Fixed convex combination of per-modality scores.
    Late { weights: Vec<f64> },
    /// Per-step weights from the modality attention network.
    Matt,
}

impl FusionStrategy {
    pub fn late_uniform(m: usize) -> Self {
        FusionStrategy::Late {
            weights: vec![1.0 / m as f64; m],
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            FusionStrategy::Early => "early",
            FusionStrategy::Late { .. } => "late",
            FusionStrategy::Matt => "matt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub modalities: Vec<String>,
    pub input_dims: Vec<usize>,
    pub hidden_dim: usize,
    pub num_actions: usize,
    pub timeline: TimelineSpec,
    pub strategy: FusionStrategy,
    pub branch_kind: BranchKind,
    pub dropout: f64,
    pub matt_dropout: f64,
    pub resample_masks_per_step: bool,
}

impl ModelConfig {
    /// Three-layer attention network sizes `[h, h/4, h/8, M]` with `h = 2 H M`.
    pub fn matt_sizes(&self) -> Vec<usize> {
        let h = 2 * self.hidden_dim * self.modalities.len();
        vec![h, (h / 4).max(1), (h / 8).max(1), self.modalities.len()]
    }

    pub fn validate(&self) -> Result<()> {
        self.timeline.validate()?;
        if self.modalities.is_empty() {
            return Err(Error::invalid("modalities", "at least one modality is required"));
        }
        if self.input_dims.len() != self.modalities.len() {
            return Err(Error::invalid(
                "input_dims",
                format!("{} dims for {} modalities", self.input_dims.len(), self.modalities.len()),
            ));
        }
        if self.hidden_dim == 0 || self.num_actions == 0 || self.input_dims.contains(&0) {
            return Err(Error::invalid("dimensions", "hidden_dim, num_actions and input dims must be positive"));
        }
        if let FusionStrategy::Late { weights } = &self.strategy {
            if weights.len() != self.modalities.len() {
                return Err(Error::invalid("late weights", format!("{} weights for {} modalities", weights.len(), self.modalities.len())));
            }
            let sum: f64 = weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 || weights.iter().any(|w| *w < 0.0) {
                return Err(Error::invalid("late weights", format!("{weights:?} must be non-negative and sum to 1")));
            }
        }
        crate::nn::dropout::validate_probability(self.dropout)?;
        crate::nn::dropout::validate_probability(self.matt_dropout)?;
        Ok(())
    }
}

/// Predictions of one anticipation step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepPrediction {
    /// 1-based step index `t`.
    pub step: usize,
    pub anticipation_time: f64,
    /// Fused action scores.
    pub scores: Vec<f64>,
    /// Per-branch scores, in branch order.
    pub modality_scores: Vec<Vec<f64>>,
    /// Fusion weights, one per branch.
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTimeline {
    pub spec: TimelineSpec,
    pub branches: Vec<String>,
    pub steps: Vec<StepPrediction>,
}

impl PredictionTimeline {
    pub fn scores(&self) -> Vec<Vec<f64>> {
        self.steps.iter().map(|s| s.scores.clone()).collect()
    }

    pub fn step(&self, t: usize) -> Option<&StepPrediction> {
        self.steps.iter().find(|s| s.step == t)
    }
}

#[derive(Debug, Clone)]
pub struct FusionTape {
    branch_tapes: Vec<BranchTape>,
    branch_scores: Vec<Vec<Vec<f64>>>,
    weights: Vec<Vec<f64>>,
    matt_tapes: Vec<MlpTape>,
}

/// The full anticipation model: one branch per modality (or a single early-fusion
/// branch) and the fusion layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub config: ModelConfig,
    pub branches: Vec<RuBranch>,
    pub matt: Option<Mlp>,
}

impl FusionModel {
    /// Fresh parameters. The attention network's output layer starts at zero so
    /// the first forward pass weighs modalities uniformly.
    pub fn new(config: ModelConfig, rng: &mut Rng) -> Result<Self> {
        config.validate()?;
        let branches = match config.strategy {
            FusionStrategy::Early => vec![RuBranch::init(
                "early",
                config.branch_kind,
                config.input_dims.iter().sum(),
                config.hidden_dim,
                config.num_actions,
                config.dropout,
                rng,
            )?],
            _ => config
                .modalities
                .iter()
                .zip(&config.input_dims)
                .map(|(m, &d)| {
                    RuBranch::init(m.clone(), config.branch_kind, d, config.hidden_dim, config.num_actions, config.dropout, rng)
                })
                .collect::<Result<_>>()?,
        };
        let mut model = Self {
            matt: None,
            branches,
            config,
        };
        if model.config.strategy == FusionStrategy::Matt {
            let mut mlp = Mlp::init(&model.config.matt_sizes(), model.config.matt_dropout, rng)?;
            if let Some(last) = mlp.layers.last_mut() {
                last.weights.fill(0.0);
            }
            model.matt = Some(mlp);
        }
        for b in &mut model.branches {
            b.resample_masks_per_step = model.config.resample_masks_per_step;
        }
        Ok(model)
    }

    /// Replaces the per-modality branches with trained ones (matched by modality name).
    pub fn set_branches(&mut self, branches: Vec<RuBranch>) -> Result<()> {
        if self.config.strategy == FusionStrategy::Early {
            return Err(Error::invalid("strategy", "early fusion has no per-modality branches"));
        }
        let mut ordered = Vec::with_capacity(self.branches.len());
        for m in &self.config.modalities {
            let b = branches
                .iter()
                .find(|b| &b.modality == m)
                .ok_or_else(|| Error::Missing(format!("branch for modality `{m}`")))?;
            let cur = self.branches.iter().find(|c| &c.modality == m).expect("constructed per modality");
            if b.input_dim() != cur.input_dim() || b.hidden_dim() != cur.hidden_dim() || b.num_actions() != cur.num_actions() || b.kind != cur.kind {
                return Err(Error::shape(
                    "branch assembly",
                    format!("{m}: in {}, hidden {}, actions {}", cur.input_dim(), cur.hidden_dim(), cur.num_actions()),
                    format!("in {}, hidden {}, actions {}", b.input_dim(), b.hidden_dim(), b.num_actions()),
                ));
            }
            ordered.push(b.clone());
        }
        self.branches = ordered;
        Ok(())
    }

    pub fn spec(&self) -> &TimelineSpec {
        &self.config.timeline
    }

    pub fn num_actions(&self) -> usize {
        self.config.num_actions
    }

    fn branch_inputs(&self, features: &[Matrix]) -> Result<Vec<Matrix>> {
        if features.len() != self.config.modalities.len() {
            return Err(Error::shape("model features", self.config.modalities.len(), features.len()));
        }
        for (i, (f, &d)) in features.iter().zip(&self.config.input_dims).enumerate() {
            if f.cols() != d {
                return Err(Error::shape("model feature dim", format!("{} = {d}", self.config.modalities[i]), f.cols()));
            }
        }
        if self.config.strategy != FusionStrategy::Early {
            return Ok(features.to_vec());
        }
        let rows = features[0].rows();
        if features.iter().any(|f| f.rows() != rows) {
            return Err(Error::shape("early fusion rows", rows, "differing row counts"));
        }
        let cols: usize = features.iter().map(Matrix::cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for f in features {
                data.extend_from_slice(f.row(r));
            }
        }
        Ok(vec![Matrix::new(rows, cols, data)?])
    }

    pub fn forward(&self, features: &[Matrix], mode: UnrollMode, phase: &mut Phase<'_>) -> Result<(PredictionTimeline, FusionTape)> {
        self.forward_with_spec(&self.config.timeline, features, mode, phase)
    }

    /// Forward pass over an explicit timeline (the cells do not depend on it).
    pub fn forward_with_spec(
        &self,
        spec: &TimelineSpec,
        features: &[Matrix],
        mode: UnrollMode,
        phase: &mut Phase<'_>,
    ) -> Result<(PredictionTimeline, FusionTape)> {
        let inputs = self.branch_inputs(features)?;
        let mut outputs = Vec::with_capacity(self.branches.len());
        let mut tapes = Vec::with_capacity(self.branches.len());
        for (branch, x) in self.branches.iter().zip(&inputs) {
            let (o, t) = branch.forward(x, spec, mode, phase)?;
            outputs.push(o);
            tapes.push(t);
        }
        let (timeline, mut tape) = self.fuse(spec, &outputs, phase)?;
        tape.branch_tapes = tapes;
        Ok((timeline, tape))
    }

    /// Combines per-branch scores into fused scores for every anticipation step.
    pub fn fuse(&self, spec: &TimelineSpec, outputs: &[BranchOutput], phase: &mut Phase<'_>) -> Result<(PredictionTimeline, FusionTape)> {
        if outputs.len() != self.branches.len() {
            return Err(Error::shape("fuse branches", self.branches.len(), outputs.len()));
        }
        if let Some(bad) = outputs.iter().find(|o| o.scores.len() != spec.s_ant || o.rolling_states.len() != spec.s_ant) {
            return Err(Error::shape("fuse steps", spec.s_ant, bad.scores.len()));
        }
        let m = outputs.len();
        let mut steps = Vec::with_capacity(spec.s_ant);
        let mut tape = FusionTape {
            branch_tapes: Vec::new(),
            branch_scores: outputs.iter().map(|o| o.scores.clone()).collect(),
            weights: Vec::with_capacity(spec.s_ant),
            matt_tapes: Vec::new(),
        };
        for (k, t) in spec.anticipation_steps().enumerate() {
            let weights = match (&self.config.strategy, &self.matt) {
                (FusionStrategy::Matt, Some(mlp)) => {
                    let mut input = Vec::with_capacity(mlp.input_dim());
                    for o in outputs {
                        input.extend_from_slice(&o.rolling_states[k].h);
                        input.extend_from_slice(&o.rolling_states[k].c);
                    }
                    let (lambda, mtape) = mlp.forward(&input, phase)?;
                    tape.matt_tapes.push(mtape);
                    softmax(&lambda)?
                }
                (FusionStrategy::Matt, None) => return Err(Error::Missing("attention network".into())),
                (FusionStrategy::Late { weights }, _) => weights.clone(),
                (FusionStrategy::Early, _) => vec![1.0],
            };
            if weights.len() != m {
                return Err(Error::shape("fusion weights", m, weights.len()));
            }
            let k_actions = outputs[0].scores[k].len();
            let mut fused = vec![0.0; k_actions];
            for (w, o) in weights.iter().zip(outputs) {
                for (f, s) in fused.iter_mut().zip(&o.scores[k]) {
                    *f += w * s;
                }
            }
            steps.push(StepPrediction {
                step: t,
                anticipation_time: spec.anticipation_time(t)?,
                scores: fused,
                modality_scores: outputs.iter().map(|o| o.scores[k].clone()).collect(),
                weights: weights.clone(),
            });
            tape.weights.push(weights);
        }
        let timeline = PredictionTimeline {
            spec: *spec,
            branches: self.branches.iter().map(|b| b.modality.clone()).collect(),
            steps,
        };
        Ok((timeline, tape))
    }

    /// Accumulates into `grads` the gradient given `d_fused[k]`, the loss gradient
    /// with respect to the fused scores of the `k`-th anticipation step.
    pub fn backward(&self, tape: &FusionTape, d_fused: &[Vec<f64>], grads: &mut FusionModel) -> Result<()> {
        let m = self.branches.len();
        let steps = tape.weights.len();
        if d_fused.len() != steps || tape.branch_tapes.len() != m {
            return Err(Error::shape("fusion backward", steps, d_fused.len()));
        }
        let hd = self.config.hidden_dim;
        let mut d_scores: Vec<Vec<Vec<f64>>> = vec![Vec::with_capacity(steps); m];
        let is_matt = self.config.strategy == FusionStrategy::Matt;
        let mut d_rolling: Vec<Vec<LstmState>> = vec![Vec::with_capacity(steps); m];
        for (k, d) in d_fused.iter().enumerate() {
            let w = &tape.weights[k];
            for b in 0..m {
                d_scores[b].push(d.iter().map(|v| w[b] * v).collect());
            }
            if !is_matt {
                continue;
            }
            let (mlp, gmlp) = match (&self.matt, grads.matt.as_mut()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::Missing("attention network".into())),
            };
            // Through s = Σ w_b s_b and w = softmax(λ).
            let dw: Vec<f64> = (0..m).map(|b| dot(d, &tape.branch_scores[b][k])).collect();
            let mean = dot(w, &dw);
            let d_lambda: Vec<f64> = (0..m).map(|b| w[b] * (dw[b] - mean)).collect();
            let d_input = mlp.backward(&tape.matt_tapes[k], &d_lambda, gmlp)?;
            for (b, chunk) in d_input.chunks(2 * hd).enumerate() {
                d_rolling[b].push(LstmState {
                    h: chunk[..hd].to_vec(),
                    c: chunk[hd..].to_vec(),
                });
            }
        }
        for (b, branch) in self.branches.iter().enumerate() {
            let dr = if is_matt { Some(d_rolling[b].as_slice()) } else { None };
            branch.backward(&tape.branch_tapes[b], &d_scores[b], dr, &mut grads.branches[b])?;
        }
        Ok(())
    }

    /// Anticipation loss of one sample and its gradient with respect to all parameters.
    pub fn loss_and_grad(
        &self,
        features: &[Matrix],
        label: usize,
        mode: UnrollMode,
        phase: &mut Phase<'_>,
    ) -> Result<(f64, FusionModel)> {
        let (timeline, tape) = self.forward(features, mode, phase)?;
        let (loss, d) = anticipation_loss_grad(&timeline.scores(), label)?;
        let mut grads = zeros_like(self);
        self.backward(&tape, &d, &mut grads)?;
        Ok((loss, grads))
    }

    /// Evaluation-mode anticipation forward.
    pub fn predict(&self, features: &[Matrix]) -> Result<PredictionTimeline> {
        Ok(self.forward(features, UnrollMode::Anticipation, &mut Phase::Eval)?.0)
    }

    /// Early recognition over `N` snippets sampled from the action itself:
    /// no encoding stage and one prediction per snippet.
    pub fn early_recognition_forward(&self, features: &[Matrix]) -> Result<PredictionTimeline> {
        let n = features.first().map_or(0, Matrix::rows);
        if n == 0 {
            return Err(Error::invalid("early recognition input", "empty sequence"));
        }
        let spec = TimelineSpec::early_recognition(self.config.timeline.alpha, n)?;
        Ok(self
            .forward_with_spec(&spec, features, UnrollMode::Anticipation, &mut Phase::Eval)?
            .0)
    }
}

impl Parameters for FusionModel {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix)) {
        for b in &self.branches {
            b.visit(&join(prefix, &format!("branch.{}", b.modality)), f);
        }
        if let Some(m) = &self.matt {
            m.visit(&join(prefix, "matt"), f);
        }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Matrix)) {
        for b in &mut self.branches {
            let p = join(prefix, &format!("branch.{}", b.modality));
            b.visit_mut(&p, f);
        }
        if let Some(m) = &mut self.matt {
            m.visit_mut(&join(prefix, "matt"), f);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck;

    pub(crate) fn toy_config(strategy: FusionStrategy) -> ModelConfig {
        ModelConfig {
            modalities: vec!["rgb".into(), "flow".into(), "obj".into()],
            input_dims: vec![8, 8, 6],
            hidden_dim: 16,
            num_actions: 4,
            timeline: TimelineSpec::new(0.25, 2, 3).unwrap(),
            strategy,
            branch_kind: BranchKind::RollingUnrolling,
            dropout: 0.0,
            matt_dropout: 0.0,
            resample_masks_per_step: true,
        }
    }

    fn toy_features(cfg: &ModelConfig, rng: &mut Rng) -> Vec<Matrix> {
        cfg.input_dims
            .iter()
            .map(|&d| Matrix::from_fn(cfg.timeline.total_steps(), d, |_, _| rng.normal()))
            .collect()
    }

    fn outputs(scores: &[Vec<f64>]) -> BranchOutput {
        BranchOutput {
            scores: scores.to_vec(),
            rolling_states: vec![LstmState::zeros(2); scores.len()],
        }
    }

    #[test]
    fn equal_late_weights_average() {
        let mut rng = Rng::new(0);
        let mut cfg = toy_config(FusionStrategy::late_uniform(2));
        cfg.modalities.truncate(2);
        cfg.input_dims.truncate(2);
        cfg.num_actions = 2;
        cfg.hidden_dim = 2;
        cfg.timeline = TimelineSpec::new(0.25, 0, 1).unwrap();
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        let outs = [outputs(&[vec![1.0, 0.0]]), outputs(&[vec![0.0, 1.0]])];
        let (tl, _) = model.fuse(&cfg.timeline, &outs, &mut Phase::Eval).unwrap();
        assert_eq!(tl.steps[0].scores, vec![0.5, 0.5]);
    }

    #[test]
    fn zero_attention_network_weighs_uniformly() {
        let mut rng = Rng::new(1);
        let cfg = toy_config(FusionStrategy::Matt);
        let mut model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        model.matt = Some(Mlp::zeros(&cfg.matt_sizes(), 0.0).unwrap());
        let feats = toy_features(&cfg, &mut rng);
        let tl = model.predict(&feats).unwrap();
        for s in &tl.steps {
            for w in &s.weights {
                assert!((w - 1.0 / 3.0).abs() < 1e-15);
            }
            for c in 0..4 {
                let avg = s.modality_scores.iter().map(|m| m[c]).sum::<f64>() / 3.0;
                assert!((s.scores[c] - avg).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn fresh_matt_model_starts_uniform() {
        let mut rng = Rng::new(2);
        let cfg = toy_config(FusionStrategy::Matt);
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        let tl = model.predict(&toy_features(&cfg, &mut rng)).unwrap();
        assert!(tl.steps.iter().all(|s| s.weights.iter().all(|w| (w - 1.0 / 3.0).abs() < 1e-15)));
    }

    #[test]
    fn single_modality_matt_weight_is_one() {
        let mut rng = Rng::new(3);
        let mut cfg = toy_config(FusionStrategy::Matt);
        cfg.modalities.truncate(1);
        cfg.input_dims.truncate(1);
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        let tl = model.predict(&toy_features(&cfg, &mut rng)).unwrap();
        for s in &tl.steps {
            assert_eq!(s.weights, vec![1.0]);
            assert_eq!(s.scores, s.modality_scores[0]);
        }
    }

    #[test]
    fn step_mismatch_is_rejected() {
        let mut rng = Rng::new(4);
        let mut cfg = toy_config(FusionStrategy::late_uniform(2));
        cfg.modalities.truncate(2);
        cfg.input_dims.truncate(2);
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        let outs = [outputs(&vec![vec![0.0; 4]; 3]), outputs(&vec![vec![0.0; 4]; 2])];
        assert!(model.fuse(&cfg.timeline, &outs, &mut Phase::Eval).is_err());
    }

    #[test]
    fn invalid_configs() {
        let mut rng = Rng::new(5);
        let bad_weights = toy_config(FusionStrategy::Late { weights: vec![0.5, 0.2, 0.2] });
        assert!(FusionModel::new(bad_weights, &mut rng).is_err());
        let mut no_mod = toy_config(FusionStrategy::Matt);
        no_mod.modalities.clear();
        no_mod.input_dims.clear();
        assert!(FusionModel::new(no_mod, &mut rng).is_err());
    }

    #[test]
    fn early_fusion_uses_one_concatenated_branch() {
        let mut rng = Rng::new(6);
        let cfg = toy_config(FusionStrategy::Early);
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        assert_eq!(model.branches.len(), 1);
        assert_eq!(model.branches[0].input_dim(), 22);
        let tl = model.predict(&toy_features(&cfg, &mut rng)).unwrap();
        assert_eq!(tl.steps.len(), 3);
        assert_eq!(tl.steps[0].weights, vec![1.0]);
    }

    fn check(strategy: FusionStrategy, seed: u64) {
        let mut rng = Rng::new(seed);
        let cfg = toy_config(strategy);
        let model = FusionModel::new(cfg.clone(), &mut rng).unwrap();
        let mut model = model;
        // Non-zero output layer so gradients reach every attention layer.
        if let Some(mlp) = &mut model.matt {
            let last = mlp.layers.last_mut().unwrap();
            *last = crate::nn::Linear::init(last.input_dim(), last.output_dim(), &mut rng);
        }
        let feats = toy_features(&cfg, &mut rng);
        let report = gradcheck(
            &model,
            |p: &FusionModel| p.loss_and_grad(&feats, 1, UnrollMode::Anticipation, &mut Phase::Eval),
            1e-4,
        )
        .unwrap();
        assert!(report.passed, "{report}");
    }

    #[test]
    fn matt_model_gradients() {
        check(FusionStrategy::Matt, 20);
    }

    #[test]
    fn late_model_gradients() {
        check(FusionStrategy::late_uniform(3), 21);
    }

    #[test]
    fn early_model_gradients() {
        check(FusionStrategy::Early, 22);
    }
}
