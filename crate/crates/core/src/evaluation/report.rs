use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{mean_topk_recall, min_observation_ratio, time_to_action, topk_hit, Mor, Recall};
use crate::dataio::{with_suffix, SampleRecord, Vocabulary};
use crate::error::{Error, Result};
use crate::model::{marginalize, PredictionTimeline};
use crate::tensor::softmax;

/// One evaluated sample: ground truth and the predicted timeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub sample_id: String,
    pub verb: usize,
    pub noun: usize,
    pub action: usize,
    pub timeline: PredictionTimeline,
}

impl EvalRecord {
    pub fn new(record: &SampleRecord, timeline: PredictionTimeline) -> Self {
        Self {
            sample_id: record.video_id.clone(),
            verb: record.verb_id,
            noun: record.noun_id,
            action: record.action_id,
            timeline,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Verb,
    Noun,
    Action,
}

impl Target {
    pub const ALL: [Target; 3] = [Target::Verb, Target::Noun, Target::Action];

    pub fn name(self) -> &'static str {
        match self {
            Target::Verb => "verb",
            Target::Noun => "noun",
            Target::Action => "action",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Triple<T> {
    pub verb: T,
    pub noun: T,
    pub action: T,
}

impl<T: Copy> Triple<T> {
    pub fn get(&self, target: Target) -> T {
        match target {
            Target::Verb => self.verb,
            Target::Noun => self.noun,
            Target::Action => self.action,
        }
    }

    fn map<U>(&self, f: impl Fn(T) -> U) -> Triple<U> {
        Triple {
            verb: f(self.verb),
            noun: f(self.noun),
            action: f(self.action),
        }
    }
}

impl<T> Triple<T> {
    fn from_fn(mut f: impl FnMut(Target) -> Result<T>) -> Result<Self> {
        Ok(Self {
            verb: f(Target::Verb)?,
            noun: f(Target::Noun)?,
            action: f(Target::Action)?,
        })
    }
}

/// Per-step scores of a record for verbs, nouns and actions. Action scores are
/// the raw fused scores; verb and noun scores are marginals of their softmax.
#[derive(Debug, Clone)]
pub struct TargetScores {
    pub truth: [usize; 3],
    pub anticipation_times: Vec<f64>,
    /// `steps[i][target]`.
    pub steps: Vec<[Vec<f64>; 3]>,
}

impl TargetScores {
    pub fn new(record: &EvalRecord, vocab: &Vocabulary) -> Result<Self> {
        let mut steps = Vec::with_capacity(record.timeline.steps.len());
        for s in &record.timeline.steps {
            let probs = softmax(&s.scores)?;
            let (verbs, nouns) = marginalize(&probs, vocab)?;
            steps.push([verbs, nouns, s.scores.clone()]);
        }
        Ok(Self {
            truth: [record.verb, record.noun, record.action],
            anticipation_times: record.timeline.steps.iter().map(|s| s.anticipation_time).collect(),
            steps,
        })
    }

    pub fn scores(&self, target: Target, i: usize) -> &[f64] {
        &self.steps[i][target.index()]
    }

    pub fn truth(&self, target: Target) -> usize {
        self.truth[target.index()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportKind {
    Anticipation,
    EarlyRecognition,
}

/// Accuracies of one prediction step, in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub step: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anticipation_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observation_ratio: Option<f64>,
    pub top1: Triple<f64>,
    pub top5: Triple<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallSummary {
    pub anticipation_time: f64,
    pub k: usize,
    /// `None` when the class set is empty or none of its classes occurs.
    pub recall: Triple<Option<Recall>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MorSummary {
    /// Mean minimum observation ratio in percent; never-correct samples count as 100.
    pub mean: Triple<f64>,
    pub never_correct: Triple<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub kind: ReportKind,
    pub samples: usize,
    pub columns: Vec<Column>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_top5_recall: Option<RecallSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_tta5: Option<Triple<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mor: Option<MorSummary>,
}

fn percent(hits: usize, n: usize) -> f64 {
    100.0 * hits as f64 / n as f64
}

/// All metrics of a homogeneous record set.
///
/// Top-5 is clipped to the class count of a target. Mean recall is computed at
/// the step nearest to one second before the action, over the vocabulary's
/// many-shot classes when present and all classes otherwise.
pub fn aggregate(records: &[EvalRecord], vocab: &Vocabulary, kind: ReportKind) -> Result<MetricsReport> {
    let first = records.first().ok_or_else(|| Error::invalid("records", "empty record set"))?;
    let spec = first.timeline.spec;
    let steps: Vec<usize> = first.timeline.steps.iter().map(|s| s.step).collect();
    if steps.is_empty() {
        return Err(Error::invalid("timeline", "empty"));
    }
    for r in records {
        let own: Vec<usize> = r.timeline.steps.iter().map(|s| s.step).collect();
        if r.timeline.spec != spec || own != steps {
            return Err(Error::invalid("records", format!("timeline of `{}` differs from the first record", r.sample_id)));
        }
    }
    if kind == ReportKind::EarlyRecognition && spec.s_enc != 0 {
        return Err(Error::invalid("records", "early recognition timelines have no encoding steps"));
    }
    let scored = records.iter().map(|r| TargetScores::new(r, vocab)).collect::<Result<Vec<_>>>()?;
    let n = records.len();
    let classes = Triple {
        verb: vocab.verbs.len(),
        noun: vocab.nouns.len(),
        action: vocab.actions.len(),
    };
    let top = |target: Target, k: usize| k.min(classes.get(target));

    let mut columns = Vec::with_capacity(steps.len());
    for (i, &t) in steps.iter().enumerate() {
        let acc = |k: usize| {
            Triple::from_fn(|target| {
                let mut hits = 0;
                for s in &scored {
                    hits += usize::from(topk_hit(s.scores(target, i), s.truth(target), top(target, k))?);
                }
                Ok(percent(hits, n))
            })
        };
        columns.push(Column {
            step: t,
            anticipation_time: (kind == ReportKind::Anticipation).then(|| spec.anticipation_time(t)).transpose()?,
            observation_ratio: (kind == ReportKind::EarlyRecognition).then(|| 100.0 * spec.observation_ratio(t)),
            top1: acc(1)?,
            top5: acc(5)?,
        });
    }

    let mut report = MetricsReport {
        kind,
        samples: n,
        columns,
        mean_top5_recall: None,
        mean_tta5: None,
        mor: None,
    };
    match kind {
        ReportKind::Anticipation => {
            let t = spec.step_nearest_anticipation_time(1.0);
            let i = steps.iter().position(|&s| s == t).ok_or_else(|| Error::Missing(format!("step {t}")))?;
            let recall = Triple::from_fn(|target| {
                let items: Vec<(&[f64], usize)> = scored.iter().map(|s| (s.scores(target, i), s.truth(target))).collect();
                let many_shot = match target {
                    Target::Verb => vocab.many_shot_verbs.clone(),
                    Target::Noun => vocab.many_shot_nouns.clone(),
                    Target::Action => vocab.many_shot_actions.clone(),
                };
                let set = many_shot.unwrap_or_else(|| (0..classes.get(target)).collect());
                if set.is_empty() {
                    return Ok(None);
                }
                match mean_topk_recall(&items, top(target, 5), &set) {
                    Ok(r) => Ok(Some(r)),
                    Err(Error::Missing(_)) => Ok(None),
                    Err(e) => Err(e),
                }
            })?;
            report.mean_top5_recall = Some(RecallSummary {
                anticipation_time: spec.anticipation_time(t)?,
                k: 5,
                recall,
            });
            report.mean_tta5 = Some(Triple::from_fn(|target| {
                let mut sum = 0.0;
                for s in &scored {
                    let timeline: Vec<(f64, &[f64])> = (0..steps.len())
                        .map(|i| (s.anticipation_times[i], s.scores(target, i)))
                        .collect();
                    sum += time_to_action(&timeline, s.truth(target), top(target, 5))?;
                }
                Ok(sum / n as f64)
            })?);
        }
        ReportKind::EarlyRecognition => {
            let outcomes = Triple::from_fn(|target| {
                scored
                    .iter()
                    .map(|s| {
                        let timeline: Vec<&[f64]> = (0..steps.len()).map(|i| s.scores(target, i)).collect();
                        min_observation_ratio(&timeline, s.truth(target))
                    })
                    .collect::<Result<Vec<Mor>>>()
            })?;
            let mean = Triple::from_fn(|target| {
                let o = match target {
                    Target::Verb => &outcomes.verb,
                    Target::Noun => &outcomes.noun,
                    Target::Action => &outcomes.action,
                };
                Ok(o.iter().map(|m| m.percent()).sum::<f64>() / n as f64)
            })?;
            let never = |o: &Vec<Mor>| o.iter().filter(|m| **m == Mor::Never).count();
            report.mor = Some(MorSummary {
                mean,
                never_correct: Triple {
                    verb: never(&outcomes.verb),
                    noun: never(&outcomes.noun),
                    action: never(&outcomes.action),
                },
            });
        }
    }
    Ok(report)
}

fn round2(v: f64) -> f64 {
    (v * 100.0).round() / 100.0
}

impl MetricsReport {
    /// Copy with every percentage and time rounded to two decimals.
    pub fn rounded(&self) -> Self {
        let mut out = self.clone();
        for c in &mut out.columns {
            c.top1 = c.top1.map(round2);
            c.top5 = c.top5.map(round2);
            c.observation_ratio = c.observation_ratio.map(round2);
        }
        if let Some(r) = &mut out.mean_top5_recall {
            r.recall = r.recall.map(|x| {
                x.map(|x| Recall {
                    percent: round2(x.percent),
                    ..x
                })
            });
        }
        out.mean_tta5 = out.mean_tta5.map(|t| t.map(round2));
        if let Some(m) = &mut out.mor {
            m.mean = m.mean.map(round2);
        }
        out
    }

    pub fn column(&self, step: usize) -> Option<&Column> {
        self.columns.iter().find(|c| c.step == step)
    }

    /// Column nearest to the given anticipation time.
    pub fn at_anticipation_time(&self, tau: f64) -> Option<&Column> {
        self.columns
            .iter()
            .filter(|c| c.anticipation_time.is_some())
            .min_by(|a, b| {
                let da = (a.anticipation_time.unwrap_or(f64::INFINITY) - tau).abs();
                let db = (b.anticipation_time.unwrap_or(f64::INFINITY) - tau).abs();
                da.total_cmp(&db)
            })
    }

    /// One row per (target, k), one column per prediction step.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric");
        for c in &self.columns {
            match (c.anticipation_time, c.observation_ratio) {
                (Some(tau), _) => write!(out, ",tau_{tau:.2}").unwrap(),
                (_, Some(r)) => write!(out, ",obs_{r:.2}%").unwrap(),
                _ => write!(out, ",step_{}", c.step).unwrap(),
            }
        }
        out.push('\n');
        for target in Target::ALL {
            for (k, pick) in [(1, (|c: &Column| c.top1) as fn(&Column) -> Triple<f64>), (5, |c: &Column| c.top5)] {
                write!(out, "{}_top{k}", target.name()).unwrap();
                for c in &self.columns {
                    write!(out, ",{:.2}", pick(c).get(target)).unwrap();
                }
                out.push('\n');
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rounded())? + "\n")
    }

    /// Writes `<stem>.csv` and `<stem>.json` next to each other.
    pub fn save(&self, stem: impl AsRef<Path>) -> Result<()> {
        let stem = stem.as_ref();
        let csv = with_suffix(stem, "csv");
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let json = with_suffix(stem, "json");
        fs::write(&json, self.to_json()?).map_err(|e| Error::io(&json, e))
    }
}

/// Prediction dump: one JSON record per line.
pub fn write_predictions(path: impl AsRef<Path>, records: &[EvalRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: impl AsRef<Path>) -> Result<Vec<EvalRecord>> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}
