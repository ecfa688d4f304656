use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Whether `truth` is among the `k` highest `scores`.
pub fn topk_hit(scores: &[f64], truth: usize, k: usize) -> Result<bool> {
    if k == 0 || k > scores.len() {
        return Err(Error::invalid("k", format!("{k} outside 1..={}", scores.len())));
    }
    let Some(&target) = scores.get(truth) else {
        return Err(Error::invalid("truth", format!("class {truth} outside 0..{}", scores.len())));
    };
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let rank = scores
        .iter()
        .enumerate()
        .filter(|&(c, &s)| s > target || (s == target && c < truth))
        .count();
    Ok(rank < k)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recall {
    /// Unweighted mean of per-class recall, in percent.
    pub percent: f64,
    pub classes: usize,
    /// Requested classes without any instance.
    pub excluded: usize,
}

/// Mean over `classes` of the fraction of samples of each class whose truth is in
/// the Top-`k`. Items are `(scores, truth)` pairs.
pub fn mean_topk_recall(items: &[(&[f64], usize)], k: usize, classes: &[usize]) -> Result<Recall> {
    if items.is_empty() {
        return Err(Error::invalid("records", "empty record set"));
    }
    if classes.is_empty() {
        return Err(Error::invalid("class set", "empty"));
    }
    let mut sorted = classes.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut sum = 0.0;
    let mut used = 0;
    for &c in &sorted {
        let mut count = 0usize;
        let mut hits = 0usize;
        for &(scores, truth) in items {
            if truth == c {
                count += 1;
                hits += usize::from(topk_hit(scores, truth, k)?);
            }
        }
        if count > 0 {
            sum += hits as f64 / count as f64;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Missing("test instances of any requested class".into()));
    }
    Ok(Recall {
        percent: 100.0 * sum / used as f64,
        classes: used,
        excluded: sorted.len() - used,
    })
}

/// Largest anticipation time at which `truth` is in the Top-`k`; `0` if never.
/// `steps` pairs each anticipation time with the scores emitted at it.
pub fn time_to_action(steps: &[(f64, &[f64])], truth: usize, k: usize) -> Result<f64> {
    if steps.is_empty() {
        return Err(Error::invalid("timeline", "empty"));
    }
    let mut best = 0.0f64;
    for &(tau, scores) in steps {
        if topk_hit(scores, truth, k)? {
            best = best.max(tau);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mor {
    /// Smallest observation ratio with a correct Top-1 prediction, in percent.
    Hit(f64),
    Never,
}

impl Mor {
    pub fn percent(self) -> f64 {
        match self {
            Mor::Hit(p) => p,
            Mor::Never => 100.0,
        }
    }
}

/// Minimum observation ratio over an early-recognition timeline whose
/// `i`-th entry (0-based) was produced after observing `(i + 1) / N` of the action.
pub fn min_observation_ratio(steps: &[&[f64]], truth: usize) -> Result<Mor> {
    if steps.is_empty() {
        return Err(Error::invalid("timeline", "empty"));
    }
    let n = steps.len();
    for (i, scores) in steps.iter().enumerate() {
        if topk_hit(scores, truth, 1)? {
            return Ok(Mor::Hit(100.0 * (i + 1) as f64 / n as f64));
        }
    }
    Ok(Mor::Never)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn topk_examples() {
        assert!(topk_hit(&[0.1, 0.9, 0.3], 1, 1).unwrap());
        assert!(!topk_hit(&[0.5, 0.9, 0.3, 0.1], 3, 3).unwrap());
        assert!(topk_hit(&[0.2; 5], 0, 1).unwrap());
        assert!(!topk_hit(&[0.2; 5], 1, 1).unwrap());
        assert!(topk_hit(&[0.2; 5], 4, 5).unwrap());
        assert!(topk_hit(&[1.0, 2.0], 0, 3).is_err());
        assert!(topk_hit(&[1.0, 2.0], 0, 0).is_err());
        assert!(topk_hit(&[1.0, 2.0], 2, 1).is_err());
        assert!(topk_hit(&[1.0, f64::NAN], 0, 1).is_err());
    }

    #[test]
    fn recall_examples() {
        let a_hit = [0.0, 1.0];
        let a_miss = [1.0, 0.0];
        let b_hit = [0.0, 1.0, 2.0];
        let items: Vec<(&[f64], usize)> = vec![(&a_hit[..], 1), (&a_miss[..], 1), (&[5.0, 0.0][..], 0), (&[3.0, 1.0][..], 0)];
        let r = mean_topk_recall(&items, 1, &[0, 1]).unwrap();
        assert_eq!(r.percent, 75.0);
        assert_eq!((r.classes, r.excluded), (2, 0));
        let r = mean_topk_recall(&items, 1, &[0]).unwrap();
        assert_eq!(r.percent, 100.0);
        let items: Vec<(&[f64], usize)> = vec![(&b_hit[..], 2)];
        let r = mean_topk_recall(&items, 1, &[0, 1, 2]).unwrap();
        assert_eq!((r.percent, r.classes, r.excluded), (100.0, 1, 2));
        assert!(mean_topk_recall(&[], 1, &[0]).is_err());
        assert!(mean_topk_recall(&items, 1, &[]).is_err());
        assert!(mean_topk_recall(&items, 1, &[0]).is_err());
    }

    #[test]
    fn random_scores_recall_is_k_over_classes() {
        let mut rng = crate::tensor::Rng::new(13);
        let k_classes = 20;
        let data: Vec<(Vec<f64>, usize)> = (0..20_000)
            .map(|_| ((0..k_classes).map(|_| rng.uniform()).collect(), rng.below(k_classes)))
            .collect();
        let items: Vec<(&[f64], usize)> = data.iter().map(|(s, t)| (s.as_slice(), *t)).collect();
        let classes: Vec<usize> = (0..k_classes).collect();
        let r = mean_topk_recall(&items, 5, &classes).unwrap();
        assert!((r.percent - 500.0 / k_classes as f64).abs() < 1.5, "{}", r.percent);
    }

    #[test]
    fn tta_examples() {
        let hit = [0.0, 1.0];
        let miss = [1.0, 0.0];
        let taus = [2.0, 1.75, 1.5, 1.25, 1.0, 0.75, 0.5, 0.25];
        let only = |good: &[f64]| -> Vec<(f64, &[f64])> {
            taus.iter().map(|&t| (t, if good.contains(&t) { &hit[..] } else { &miss[..] })).collect()
        };
        assert_eq!(time_to_action(&only(&[1.75, 0.5]), 1, 1).unwrap(), 1.75);
        assert_eq!(time_to_action(&only(&[]), 1, 1).unwrap(), 0.0);
        assert_eq!(time_to_action(&only(&taus), 1, 1).unwrap(), 2.0);
        assert!(time_to_action(&[], 1, 1).is_err());
    }

    #[test]
    fn mor_examples() {
        let hit = [0.0, 1.0];
        let miss = [1.0, 0.0];
        let mut steps: Vec<&[f64]> = vec![&miss; 8];
        steps[2] = &hit;
        steps[6] = &hit;
        assert_eq!(min_observation_ratio(&steps, 1).unwrap(), Mor::Hit(37.5));
        let mut steps: Vec<&[f64]> = vec![&miss; 8];
        steps[7] = &hit;
        assert_eq!(min_observation_ratio(&steps, 1).unwrap(), Mor::Hit(100.0));
        let never = min_observation_ratio(&[&miss[..]; 8], 1).unwrap();
        assert_eq!(never, Mor::Never);
        assert_eq!(never.percent(), 100.0);
        assert!(min_observation_ratio(&[], 0).is_err());
    }

    fn scores_and_truth() -> impl Strategy<Value = (Vec<f64>, usize)> {
        prop::collection::vec(-5.0f64..5.0, 2..12).prop_flat_map(|s| {
            let n = s.len();
            (Just(s), 0..n)
        })
    }

    proptest! {
        #[test]
        fn topk_is_monotone_in_k((scores, truth) in scores_and_truth()) {
            for k in 1..scores.len() {
                if topk_hit(&scores, truth, k).unwrap() {
                    prop_assert!(topk_hit(&scores, truth, k + 1).unwrap());
                }
            }
            prop_assert!(topk_hit(&scores, truth, scores.len()).unwrap());
        }

        #[test]
        fn topk_is_invariant_to_increasing_maps((scores, truth) in scores_and_truth(), k in 1usize..12) {
            let k = k.min(scores.len());
            let mapped: Vec<f64> = scores.iter().map(|s| 3.0 * s.powi(3) + s + 7.0).collect();
            prop_assert_eq!(topk_hit(&scores, truth, k).unwrap(), topk_hit(&mapped, truth, k).unwrap());
        }

        #[test]
        fn tta_is_monotone_in_k(steps in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 6), 1..9), truth in 0usize..6) {
            let n = steps.len();
            let timeline: Vec<(f64, &[f64])> = steps.iter().enumerate().map(|(i, s)| (0.25 * (n - i) as f64, s.as_slice())).collect();
            let mut prev = 0.0;
            for k in 1..=6 {
                let t = time_to_action(&timeline, truth, k).unwrap();
                prop_assert!(t >= prev);
                prop_assert!((0.0..=0.25 * n as f64).contains(&t));
                prev = t;
            }
        }
    }
}
