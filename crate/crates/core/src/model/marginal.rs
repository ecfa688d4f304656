use crate::dataio::Vocabulary;
use crate::error::{Error, Result};

/// Verb and noun distributions obtained by summing action probabilities that
/// share the same verb (noun).
pub fn marginalize(action_probs: &[f64], vocab: &Vocabulary) -> Result<(Vec<f64>, Vec<f64>)> {
    if action_probs.len() != vocab.actions.len() {
        return Err(Error::invalid(
            "action probabilities",
            format!("{} classes but the vocabulary maps {}", action_probs.len(), vocab.actions.len()),
        ));
    }
    let mut verbs = vec![0.0; vocab.verbs.len()];
    let mut nouns = vec![0.0; vocab.nouns.len()];
    for (a, &p) in action_probs.iter().enumerate() {
        let [v, n] = vocab.actions[a];
        *verbs
            .get_mut(v)
            .ok_or_else(|| Error::invalid("vocabulary", format!("action {a} maps to unknown verb {v}")))? += p;
        *nouns
            .get_mut(n)
            .ok_or_else(|| Error::invalid("vocabulary", format!("action {a} maps to unknown noun {n}")))? += p;
    }
    Ok((verbs, nouns))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vocab(actions: Vec<[usize; 2]>, verbs: usize, nouns: usize) -> Vocabulary {
        Vocabulary::new(
            (0..verbs).map(|i| format!("v{i}")).collect(),
            (0..nouns).map(|i| format!("n{i}")).collect(),
            actions,
        )
        .unwrap()
    }

    #[test]
    fn direct_sums() {
        let v = vocab(vec![[0, 0], [0, 1], [1, 0]], 2, 2);
        let (verbs, nouns) = marginalize(&[0.2, 0.3, 0.5], &v).unwrap();
        assert!((verbs[0] - 0.5).abs() < 1e-15 && (verbs[1] - 0.5).abs() < 1e-15);
        assert!((nouns[0] - 0.7).abs() < 1e-15 && (nouns[1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn one_hot_stays_one_hot() {
        let v = vocab(vec![[0, 0], [0, 1], [1, 0], [1, 1]], 2, 2);
        let (verbs, nouns) = marginalize(&[0.0, 0.0, 0.0, 1.0], &v).unwrap();
        assert_eq!(verbs, vec![0.0, 1.0]);
        assert_eq!(nouns, vec![0.0, 1.0]);
    }

    #[test]
    fn uniform_gives_share_of_actions() {
        let v = vocab(vec![[0, 0], [0, 1], [0, 2], [1, 0], [2, 2]], 3, 3);
        let (verbs, _) = marginalize(&[0.2; 5], &v).unwrap();
        assert!((verbs[0] - 3.0 / 5.0).abs() < 1e-15);
        assert!((verbs[1] - 1.0 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn unmapped_action_is_an_error() {
        let v = vocab(vec![[0, 0], [1, 1]], 2, 2);
        assert!(marginalize(&[0.2, 0.3, 0.5], &v).is_err());
    }

    proptest! {
        #[test]
        fn marginals_are_distributions(raw in proptest::collection::vec(0.0f64..1.0, 12)) {
            let actions: Vec<[usize; 2]> = (0..12).map(|a| [a % 3, a / 3]).collect();
            let v = vocab(actions, 3, 4);
            let total: f64 = raw.iter().sum::<f64>() + 1e-3;
            let probs: Vec<f64> = raw.iter().map(|p| (p + 1e-3 / 12.0) / total).collect();
            let (verbs, nouns) = marginalize(&probs, &v).unwrap();
            prop_assert!((verbs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!((nouns.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
