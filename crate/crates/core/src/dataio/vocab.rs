use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::SampleRecord;
use crate::error::{Error, Result};

/// Verb, noun and action classes. Every action is a distinct `[verb, noun]` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub verbs: Vec<String>,
    pub nouns: Vec<String>,
    pub actions: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub many_shot_verbs: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub many_shot_nouns: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub many_shot_actions: Option<Vec<usize>>,
}

impl Vocabulary {
    pub fn new(verbs: Vec<String>, nouns: Vec<String>, actions: Vec<[usize; 2]>) -> Result<Self> {
        let v = Self {
            verbs,
            nouns,
            actions,
            many_shot_verbs: None,
            many_shot_nouns: None,
            many_shot_actions: None,
        };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (a, &[v, n]) in self.actions.iter().enumerate() {
            if v >= self.verbs.len() || n >= self.nouns.len() {
                return Err(Error::invalid("vocabulary", format!("action {a} maps to ({v}, {n}) out of range")));
            }
            if !seen.insert((v, n)) {
                return Err(Error::invalid("vocabulary", format!("action {a} duplicates pair ({v}, {n})")));
            }
        }
        let check = |name: &str, set: &Option<Vec<usize>>, len: usize| -> Result<()> {
            match set {
                Some(ids) if ids.iter().any(|&i| i >= len) => {
                    Err(Error::invalid(name, format!("id out of range (< {len} expected)")))
                }
                _ => Ok(()),
            }
        };
        check("many_shot_verbs", &self.many_shot_verbs, self.verbs.len())?;
        check("many_shot_nouns", &self.many_shot_nouns, self.nouns.len())?;
        check("many_shot_actions", &self.many_shot_actions, self.actions.len())
    }

    pub fn num_actions(&self) -> usize {
        self.actions.len()
    }

    pub fn action_id(&self, verb: usize, noun: usize) -> Option<usize> {
        self.actions.iter().position(|&p| p == [verb, noun])
    }

    /// Fills the many-shot lists with classes having at least `threshold`
    /// training instances (lists already present are kept).
    pub fn fill_many_shot(&mut self, training: &[SampleRecord], threshold: usize) {
        let count = |key: fn(&SampleRecord) -> usize| -> Vec<usize> {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for r in training {
                *counts.entry(key(r)).or_default() += 1;
            }
            counts.into_iter().filter(|&(_, c)| c >= threshold).map(|(k, _)| k).collect()
        };
        self.many_shot_verbs.get_or_insert_with(|| count(|r| r.verb_id));
        self.many_shot_nouns.get_or_insert_with(|| count(|r| r.noun_id));
        self.many_shot_actions.get_or_insert_with(|| count(|r| r.action_id));
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let v: Self = serde_json::from_str(&text)?;
        v.validate()?;
        Ok(v)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, serde_json::to_string_pretty(self)? + "\n").map_err(|e| Error::io(path, e))
    }
}
