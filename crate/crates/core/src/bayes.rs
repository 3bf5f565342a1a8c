//! Counting Naive Bayes over categorical metadata features.
//!
//! Training adds one to the count of each present feature value in the
//! example's class. Scoring works in log space:
//!
//! ```text
//! score(c) = log prior(c)
//!          + sum over entries (k, v) with v in vocabulary(k) of
//!            log[(count(c,k,v) + alpha) / (total(c,k) + alpha * |vocabulary(k)|)]
//! ```
//!
//! Values never seen in training for their kind are skipped for every class.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureKind, FeatureVector, KindSet};
use crate::tweet::CountryLabel;

pub const MODEL_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_ALPHA: f64 = 1.0;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("smoothing constant must be finite and >= 0, got {0}")]
    InvalidAlpha(f64),
    #[error("no feature kinds enabled")]
    NoKindsEnabled,
    #[error("cannot merge models trained with different settings")]
    IncompatibleMerge,
}

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt model: {0}")]
    CorruptModel(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct KindCounts {
    pub total: u64,
    pub values: BTreeMap<String, u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub examples: u64,
    #[serde(default)]
    pub kinds: BTreeMap<FeatureKind, KindCounts>,
}

/// A trained model. Immutable; share it freely across threads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    schema_version: u32,
    alpha: f64,
    uniform_priors: bool,
    enabled_kinds: KindSet,
    total_examples: u64,
    classes: BTreeMap<CountryLabel, ClassCounts>,
    vocabulary: BTreeMap<FeatureKind, BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    metadata: Option<serde_json::Value>,
}

/// Accumulates counts. Training is single-writer; shard builders can be
/// merged afterwards.
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    alpha: f64,
    enabled: KindSet,
    classes: BTreeMap<CountryLabel, ClassCounts>,
    ignored_entries: u64,
}

impl ModelBuilder {
    pub fn new(alpha: f64, enabled: KindSet) -> Result<Self, TrainError> {
        if !alpha.is_finite() || alpha < 0.0 {
            return Err(TrainError::InvalidAlpha(alpha));
        }
        if enabled.is_empty() {
            return Err(TrainError::NoKindsEnabled);
        }
        Ok(Self {
            alpha,
            enabled,
            classes: BTreeMap::new(),
            ignored_entries: 0,
        })
    }

    /// Counts one example. Entries of kinds outside the enabled set are
    /// skipped and tallied in [`ModelBuilder::ignored_entries`].
    pub fn add(&mut self, fv: &FeatureVector, label: &CountryLabel) {
        let class = self.classes.entry(label.clone()).or_default();
        class.examples += 1;
        for (kind, value) in fv.iter() {
            if !self.enabled.contains(kind) {
                self.ignored_entries += 1;
                continue;
            }
            let counts = class.kinds.entry(kind).or_default();
            counts.total += 1;
            *counts.values.entry(value.to_string()).or_insert(0) += 1;
        }
    }

    pub fn ignored_entries(&self) -> u64 {
        self.ignored_entries
    }

    pub fn merge(&mut self, other: ModelBuilder) -> Result<(), TrainError> {
        if other.alpha.to_bits() != self.alpha.to_bits() || other.enabled != self.enabled {
            return Err(TrainError::IncompatibleMerge);
        }
        self.ignored_entries += other.ignored_entries;
        merge_classes(&mut self.classes, other.classes);
        Ok(())
    }

    pub fn build(self) -> Result<NaiveBayesModel, TrainError> {
        if self.classes.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        Ok(NaiveBayesModel::from_counts(
            self.alpha,
            self.enabled,
            self.classes,
        ))
    }
}

fn merge_classes(
    into: &mut BTreeMap<CountryLabel, ClassCounts>,
    from: BTreeMap<CountryLabel, ClassCounts>,
) {
    for (label, counts) in from {
        let class = into.entry(label).or_default();
        class.examples += counts.examples;
        for (kind, kc) in counts.kinds {
            let target = class.kinds.entry(kind).or_default();
            target.total += kc.total;
            for (value, n) in kc.values {
                *target.values.entry(value).or_insert(0) += n;
            }
        }
    }
}

/// Trains a model over `(features, label)` pairs.
pub fn train<'a, I>(
    examples: I,
    alpha: f64,
    enabled: KindSet,
) -> Result<NaiveBayesModel, TrainError>
where
    I: IntoIterator<Item = (&'a FeatureVector, &'a CountryLabel)>,
{
    let mut builder = ModelBuilder::new(alpha, enabled)?;
    for (fv, label) in examples {
        builder.add(fv, label);
    }
    builder.build()
}

impl NaiveBayesModel {
    fn from_counts(
        alpha: f64,
        enabled_kinds: KindSet,
        classes: BTreeMap<CountryLabel, ClassCounts>,
    ) -> Self {
        let mut vocabulary: BTreeMap<FeatureKind, BTreeSet<String>> = BTreeMap::new();
        for class in classes.values() {
            for (kind, kc) in &class.kinds {
                let vocab = vocabulary.entry(*kind).or_default();
                for (value, n) in &kc.values {
                    if *n > 0 {
                        vocab.insert(value.clone());
                    }
                }
            }
        }
        Self {
            schema_version: MODEL_SCHEMA_VERSION,
            alpha,
            uniform_priors: false,
            enabled_kinds,
            total_examples: classes.values().map(|c| c.examples).sum(),
            classes,
            vocabulary,
            metadata: None,
        }
    }

    /// Drops class priors from scoring (every class gets log(1/|classes|)).
    pub fn with_uniform_priors(mut self, uniform: bool) -> Self {
        self.uniform_priors = uniform;
        self
    }

    /// Free-form JSON stored alongside the counts, e.g. the run configuration.
    pub fn with_metadata(mut self, metadata: serde_json::Value) -> Self {
        self.metadata = Some(metadata);
        self
    }

    /// Combines two models' counts. Settings must match.
    pub fn merge(&self, other: &NaiveBayesModel) -> Result<NaiveBayesModel, TrainError> {
        if self.alpha.to_bits() != other.alpha.to_bits()
            || self.enabled_kinds != other.enabled_kinds
            || self.uniform_priors != other.uniform_priors
        {
            return Err(TrainError::IncompatibleMerge);
        }
        let mut classes = self.classes.clone();
        merge_classes(&mut classes, other.classes.clone());
        Ok(Self::from_counts(self.alpha, self.enabled_kinds, classes)
            .with_uniform_priors(self.uniform_priors))
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn uniform_priors(&self) -> bool {
        self.uniform_priors
    }

    pub fn enabled_kinds(&self) -> KindSet {
        self.enabled_kinds
    }

    pub fn total_examples(&self) -> u64 {
        self.total_examples
    }

    pub fn metadata(&self) -> Option<&serde_json::Value> {
        self.metadata.as_ref()
    }

    pub fn classes(&self) -> impl Iterator<Item = &CountryLabel> {
        self.classes.keys()
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn class_count(&self, class: &CountryLabel) -> u64 {
        self.classes.get(class).map_or(0, |c| c.examples)
    }

    pub fn kind_total(&self, class: &CountryLabel, kind: FeatureKind) -> u64 {
        self.classes
            .get(class)
            .and_then(|c| c.kinds.get(&kind))
            .map_or(0, |k| k.total)
    }

    pub fn value_count(&self, class: &CountryLabel, kind: FeatureKind, value: &str) -> u64 {
        self.classes
            .get(class)
            .and_then(|c| c.kinds.get(&kind))
            .and_then(|k| k.values.get(value))
            .copied()
            .unwrap_or(0)
    }

    pub fn vocabulary_size(&self, kind: FeatureKind) -> usize {
        self.vocabulary.get(&kind).map_or(0, BTreeSet::len)
    }

    pub fn in_vocabulary(&self, kind: FeatureKind, value: &str) -> bool {
        self.vocabulary
            .get(&kind)
            .is_some_and(|v| v.contains(value))
    }

    /// Entries of `fv` that take part in scoring.
    pub fn scored_entries<'a>(
        &'a self,
        fv: &'a FeatureVector,
    ) -> impl Iterator<Item = (FeatureKind, &'a str)> + 'a {
        fv.iter()
            .filter(move |(k, v)| self.enabled_kinds.contains(*k) && self.in_vocabulary(*k, v))
    }

    fn log_prior(&self, counts: &ClassCounts) -> f64 {
        if self.uniform_priors {
            -(self.classes.len() as f64).ln()
        } else {
            (counts.examples as f64 / self.total_examples as f64).ln()
        }
    }

    fn log_likelihood(&self, counts: &ClassCounts, kind: FeatureKind, value: &str) -> f64 {
        let kc = counts.kinds.get(&kind);
        let count = kc.and_then(|k| k.values.get(value)).copied().unwrap_or(0) as f64;
        let total = kc.map_or(0, |k| k.total) as f64;
        let numerator = count + self.alpha;
        if numerator == 0.0 {
            return f64::NEG_INFINITY;
        }
        let denominator = total + self.alpha * self.vocabulary_size(kind) as f64;
        (numerator / denominator).ln()
    }

    /// Log-scores for every class, best first. Ties (equal up to
    /// [`TIE_TOLERANCE`]) are ordered by country code. If every class scores negative infinity (possible only
    /// with `alpha == 0`), the prior-only ranking is returned instead.
    pub fn log_posterior(&self, fv: &FeatureVector) -> Vec<(CountryLabel, f64)> {
        let entries: Vec<(FeatureKind, &str)> = self.scored_entries(fv).collect();
        let mut scores: Vec<(CountryLabel, f64)> = self
            .classes
            .iter()
            .map(|(label, counts)| {
                let score = entries.iter().fold(self.log_prior(counts), |acc, (k, v)| {
                    acc + self.log_likelihood(counts, *k, v)
                });
                (label.clone(), score)
            })
            .collect();
        if scores.iter().all(|(_, s)| *s == f64::NEG_INFINITY) {
            for (label, score) in &mut scores {
                *score = self.log_prior(&self.classes[label]);
            }
        }
        rank(&mut scores);
        scores
    }

    pub fn classify(&self, fv: &FeatureVector) -> CountryLabel {
        self.log_posterior(fv)
            .into_iter()
            .next()
            .map(|(label, _)| label)
            .expect("trained model has at least one class")
    }

    /// Class with the most training examples carrying `value` for `kind`.
    /// Ties go to the smaller country code.
    pub fn majority_class(&self, kind: FeatureKind, value: &str) -> Option<CountryLabel> {
        self.classes
            .keys()
            .map(|c| (c, self.value_count(c, kind, value)))
            .filter(|(_, n)| *n > 0)
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(c, _)| c.clone())
    }

    /// The class ranked first on priors alone.
    pub fn prior_argmax(&self) -> CountryLabel {
        self.log_posterior(&FeatureVector::new())[0].0.clone()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelIoError> {
        let model: NaiveBayesModel =
            serde_json::from_str(text).map_err(|e| ModelIoError::CorruptModel(e.to_string()))?;
        model.validate().map_err(ModelIoError::CorruptModel)?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ModelIoError> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelIoError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ModelIoError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), String> {
        if self.schema_version != MODEL_SCHEMA_VERSION {
            return Err(format!(
                "unsupported schema version {}",
                self.schema_version
            ));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(format!("invalid alpha {}", self.alpha));
        }
        if self.enabled_kinds.is_empty() {
            return Err("no enabled kinds".into());
        }
        if self.classes.is_empty() {
            return Err("no classes".into());
        }
        let mut sum = 0u64;
        for (label, class) in &self.classes {
            if class.examples == 0 {
                return Err(format!("class {label} has zero examples"));
            }
            sum += class.examples;
            for (kind, kc) in &class.kinds {
                if !self.enabled_kinds.contains(*kind) {
                    return Err(format!("class {label} counts disabled kind {kind}"));
                }
                let values: u64 = kc.values.values().sum();
                if values != kc.total {
                    return Err(format!(
                        "class {label} kind {kind}: total {} != sum of value counts {values}",
                        kc.total
                    ));
                }
                if kc.total > class.examples {
                    return Err(format!(
                        "class {label} kind {kind}: total {} exceeds class examples {}",
                        kc.total, class.examples
                    ));
                }
                for (value, n) in &kc.values {
                    if *n > 0 && !self.in_vocabulary(*kind, value) {
                        return Err(format!(
                            "value {value:?} of kind {kind} missing from vocabulary"
                        ));
                    }
                }
            }
        }
        if sum != self.total_examples {
            return Err(format!(
                "total_examples {} != sum of class examples {sum}",
                self.total_examples
            ));
        }
        Ok(())
    }
}

/// Descending score, then ascending country code.
/// Relative tolerance under which two log-scores count as tied. Sums of
/// logarithms of equal products can differ in the last bits.
pub const TIE_TOLERANCE: f64 = 1e-12;

fn tied(a: f64, b: f64) -> bool {
    a == b
        || (a.is_finite()
            && b.is_finite()
            && (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0))
}

/// Best score first; each run of scores tied with its leading score is
/// ordered by country code.
fn rank(scores: &mut [(CountryLabel, f64)]) {
    scores.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut start = 0;
    while start < scores.len() {
        let lead = scores[start].1;
        let end = start
            + scores[start..]
                .iter()
                .take_while(|(_, s)| tied(lead, *s))
                .count();
        scores[start..end].sort_by(|a, b| a.0.cmp(&b.0));
        start = end;
    }
}
