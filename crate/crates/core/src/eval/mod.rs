//! Evaluation protocol: accuracy, k-fold cross-validation, feature
//! ablation, per-country tables and region-collapsed classes.

mod crossval;
mod diagnose;
mod folds;
mod per_country;
mod region;

use std::fmt;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use crossval::{
    ablate, ablation_csv, cross_validate, cross_validate_vectors, table1_preset, AblationRow,
    ConfusionMatrix, CountryAccuracy, CvConfig, CvEcho, EvaluationReport, FoldResult, RegionEcho,
    TABLE1_PRESET,
};
pub(crate) use crossval::{extract_all, fit_model};
pub use diagnose::{diagnose, error_tags, DiagnosticTag};
pub use folds::{kfold_split, FoldAssignment, FoldOrientation};
pub use per_country::{
    per_country_report, summarize, table2_preset, CountryReport, CountryReportRow, EvalMode,
    PerCountryConfig, RegionAggregate, Summary, DEFAULT_MIN_COUNT,
};
pub use region::{collapse_label, collapse_region, Region, RegionError};

use crate::bayes::TrainError;
use crate::features::FeatureVector;
use crate::tweet::{CountryLabel, TweetRecord};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error("need 2 <= k <= n folds, got k={k} for n={n}")]
    InvalidFoldCount { n: usize, k: usize },
    #[error("cross-validation needs at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("no feature subsets given")]
    NoSubsets,
    #[error("minimum per-country count must be >= 1")]
    InvalidMinCount,
    #[error("dataset labels must be concrete countries; found {0}")]
    CollapsedLabel(CountryLabel),
    #[error(transparent)]
    Train(#[from] TrainError),
}

/// Fraction of predictions equal to the true label, kept as exact counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Accuracy {
    pub correct: u64,
    pub total: u64,
}

impl Accuracy {
    pub fn ratio(&self) -> Ratio<u64> {
        Ratio::new(self.correct, self.total)
    }

    pub fn as_f64(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }

    pub fn percent(&self) -> f64 {
        100.0 * self.as_f64()
    }

    fn add(&mut self, correct: bool) {
        self.total += 1;
        self.correct += correct as u64;
    }
}

impl fmt::Display for Accuracy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{} ({:.4})", self.correct, self.total, self.as_f64())
    }
}

/// Accuracy over `(predicted, true)` pairs.
pub fn accuracy<'a, I>(predictions: I) -> Result<Accuracy, EvalError>
where
    I: IntoIterator<Item = (&'a CountryLabel, &'a CountryLabel)>,
{
    let mut acc = Accuracy::default();
    for (predicted, truth) in predictions {
        acc.add(predicted == truth);
    }
    if acc.total == 0 {
        return Err(EvalError::EmptyEvaluationSet);
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledTweet {
    pub tweet: TweetRecord,
    pub label: CountryLabel,
}

/// Tweets with ground-truth countries from one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub source: String,
    examples: Vec<LabeledTweet>,
}

impl LabeledDataset {
    pub fn new(source: impl Into<String>, examples: Vec<LabeledTweet>) -> Result<Self, EvalError> {
        if examples.is_empty() {
            return Err(EvalError::EmptyEvaluationSet);
        }
        if let Some(bad) = examples.iter().find(|e| e.label.is_other()) {
            return Err(EvalError::CollapsedLabel(bad.label.clone()));
        }
        Ok(Self {
            source: source.into(),
            examples,
        })
    }

    pub fn examples(&self) -> &[LabeledTweet] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }
}

/// A labeled example after feature extraction.
pub type LabeledVector = (FeatureVector, CountryLabel);

#[cfg(test)]
mod tests {
    use super::*;

    fn l(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    fn pairs(correct: usize, wrong: usize) -> Vec<(CountryLabel, CountryLabel)> {
        let mut v = vec![(l("NL"), l("NL")); correct];
        v.extend(vec![(l("US"), l("GB")); wrong]);
        v
    }

    fn acc(p: &[(CountryLabel, CountryLabel)]) -> Result<Accuracy, EvalError> {
        accuracy(p.iter().map(|(a, b)| (a, b)))
    }

    #[test]
    fn accuracy_examples() {
        assert_eq!(acc(&pairs(7, 0)).unwrap().ratio(), Ratio::from_integer(1));
        assert_eq!(acc(&pairs(0, 5)).unwrap().ratio(), Ratio::from_integer(0));
        let a = acc(&pairs(9, 2)).unwrap();
        assert_eq!(a.ratio(), Ratio::new(9, 11));
        assert!((a.as_f64() - 0.8182).abs() < 5e-5);
        assert!(matches!(acc(&[]), Err(EvalError::EmptyEvaluationSet)));
    }

    #[test]
    fn dataset_rejects_empty_and_collapsed() {
        assert!(LabeledDataset::new("x", vec![]).is_err());
        let e = LabeledTweet {
            tweet: TweetRecord::default(),
            label: CountryLabel::other(),
        };
        assert!(matches!(
            LabeledDataset::new("x", vec![e]),
            Err(EvalError::CollapsedLabel(_))
        ));
    }
}
