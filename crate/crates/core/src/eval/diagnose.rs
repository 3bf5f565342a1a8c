use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::bayes::NaiveBayesModel;
use crate::features::FeatureVector;
use crate::tweet::CountryLabel;

/// Heuristic error-triage tags for a classification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DiagnosticTag {
    /// At most one usable feature entry.
    LimitedInformation,
    /// The predicted class is the majority class of every known entry.
    BigClass,
    /// Every entry was out of vocabulary, so only priors decided.
    OovOnly,
}

impl DiagnosticTag {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagnosticTag::LimitedInformation => "LIMITED_INFORMATION",
            DiagnosticTag::BigClass => "BIG_CLASS",
            DiagnosticTag::OovOnly => "OOV_ONLY",
        }
    }
}

/// Tags describing why `predicted` might be wrong, without knowing the truth.
pub fn error_tags(
    model: &NaiveBayesModel,
    fv: &FeatureVector,
    predicted: &CountryLabel,
) -> BTreeSet<DiagnosticTag> {
    let enabled = model.enabled_kinds();
    let entries: Vec<_> = fv.iter().filter(|(k, _)| enabled.contains(*k)).collect();
    let known: Vec<_> = model.scored_entries(fv).collect();
    let mut tags = BTreeSet::new();
    if entries.len() <= 1 {
        tags.insert(DiagnosticTag::LimitedInformation);
    }
    if !known.is_empty()
        && known
            .iter()
            .all(|(k, v)| model.majority_class(*k, v).as_ref() == Some(predicted))
    {
        tags.insert(DiagnosticTag::BigClass);
    }
    if !entries.is_empty() && known.is_empty() {
        tags.insert(DiagnosticTag::OovOnly);
    }
    tags
}

/// Triage tags for a misclassified vector; empty when the model is right.
pub fn diagnose(
    model: &NaiveBayesModel,
    fv: &FeatureVector,
    true_label: &CountryLabel,
) -> BTreeSet<DiagnosticTag> {
    let predicted = model.classify(fv);
    if &predicted == true_label {
        return BTreeSet::new();
    }
    error_tags(model, fv, &predicted)
}
