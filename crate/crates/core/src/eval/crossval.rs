use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{kfold_split, FoldAssignment, FoldOrientation};
use super::region::{collapse_label, Region};
use super::{Accuracy, EvalError, LabeledDataset, LabeledVector};
use crate::bayes::{ModelBuilder, NaiveBayesModel};
use crate::features::{FeatureExtractor, FeatureKind, Geoparser, KindSet};
use crate::tweet::CountryLabel;

use FeatureKind::*;

/// The fourteen feature combinations of the published ablation table, in
/// row order.
pub const TABLE1_PRESET: [&[FeatureKind]; 14] = [
    &[Location],
    &[Timezone],
    &[TweetLanguage],
    &[Geoparsed],
    &[UtcOffset],
    &[UserLanguage],
    &[Location, Geoparsed],
    &[Location, Timezone],
    &[Location, Timezone, TweetLanguage],
    &[Timezone, Geoparsed],
    &[TweetLanguage, Geoparsed],
    &[Location, Timezone, TweetLanguage, Geoparsed],
    &[Location, Timezone, Geoparsed],
    &[
        Location,
        Timezone,
        TweetLanguage,
        Geoparsed,
        UtcOffset,
        UserLanguage,
    ],
];

pub fn table1_preset() -> Vec<KindSet> {
    TABLE1_PRESET
        .iter()
        .map(|kinds| KindSet::from_kinds(kinds.iter().copied()))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvConfig {
    pub k: usize,
    pub kinds: KindSet,
    pub alpha: f64,
    pub seed: u64,
    pub orientation: FoldOrientation,
    pub uniform_priors: bool,
    /// Collapse training labels and truth to this region before evaluating.
    pub region: Option<Region>,
    pub fold_case: bool,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            k: 10,
            kinds: KindSet::all(),
            alpha: crate::bayes::DEFAULT_ALPHA,
            seed: 0,
            orientation: FoldOrientation::Standard,
            uniform_priors: false,
            region: None,
            fold_case: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEcho {
    pub name: String,
    pub sha256: String,
}

/// Settings that produced a report, including a digest of the fold
/// partition so rows of one ablation can be checked for comparability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEcho {
    pub n: usize,
    pub k: usize,
    pub seed: u64,
    pub alpha: f64,
    pub uniform_priors: bool,
    pub kinds: KindSet,
    pub orientation: FoldOrientation,
    pub region: Option<RegionEcho>,
    pub fold_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: Accuracy,
}

/// Counts of (true label, predicted label) pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix(BTreeMap<CountryLabel, BTreeMap<CountryLabel, u64>>);

impl ConfusionMatrix {
    pub fn add(&mut self, truth: &CountryLabel, predicted: &CountryLabel) {
        *self
            .0
            .entry(truth.clone())
            .or_default()
            .entry(predicted.clone())
            .or_insert(0) += 1;
    }

    pub fn get(&self, truth: &CountryLabel, predicted: &CountryLabel) -> u64 {
        self.0
            .get(truth)
            .and_then(|row| row.get(predicted))
            .copied()
            .unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.0.values().flat_map(|row| row.values()).sum()
    }

    pub fn diagonal(&self) -> u64 {
        self.0
            .iter()
            .map(|(truth, row)| row.get(truth).copied().unwrap_or(0))
            .sum()
    }

    pub fn row_total(&self, truth: &CountryLabel) -> u64 {
        self.0.get(truth).map_or(0, |row| row.values().sum())
    }

    /// Every label that appears as truth or prediction.
    pub fn labels(&self) -> BTreeSet<CountryLabel> {
        self.0
            .iter()
            .flat_map(|(t, row)| std::iter::once(t).chain(row.keys()))
            .cloned()
            .collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = (&CountryLabel, &BTreeMap<CountryLabel, u64>)> {
        self.0.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryAccuracy {
    pub country: CountryLabel,
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub source: String,
    pub config: CvEcho,
    /// Pooled over every prediction of every rotation.
    pub accuracy: Accuracy,
    pub accuracy_value: f64,
    pub mean_fold_accuracy: f64,
    pub folds: Vec<FoldResult>,
    pub confusion: ConfusionMatrix,
    pub per_country: Vec<CountryAccuracy>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Columns: `country,n,correct,accuracy_pct`; rows by n descending.
    pub fn per_country_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["country", "n", "correct", "accuracy_pct"])
            .expect("in-memory write");
        for row in &self.per_country {
            w.write_record([
                row.country.to_string(),
                row.n.to_string(),
                row.correct.to_string(),
                format!("{:.2}", 100.0 * row.accuracy),
            ])
            .expect("in-memory write");
        }
        w.write_record([
            "ALL".to_string(),
            self.accuracy.total.to_string(),
            self.accuracy.correct.to_string(),
            format!("{:.2}", self.accuracy.percent()),
        ])
        .expect("in-memory write");
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

/// Extracts features then cross-validates.
pub fn cross_validate<G: Geoparser + Sync + ?Sized>(
    data: &LabeledDataset,
    cfg: &CvConfig,
    geoparser: &G,
) -> Result<EvaluationReport, EvalError> {
    let vectors = extract_all(data, cfg.kinds, cfg.fold_case, geoparser)?;
    cross_validate_vectors(&data.source, &vectors, cfg)
}

pub(crate) fn extract_all<G: Geoparser + Sync + ?Sized>(
    data: &LabeledDataset,
    kinds: KindSet,
    fold_case: bool,
    geoparser: &G,
) -> Result<Vec<LabeledVector>, EvalError> {
    let extractor = FeatureExtractor::new(kinds)
        .map_err(|_| EvalError::Train(crate::bayes::TrainError::NoKindsEnabled))?
        .with_case_folding(fold_case);
    Ok(data
        .examples()
        .par_iter()
        .map(|e| {
            (
                extractor.extract(&e.tweet, geoparser).features,
                e.label.clone(),
            )
        })
        .collect())
}

fn echo(cfg: &CvConfig, folds: &FoldAssignment) -> CvEcho {
    CvEcho {
        n: folds.len(),
        k: cfg.k,
        seed: cfg.seed,
        alpha: cfg.alpha,
        uniform_priors: cfg.uniform_priors,
        kinds: cfg.kinds,
        orientation: cfg.orientation,
        region: cfg.region.as_ref().map(|r| RegionEcho {
            name: r.name.clone(),
            sha256: r.digest().to_string(),
        }),
        fold_sha256: folds.digest(),
    }
}

/// k-fold cross-validation over already extracted feature vectors.
///
/// Only the kinds in `cfg.kinds` are used. Rotations run in parallel and
/// are assembled in fold order, so the report does not depend on
/// scheduling.
pub fn cross_validate_vectors(
    source: &str,
    data: &[LabeledVector],
    cfg: &CvConfig,
) -> Result<EvaluationReport, EvalError> {
    let folds = kfold_split(data.len(), cfg.k, cfg.seed)?;
    let labels: Vec<CountryLabel> = match &cfg.region {
        Some(region) => data
            .iter()
            .map(|(_, l)| collapse_label(l, region))
            .collect(),
        None => data.iter().map(|(_, l)| l.clone()).collect(),
    };
    let distinct: BTreeSet<&CountryLabel> = labels.iter().collect();
    if distinct.len() < 2 {
        return Err(EvalError::TooFewClasses(distinct.len()));
    }
    let vectors: Vec<_> = data.iter().map(|(fv, _)| fv.restrict(cfg.kinds)).collect();

    let rotations: Vec<(FoldResult, Vec<(usize, CountryLabel)>)> = (0..cfg.k)
        .into_par_iter()
        .map(|fold| {
            let (train_idx, test_idx) = folds.split(fold, cfg.orientation);
            let mut builder = ModelBuilder::new(cfg.alpha, cfg.kinds)?;
            for &i in &train_idx {
                builder.add(&vectors[i], &labels[i]);
            }
            let model = builder.build()?.with_uniform_priors(cfg.uniform_priors);
            let predictions: Vec<(usize, CountryLabel)> = test_idx
                .iter()
                .map(|&i| (i, model.classify(&vectors[i])))
                .collect();
            let mut acc = Accuracy::default();
            for (i, p) in &predictions {
                acc.add(*p == labels[*i]);
            }
            Ok((
                FoldResult {
                    fold,
                    train_size: train_idx.len(),
                    test_size: test_idx.len(),
                    accuracy: acc,
                },
                predictions,
            ))
        })
        .collect::<Result<_, EvalError>>()?;

    let mut confusion = ConfusionMatrix::default();
    let mut pooled = Accuracy::default();
    let mut fold_results = Vec::with_capacity(cfg.k);
    for (result, predictions) in rotations {
        for (i, predicted) in &predictions {
            confusion.add(&labels[*i], predicted);
            pooled.add(*predicted == labels[*i]);
        }
        fold_results.push(result);
    }
    let mean_fold_accuracy = fold_results
        .iter()
        .map(|f| f.accuracy.as_f64())
        .sum::<f64>()
        / fold_results.len() as f64;

    Ok(EvaluationReport {
        source: source.to_string(),
        config: echo(cfg, &folds),
        accuracy: pooled,
        accuracy_value: pooled.as_f64(),
        mean_fold_accuracy,
        folds: fold_results,
        per_country: per_country_rows(&confusion),
        confusion,
        run_config: None,
    })
}

pub(crate) fn per_country_rows(confusion: &ConfusionMatrix) -> Vec<CountryAccuracy> {
    let mut rows: Vec<CountryAccuracy> = confusion
        .rows()
        .map(|(truth, _)| {
            let n = confusion.row_total(truth);
            let correct = confusion.get(truth, truth);
            CountryAccuracy {
                country: truth.clone(),
                n,
                correct,
                accuracy: correct as f64 / n as f64,
            }
        })
        .collect();
    rows.sort_by(|a, b| b.n.cmp(&a.n).then_with(|| a.country.cmp(&b.country)));
    rows
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub kinds: KindSet,
    pub report: EvaluationReport,
}

/// One cross-validation per subset, all over the same fold partition.
/// Rows keep the order of `subsets`.
pub fn ablate(
    source: &str,
    data: &[LabeledVector],
    subsets: &[KindSet],
    cfg: &CvConfig,
) -> Result<Vec<AblationRow>, EvalError> {
    if subsets.is_empty() {
        return Err(EvalError::NoSubsets);
    }
    subsets
        .par_iter()
        .map(|&kinds| {
            let row_cfg = CvConfig {
                kinds,
                ..cfg.clone()
            };
            cross_validate_vectors(source, data, &row_cfg)
                .map(|report| AblationRow { kinds, report })
        })
        .collect()
}

/// Ablation table as CSV: one flag column per feature kind (`x` when
/// enabled, in enum order), then
/// `accuracy_pct,correct,total,mean_fold_accuracy_pct`.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = FeatureKind::ALL
        .iter()
        .map(|k| k.short_name().to_string())
        .collect();
    header.extend(
        ["accuracy_pct", "correct", "total", "mean_fold_accuracy_pct"]
            .iter()
            .map(|s| s.to_string()),
    );
    w.write_record(&header).expect("in-memory write");
    for row in rows {
        let mut rec: Vec<String> = FeatureKind::ALL
            .iter()
            .map(|k| if row.kinds.contains(*k) { "x" } else { "" }.to_string())
            .collect();
        rec.push(format!("{:.2}", row.report.accuracy.percent()));
        rec.push(row.report.accuracy.correct.to_string());
        rec.push(row.report.accuracy.total.to_string());
        rec.push(format!("{:.2}", 100.0 * row.report.mean_fold_accuracy));
        w.write_record(&rec).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

pub(crate) fn fit_model(
    data: &[LabeledVector],
    kinds: KindSet,
    alpha: f64,
    uniform_priors: bool,
) -> Result<NaiveBayesModel, EvalError> {
    let mut builder = ModelBuilder::new(alpha, kinds)?;
    for (fv, label) in data {
        builder.add(&fv.restrict(kinds), label);
    }
    Ok(builder.build()?.with_uniform_priors(uniform_priors))
}
