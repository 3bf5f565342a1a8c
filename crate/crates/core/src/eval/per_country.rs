use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::crossval::{fit_model, RegionEcho};
use super::region::{collapse_label, Region};
use super::{EvalError, LabeledVector};
use crate::features::{FeatureKind, KindSet};
use crate::tweet::CountryLabel;

/// Countries with fewer evaluation tweets than this are left out.
pub const DEFAULT_MIN_COUNT: usize = 15;

/// Column feature sets of the published per-country table.
pub fn table2_preset() -> Vec<KindSet> {
    use FeatureKind::*;
    vec![
        KindSet::from_kinds([Location, Timezone, Geoparsed]),
        KindSet::from_kinds([Location, Timezone, TweetLanguage]),
        KindSet::from_kinds([Location, Timezone, TweetLanguage, Geoparsed]),
    ]
}

/// Whether the evaluation tweets are the training tweets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    SameSet,
    HeldOut,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerCountryConfig {
    pub kind_sets: Vec<KindSet>,
    pub min_count: usize,
    pub alpha: f64,
    pub uniform_priors: bool,
    pub region: Option<Region>,
    pub mode: EvalMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation (divides by N).
    pub std_dev: f64,
}

/// Unweighted mean and population standard deviation.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    Some(Summary {
        mean,
        std_dev: var.sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryReportRow {
    pub country: CountryLabel,
    pub n: u64,
    /// Percent correct, one entry per kind set.
    pub accuracy_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAggregate {
    pub region: RegionEcho,
    /// Overall percent correct with out-of-region labels collapsed, one
    /// entry per kind set.
    pub accuracy_pct: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryReport {
    pub mode: EvalMode,
    pub kind_sets: Vec<KindSet>,
    pub min_count: usize,
    pub rows: Vec<CountryReportRow>,
    pub omitted_countries: usize,
    pub average: Vec<f64>,
    pub std_dev: Vec<f64>,
    pub region: Option<RegionAggregate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run_config: Option<serde_json::Value>,
}

fn predictions(
    train: &[LabeledVector],
    eval: &[LabeledVector],
    kinds: KindSet,
    cfg: &PerCountryConfig,
) -> Result<Vec<CountryLabel>, EvalError> {
    let model = fit_model(train, kinds, cfg.alpha, cfg.uniform_priors)?;
    Ok(eval
        .iter()
        .map(|(fv, _)| model.classify(&fv.restrict(kinds)))
        .collect())
}

/// Trains once per kind set on `train`, then reports accuracy per true
/// country of `eval` with the average, population standard deviation and
/// (optionally) region-collapsed summary rows.
pub fn per_country_report(
    train: &[LabeledVector],
    eval: &[LabeledVector],
    cfg: &PerCountryConfig,
) -> Result<CountryReport, EvalError> {
    if cfg.min_count < 1 {
        return Err(EvalError::InvalidMinCount);
    }
    if cfg.kind_sets.is_empty() {
        return Err(EvalError::NoSubsets);
    }
    if eval.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }

    // country -> (n, correct per kind set)
    let mut tally: BTreeMap<&CountryLabel, (u64, Vec<u64>)> = BTreeMap::new();
    for (_, truth) in eval {
        tally
            .entry(truth)
            .or_insert_with(|| (0, vec![0; cfg.kind_sets.len()]))
            .0 += 1;
    }
    for (col, kinds) in cfg.kind_sets.iter().enumerate() {
        let predicted = predictions(train, eval, *kinds, cfg)?;
        for ((_, truth), p) in eval.iter().zip(&predicted) {
            if p == truth {
                tally.get_mut(truth).expect("tallied").1[col] += 1;
            }
        }
    }

    let total_countries = tally.len();
    let mut rows: Vec<CountryReportRow> = tally
        .into_iter()
        .filter(|(_, (n, _))| *n >= cfg.min_count as u64)
        .map(|(country, (n, correct))| CountryReportRow {
            country: country.clone(),
            n,
            accuracy_pct: correct
                .iter()
                .map(|c| 100.0 * *c as f64 / n as f64)
                .collect(),
        })
        .collect();
    rows.sort_by(|a, b| b.n.cmp(&a.n).then_with(|| a.country.cmp(&b.country)));

    let mut average = Vec::new();
    let mut std_dev = Vec::new();
    for col in 0..cfg.kind_sets.len() {
        let column: Vec<f64> = rows.iter().map(|r| r.accuracy_pct[col]).collect();
        let s = summarize(&column).unwrap_or(Summary {
            mean: f64::NAN,
            std_dev: f64::NAN,
        });
        average.push(s.mean);
        std_dev.push(s.std_dev);
    }

    let region = match &cfg.region {
        Some(region) => {
            let collapse = |data: &[LabeledVector]| -> Vec<LabeledVector> {
                data.iter()
                    .map(|(fv, l)| (fv.clone(), collapse_label(l, region)))
                    .collect()
            };
            let (train_c, eval_c) = (collapse(train), collapse(eval));
            let mut pct = Vec::new();
            for kinds in &cfg.kind_sets {
                let predicted = predictions(&train_c, &eval_c, *kinds, cfg)?;
                let correct = eval_c
                    .iter()
                    .zip(&predicted)
                    .filter(|((_, t), p)| t == *p)
                    .count();
                pct.push(100.0 * correct as f64 / eval_c.len() as f64);
            }
            Some(RegionAggregate {
                region: RegionEcho {
                    name: region.name.clone(),
                    sha256: region.digest().to_string(),
                },
                accuracy_pct: pct,
            })
        }
        None => None,
    };

    Ok(CountryReport {
        mode: cfg.mode,
        kind_sets: cfg.kind_sets.clone(),
        min_count: cfg.min_count,
        omitted_countries: total_countries - rows.len(),
        rows,
        average,
        std_dev,
        region,
        run_config: None,
    })
}

impl CountryReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Columns: `country,n`, then one percent column per kind set (kinds
    /// joined with `+`). Summary rows `Average`, `Standard deviation` and
    /// the region name follow the country rows with an empty `n`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["country".to_string(), "n".to_string()];
        header.extend(self.kind_sets.iter().map(|k| k.label().replace(',', "+")));
        w.write_record(&header).expect("in-memory write");
        let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>();
        for row in &self.rows {
            let mut rec = vec![row.country.to_string(), row.n.to_string()];
            rec.extend(fmt(&row.accuracy_pct));
            w.write_record(&rec).expect("in-memory write");
        }
        let mut summary = |name: &str, values: &[f64]| {
            let mut rec = vec![name.to_string(), String::new()];
            rec.extend(fmt(values));
            w.write_record(&rec).expect("in-memory write");
        };
        summary("Average", &self.average);
        summary("Standard deviation", &self.std_dev);
        if let Some(region) = &self.region {
            let mut name = region.region.name.clone();
            if let Some(first) = name.get_mut(0..1) {
                first.make_ascii_uppercase();
            }
            summary(&name, &region.accuracy_pct);
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;

    fn l(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    fn tz(c: &str) -> FeatureVector {
        [(FeatureKind::Timezone, format!("tz-{c}"))]
            .into_iter()
            .collect()
    }

    fn cfg() -> PerCountryConfig {
        PerCountryConfig {
            kind_sets: vec![KindSet::from_kinds([FeatureKind::Timezone])],
            min_count: DEFAULT_MIN_COUNT,
            alpha: 1.0,
            uniform_priors: false,
            region: None,
            mode: EvalMode::SameSet,
        }
    }

    #[test]
    fn summarize_uses_population_std() {
        let s = summarize(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!((s.mean, s.std_dev), (5.0, 2.0));
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn cutoff_and_perfect_country() {
        let mut data: Vec<LabeledVector> = (0..20).map(|_| (tz("GB"), l("GB"))).collect();
        data.extend((0..14).map(|_| (tz("IE"), l("IE"))));
        let r = per_country_report(&data, &data, &cfg()).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].country, l("GB"));
        assert_eq!(r.rows[0].accuracy_pct, vec![100.0]);
        assert_eq!(r.omitted_countries, 1);
        assert_eq!(r.average, vec![100.0]);
        assert_eq!(r.std_dev, vec![0.0]);
    }

    #[test]
    fn average_is_unweighted() {
        // GB: 30 tweets all right. NL: 20 tweets, half share GB's timezone.
        let mut data: Vec<LabeledVector> = (0..30).map(|_| (tz("GB"), l("GB"))).collect();
        data.extend((0..10).map(|_| (tz("NL"), l("NL"))));
        data.extend((0..10).map(|_| (tz("GB"), l("NL"))));
        let r = per_country_report(&data, &data, &cfg()).unwrap();
        assert_eq!(r.rows[0].accuracy_pct, vec![100.0]);
        assert_eq!(r.rows[1].accuracy_pct, vec![50.0]);
        assert_eq!(r.average, vec![75.0]);
        assert_eq!(r.std_dev, vec![25.0]);
        let csv = r.to_csv();
        assert!(csv.starts_with("country,n,timezone\nGB,30,100.00\nNL,20,50.00\nAverage,,75.00\n"));
    }

    #[test]
    fn region_row_and_errors() {
        let mut data: Vec<LabeledVector> = (0..20).map(|_| (tz("GB"), l("GB"))).collect();
        data.extend((0..20).map(|_| (tz("US"), l("US"))));
        data.extend((0..20).map(|_| (tz("CA"), l("CA"))));
        let mut c = cfg();
        c.region = Some(Region::europe());
        let r = per_country_report(&data, &data, &c).unwrap();
        assert_eq!(r.region.as_ref().unwrap().accuracy_pct, vec![100.0]);
        assert!(r
            .to_csv()
            .lines()
            .last()
            .unwrap()
            .starts_with("Europe,,100.00"));
        c.min_count = 0;
        assert!(matches!(
            per_country_report(&data, &data, &c),
            Err(EvalError::InvalidMinCount)
        ));
    }
}
