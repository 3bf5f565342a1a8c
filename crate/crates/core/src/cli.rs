//! Command-line front end.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 usage or
//! configuration error, 3 bad input data, 4 unusable model file, 5 geocoder
//! or geocode-cache failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bayes::{ModelIoError, NaiveBayesModel};
use crate::config::{ConfigError, RunConfig, GEOCODER_KEY_ENV, OFFLINE_GEOCODER};
use crate::eval::{
    self, ablation_csv, collapse_label, error_tags, per_country_report, table1_preset,
    table2_preset, CvConfig, EvalError, EvalMode, FoldOrientation, LabeledDataset, LabeledTweet,
    LabeledVector, PerCountryConfig, Region,
};
use crate::features::{FeatureExtractor, FeatureKind, KindSet};
use crate::geocode::remote::{NominatimClient, RemoteConfig};
use crate::geocode::{Gazetteer, GeocodeCache, Geocoder, PointIndex};
use crate::tweet::{label_of, parse_tweet_object, CountryLabel, LabelError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INPUT: i32 = 3;
pub const EXIT_MODEL: i32 = 4;
pub const EXIT_GEOCODER: i32 = 5;

/// Field added to labeled records and read back by the training commands.
pub const LABEL_FIELD: &str = "country";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Model(String),
    #[error("{0}")]
    Geocoder(String),
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Input(_) => EXIT_INPUT,
            CliError::Model(_) => EXIT_MODEL,
            CliError::Geocoder(_) => EXIT_GEOCODER,
            CliError::Output(_) => EXIT_OUTPUT,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Usage(e.to_string())
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        CliError::Model(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tweet-country",
    version,
    about = "Infer the home country of tweets from their metadata"
)]
pub struct Cli {
    /// TOML file with run configuration; flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags mirroring [`RunConfig`] fields.
#[derive(Debug, Default, Clone, Args)]
pub struct Overrides {
    /// Feature kinds, comma separated, or `all`.
    #[arg(long, global = true)]
    pub kinds: Option<KindSet>,
    /// Additive smoothing constant.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Number of cross-validation folds.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Countries with fewer evaluation tweets are left out of reports.
    #[arg(long, global = true)]
    pub min_count: Option<usize>,
    /// Region preset (`europe`) or region file; other countries become ZZ.
    #[arg(long, global = true)]
    pub region: Option<String>,
    /// Train on one fold and test on the remaining k-1.
    #[arg(long, global = true)]
    pub paper_literal_folds: bool,
    /// Ignore class frequencies when scoring.
    #[arg(long, global = true)]
    pub uniform_priors: bool,
    /// Keep the case of location and timezone values.
    #[arg(long, global = true)]
    pub no_case_fold: bool,
    /// `offline` or base URL of a Nominatim-compatible geocoder.
    #[arg(long, global = true)]
    pub geocoder: Option<String>,
    #[arg(long, global = true, value_name = "SECS")]
    pub geocoder_timeout: Option<u64>,
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Persistent geocode cache file.
    #[arg(long, global = true)]
    pub cache: Option<PathBuf>,
    /// Gazetteer TSV used instead of the bundled one.
    #[arg(long, global = true)]
    pub gazetteer: Option<PathBuf>,
    /// Abort on the first malformed input line.
    #[arg(long, global = true)]
    pub strict: bool,
    #[arg(long, global = true)]
    pub chunk_size: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        macro_rules! set {
            ($($field:ident => $target:ident),*) => {
                $(if let Some(v) = &self.$field { cfg.$target = v.clone(); })*
            };
        }
        set!(kinds => kinds, alpha => alpha, k => k, seed => seed, min_count => min_count,
             geocoder => geocoder, geocoder_timeout => geocoder_timeout_secs,
             max_in_flight => max_in_flight, chunk_size => chunk_size);
        if let Some(r) = &self.region {
            cfg.region = Some(r.clone());
        }
        if let Some(c) = &self.cache {
            cfg.cache = Some(c.clone());
        }
        if let Some(g) = &self.gazetteer {
            cfg.gazetteer = Some(g.clone());
        }
        if self.paper_literal_folds {
            cfg.fold_orientation = FoldOrientation::PaperLiteral;
        }
        cfg.uniform_priors |= self.uniform_priors;
        cfg.fold_case &= !self.no_case_fold;
        cfg.strict |= self.strict;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Keep tweets with geo information and add their country.
    Label {
        input: PathBuf,
        /// Labeled NDJSON output, `-` for stdout.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Train a model from labeled NDJSON.
    Train {
        input: PathBuf,
        /// Model file to write.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Predict countries for NDJSON tweets.
    Classify {
        input: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// Prediction NDJSON output, `-` for stdout.
        #[arg(short, long)]
        output: PathBuf,
    },
    /// k-fold cross-validation of one feature set.
    Evaluate {
        input: PathBuf,
        #[arg(short, long = "out-dir")]
        out_dir: PathBuf,
    },
    /// Cross-validation over several feature sets on the same folds.
    Ablate {
        input: PathBuf,
        #[arg(short, long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long, value_enum, conflicts_with = "subsets")]
        preset: Option<Preset>,
        /// A feature set to evaluate; repeat for more rows.
        #[arg(long = "subset")]
        subsets: Vec<KindSet>,
    },
    /// Per-country accuracy table.
    Report {
        input: PathBuf,
        #[arg(short, long = "out-dir")]
        out_dir: PathBuf,
        /// Per-country layout (the only layout; accepted for clarity).
        #[arg(long)]
        per_country: bool,
        /// Evaluate on this labeled file instead of the training file.
        #[arg(long)]
        eval: Option<PathBuf>,
        /// A column feature set; repeat for more columns.
        #[arg(long = "kind-set")]
        kind_sets: Vec<KindSet>,
    },
    /// Inspect or rewrite a geocode cache file.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    Stats { path: Option<PathBuf> },
    Compact { path: Option<PathBuf> },
}

/// Parses arguments, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn resolve_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cli.overrides.apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = resolve_config(&cli)?;
    let summary = match &cli.command {
        Command::Label { input, output } => {
            let s = cmd_label(input, output, &cfg)?;
            to_value(&s)
        }
        Command::Train { input, output } => to_value(&cmd_train(input, output, &cfg)?),
        Command::Classify {
            input,
            model,
            output,
        } => {
            let s = cmd_classify(model, input, output, &cfg)?;
            to_value(&s)
        }
        Command::Evaluate { input, out_dir } => to_value(&cmd_evaluate(input, out_dir, &cfg)?),
        Command::Ablate {
            input,
            out_dir,
            preset,
            subsets,
        } => {
            let subsets = match (preset, subsets.is_empty()) {
                (Some(Preset::Table1), _) | (None, true) => table1_preset(),
                (None, false) => subsets.clone(),
            };
            to_value(&cmd_ablate(input, out_dir, &subsets, &cfg)?)
        }
        Command::Report {
            input,
            out_dir,
            eval,
            kind_sets,
            ..
        } => {
            let sets = if kind_sets.is_empty() {
                table2_preset()
            } else {
                kind_sets.clone()
            };
            to_value(&cmd_report(input, eval.as_deref(), out_dir, &sets, &cfg)?)
        }
        Command::Cache { action } => {
            let (path, compact) = match action {
                CacheAction::Stats { path } => (path, false),
                CacheAction::Compact { path } => (path, true),
            };
            let path = path
                .clone()
                .or_else(|| cfg.cache.clone())
                .ok_or_else(|| CliError::Usage("no cache file given".into()))?;
            cmd_cache(&path, compact)?
        }
    };
    // Summaries go to stderr when stdout carries the records.
    let to_stderr = matches!(&cli.command,
        Command::Label { output, .. } | Command::Classify { output, .. } if is_stdout(output));
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if to_stderr {
        eprintln!("{text}");
    } else {
        println!("{text}");
    }
    Ok(())
}

fn to_value<T: Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("summary serializes")
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

pub fn build_geocoder(cfg: &RunConfig) -> Result<Geocoder, CliError> {
    let gazetteer = match &cfg.gazetteer {
        Some(path) => Gazetteer::load(path).map_err(|e| CliError::Geocoder(e.to_string()))?,
        None => Gazetteer::bundled(),
    };
    let mut geocoder =
        Geocoder::new(gazetteer, PointIndex::bundled()).with_max_in_flight(cfg.max_in_flight);
    if let Some(path) = &cfg.cache {
        let cache = GeocodeCache::open(path).map_err(|e| CliError::Geocoder(e.to_string()))?;
        geocoder = geocoder.with_cache(cache);
    }
    if cfg.geocoder != OFFLINE_GEOCODER {
        let mut remote = RemoteConfig::new(cfg.geocoder.clone());
        remote.api_key = std::env::var(GEOCODER_KEY_ENV)
            .ok()
            .filter(|k| !k.is_empty());
        remote.timeout = Duration::from_secs(cfg.geocoder_timeout_secs);
        geocoder = geocoder.with_remote(Box::new(NominatimClient::new(remote)));
    }
    Ok(geocoder)
}

/// Non-blank lines of an NDJSON file, numbered from 1.
struct NdjsonLines {
    reader: Box<dyn BufRead>,
    line: usize,
    path: String,
}

impl NdjsonLines {
    fn open(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path)
            .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
        Ok(Self {
            reader: Box::new(BufReader::new(file)),
            line: 0,
            path: path.display().to_string(),
        })
    }
}

impl Iterator for NdjsonLines {
    /// `(line number, text or decoding error)`
    type Item = Result<(usize, Result<String, String>), CliError>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut buf = Vec::new();
        loop {
            buf.clear();
            match self.reader.read_until(b'\n', &mut buf) {
                Ok(0) => return None,
                Ok(_) => {
                    self.line += 1;
                    let text = match String::from_utf8(std::mem::take(&mut buf)) {
                        Ok(t) => t,
                        Err(_) => return Some(Ok((self.line, Err("invalid UTF-8".into())))),
                    };
                    if text.trim().is_empty() {
                        continue;
                    }
                    return Some(Ok((self.line, Ok(text))));
                }
                Err(e) => {
                    return Some(Err(CliError::Input(format!(
                        "cannot read {}: {e}",
                        self.path
                    ))))
                }
            }
        }
    }
}

fn parse_object(text: &str) -> Result<Map<String, Value>, String> {
    match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(obj)) => Ok(obj),
        Ok(_) => Err("not a JSON object".into()),
        Err(e) => Err(format!("invalid JSON: {e}")),
    }
}

fn malformed(path: &Path, line: usize, message: &str) -> CliError {
    CliError::Input(format!(
        "{}:{line}: malformed input: {message}",
        path.display()
    ))
}

fn open_output(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if is_stdout(path) {
        return Ok(Box::new(BufWriter::new(io::stdout().lock())));
    }
    let file = File::create(path)
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))?;
    Ok(Box::new(BufWriter::new(file)))
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents)
        .map_err(|e| CliError::Output(format!("cannot write {}: {e}", path.display())))
}

fn io_out(path: &Path) -> impl Fn(io::Error) -> CliError + '_ {
    move |e| CliError::Output(format!("cannot write {}: {e}", path.display()))
}

/// Writes `<output>.run.json` next to a record stream.
fn write_sidecar<T: Serialize>(output: &Path, echo: Value, summary: &T) -> Result<(), CliError> {
    if is_stdout(output) {
        return Ok(());
    }
    let mut name = output.as_os_str().to_owned();
    name.push(".run.json");
    let body = json!({ "run_config": echo, "summary": summary });
    let mut text = serde_json::to_string_pretty(&body).expect("sidecar serializes");
    text.push('\n');
    write_file(Path::new(&name), &text)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LabelSummary {
    pub total: u64,
    pub labeled: u64,
    /// Records without usable geo information.
    pub skipped: u64,
    pub malformed: u64,
    /// Records whose coordinates could not be resolved because the
    /// geocoder failed; included in `skipped`.
    pub geocoder_errors: u64,
    pub labeled_fraction: f64,
}

pub fn cmd_label(input: &Path, output: &Path, cfg: &RunConfig) -> Result<LabelSummary, CliError> {
    let lines = NdjsonLines::open(input)?;
    let geocoder = build_geocoder(cfg)?;
    let mut out = open_output(output)?;
    let mut s = LabelSummary {
        total: 0,
        labeled: 0,
        skipped: 0,
        malformed: 0,
        geocoder_errors: 0,
        labeled_fraction: 0.0,
    };
    for item in lines {
        let (line, text) = item?;
        s.total += 1;
        let parsed = text.and_then(|t| {
            let obj = parse_object(&t)?;
            let tweet = parse_tweet_object(&obj).map_err(|e| e.to_string())?;
            Ok((obj, tweet))
        });
        let (mut obj, tweet) = match parsed {
            Ok(v) => v,
            Err(msg) if cfg.strict => return Err(malformed(input, line, &msg)),
            Err(_) => {
                s.malformed += 1;
                continue;
            }
        };
        match label_of(&tweet, &geocoder) {
            Ok(Some(country)) => {
                obj.insert(LABEL_FIELD.into(), country.as_str().into());
                let rec = serde_json::to_string(&obj).expect("object serializes");
                writeln!(out, "{rec}").map_err(io_out(output))?;
                s.labeled += 1;
            }
            Ok(None) | Err(LabelError::NoCountry { .. }) => s.skipped += 1,
            Err(e @ LabelError::ResolverUnavailable(_)) => {
                if cfg.strict {
                    return Err(CliError::Geocoder(format!(
                        "{}:{line}: {e}",
                        input.display()
                    )));
                }
                s.skipped += 1;
                s.geocoder_errors += 1;
            }
        }
    }
    out.flush().map_err(io_out(output))?;
    if s.total > 0 {
        s.labeled_fraction = s.labeled as f64 / s.total as f64;
    }
    write_sidecar(output, cfg.echo("label", &[input]), &s)?;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ReadStats {
    pub records: u64,
    pub malformed: u64,
}

/// Reads labeled NDJSON (tweets carrying a `country` field).
pub fn read_labeled(path: &Path, strict: bool) -> Result<(LabeledDataset, ReadStats), CliError> {
    let mut stats = ReadStats {
        records: 0,
        malformed: 0,
    };
    let mut examples = Vec::new();
    for item in NdjsonLines::open(path)? {
        let (line, text) = item?;
        let parsed = text.and_then(|t| {
            let obj = parse_object(&t)?;
            let tweet = parse_tweet_object(&obj).map_err(|e| e.to_string())?;
            let label = match obj.get(LABEL_FIELD) {
                Some(Value::String(c)) => CountryLabel::new(c).map_err(|e| e.to_string())?,
                _ => return Err(format!("missing `{LABEL_FIELD}` label")),
            };
            if label.is_other() {
                return Err("label ZZ is reserved for region collapse".into());
            }
            Ok(LabeledTweet { tweet, label })
        });
        match parsed {
            Ok(example) => {
                stats.records += 1;
                examples.push(example);
            }
            Err(msg) if strict => return Err(malformed(path, line, &msg)),
            Err(_) => stats.malformed += 1,
        }
    }
    if examples.is_empty() {
        return Err(CliError::Input(format!(
            "{}: no labeled records (empty training set)",
            path.display()
        )));
    }
    let dataset = LabeledDataset::new(path.display().to_string(), examples)?;
    Ok((dataset, stats))
}

fn load_region(cfg: &RunConfig) -> Result<Option<Region>, CliError> {
    cfg.region
        .as_deref()
        .map(Region::from_name_or_path)
        .transpose()
        .map_err(|e| CliError::Input(e.to_string()))
}

fn extract(
    data: &LabeledDataset,
    kinds: KindSet,
    cfg: &RunConfig,
    geocoder: &Geocoder,
) -> Result<Vec<LabeledVector>, CliError> {
    Ok(eval::extract_all(data, kinds, cfg.fold_case, geocoder)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub classes: usize,
    pub total_examples: u64,
    pub class_counts: BTreeMap<String, u64>,
    /// Distinct values seen per enabled feature kind.
    pub vocabulary: BTreeMap<FeatureKind, usize>,
    pub malformed: u64,
}

pub fn cmd_train(input: &Path, output: &Path, cfg: &RunConfig) -> Result<TrainSummary, CliError> {
    let (data, stats) = read_labeled(input, cfg.strict)?;
    let geocoder = build_geocoder(cfg)?;
    let mut vectors = extract(&data, cfg.kinds, cfg, &geocoder)?;
    if let Some(region) = load_region(cfg)? {
        for (_, label) in &mut vectors {
            *label = collapse_label(label, &region);
        }
    }
    let model = eval::fit_model(&vectors, cfg.kinds, cfg.alpha, cfg.uniform_priors)?
        .with_metadata(cfg.echo("train", &[input]));
    model
        .save(output)
        .map_err(|e| CliError::Output(e.to_string()))?;
    Ok(TrainSummary {
        classes: model.num_classes(),
        total_examples: model.total_examples(),
        class_counts: model
            .classes()
            .map(|c| (c.to_string(), model.class_count(c)))
            .collect(),
        vocabulary: cfg
            .kinds
            .iter()
            .map(|k| (k, model.vocabulary_size(k)))
            .collect(),
        malformed: stats.malformed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassifySummary {
    pub records: u64,
    pub classified: u64,
    pub malformed: u64,
    pub predicted: BTreeMap<String, u64>,
}

/// Number of ranked alternatives written per prediction.
pub const TOP_N: usize = 3;

fn finite_or_null(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        Value::Null
    }
}

/// Case folding used when the model was trained, if recorded.
fn model_fold_case(model: &NaiveBayesModel) -> Option<bool> {
    model.metadata()?.get("config")?.get("fold-case")?.as_bool()
}

pub fn cmd_classify(
    model_path: &Path,
    input: &Path,
    output: &Path,
    cfg: &RunConfig,
) -> Result<ClassifySummary, CliError> {
    let model = NaiveBayesModel::load(model_path)?;
    let extractor = FeatureExtractor::new(model.enabled_kinds())
        .map_err(|e| CliError::Model(e.to_string()))?
        .with_case_folding(model_fold_case(&model).unwrap_or(cfg.fold_case));
    let mut lines = NdjsonLines::open(input)?;
    let geocoder = build_geocoder(cfg)?;
    let mut out = open_output(output)?;
    let mut s = ClassifySummary {
        records: 0,
        classified: 0,
        malformed: 0,
        predicted: BTreeMap::new(),
    };

    let classify_one = |text: Result<String, String>| -> Result<(Value, CountryLabel), String> {
        let obj = parse_object(&text?)?;
        let tweet = parse_tweet_object(&obj).map_err(|e| e.to_string())?;
        let fv = extractor.extract(&tweet, &geocoder).features;
        let ranked = model.log_posterior(&fv);
        let predicted = ranked[0].0.clone();
        let top: Vec<Value> = ranked
            .iter()
            .take(TOP_N)
            .map(|(c, score)| json!({ "country": c, "log_score": finite_or_null(*score) }))
            .collect();
        let tags: Vec<&str> = error_tags(&model, &fv, &predicted)
            .into_iter()
            .map(|t| t.as_str())
            .collect();
        let rec = json!({
            "id": tweet.id,
            "country": predicted,
            "top": top,
            "diagnostics": tags,
        });
        Ok((rec, predicted))
    };

    let mut chunk: Vec<(usize, Result<String, String>)> = Vec::with_capacity(cfg.chunk_size);
    loop {
        chunk.clear();
        for item in lines.by_ref().take(cfg.chunk_size) {
            chunk.push(item?);
        }
        if chunk.is_empty() {
            break;
        }
        let results: Vec<_> = chunk
            .par_drain(..)
            .map(|(line, text)| (line, classify_one(text)))
            .collect();
        for (line, result) in results {
            s.records += 1;
            let rec = match result {
                Ok((rec, predicted)) => {
                    s.classified += 1;
                    *s.predicted.entry(predicted.to_string()).or_default() += 1;
                    rec
                }
                Err(msg) if cfg.strict => return Err(malformed(input, line, &msg)),
                Err(msg) => {
                    s.malformed += 1;
                    json!({ "line": line, "error": msg })
                }
            };
            writeln!(out, "{rec}").map_err(io_out(output))?;
        }
    }
    out.flush().map_err(io_out(output))?;
    write_sidecar(output, cfg.echo("classify", &[model_path, input]), &s)?;
    Ok(s)
}

fn cv_config(cfg: &RunConfig, region: Option<Region>) -> CvConfig {
    CvConfig {
        k: cfg.k,
        kinds: cfg.kinds,
        alpha: cfg.alpha,
        seed: cfg.seed,
        orientation: cfg.fold_orientation,
        uniform_priors: cfg.uniform_priors,
        region,
        fold_case: cfg.fold_case,
    }
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Output(format!("cannot create {}: {e}", dir.display())))
}

/// CSV artifacts start with a `#` comment carrying the run-config hash.
fn csv_with_hash(echo: &Value, body: &str) -> String {
    format!(
        "# run_config_sha256={}\n{body}",
        echo["sha256"].as_str().unwrap_or("")
    )
}

fn json_artifact<T: Serialize>(value: &T) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluateSummary {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
    pub mean_fold_accuracy: f64,
    pub malformed: u64,
    pub outputs: Vec<String>,
}

pub const EVALUATION_JSON: &str = "evaluation.json";
pub const EVALUATION_CSV: &str = "per_country.csv";

pub fn cmd_evaluate(
    input: &Path,
    out_dir: &Path,
    cfg: &RunConfig,
) -> Result<EvaluateSummary, CliError> {
    let (data, stats) = read_labeled(input, cfg.strict)?;
    let geocoder = build_geocoder(cfg)?;
    let region = load_region(cfg)?;
    let vectors = extract(&data, cfg.kinds, cfg, &geocoder)?;
    let mut report = eval::cross_validate_vectors(&data.source, &vectors, &cv_config(cfg, region))?;
    let echo = cfg.echo("evaluate", &[input]);
    report.run_config = Some(echo.clone());

    create_dir(out_dir)?;
    let json_path = out_dir.join(EVALUATION_JSON);
    let csv_path = out_dir.join(EVALUATION_CSV);
    write_file(&json_path, &report.to_json())?;
    write_file(&csv_path, &csv_with_hash(&echo, &report.per_country_csv()))?;
    Ok(EvaluateSummary {
        n: report.accuracy.total,
        correct: report.accuracy.correct,
        accuracy: report.accuracy_value,
        mean_fold_accuracy: report.mean_fold_accuracy,
        malformed: stats.malformed,
        outputs: vec![
            json_path.display().to_string(),
            csv_path.display().to_string(),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateRowSummary {
    pub kinds: KindSet,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblateSummary {
    pub rows: Vec<AblateRowSummary>,
    pub fold_sha256: String,
    pub outputs: Vec<String>,
}

pub const ABLATION_JSON: &str = "ablation.json";
pub const ABLATION_CSV: &str = "ablation.csv";

pub fn cmd_ablate(
    input: &Path,
    out_dir: &Path,
    subsets: &[KindSet],
    cfg: &RunConfig,
) -> Result<AblateSummary, CliError> {
    let (data, _) = read_labeled(input, cfg.strict)?;
    let geocoder = build_geocoder(cfg)?;
    let region = load_region(cfg)?;
    let union = subsets.iter().fold(KindSet::empty(), |acc, s| {
        KindSet::from_kinds(acc.iter().chain(s.iter()))
    });
    if union.is_empty() {
        return Err(CliError::Usage("no feature subsets given".into()));
    }
    let vectors = extract(&data, union, cfg, &geocoder)?;
    let rows = eval::ablate(&data.source, &vectors, subsets, &cv_config(cfg, region))?;
    let echo = cfg.echo("ablate", &[input]);

    create_dir(out_dir)?;
    let json_path = out_dir.join(ABLATION_JSON);
    let csv_path = out_dir.join(ABLATION_CSV);
    write_file(
        &json_path,
        &json_artifact(&json!({ "run_config": echo, "rows": rows })),
    )?;
    write_file(&csv_path, &csv_with_hash(&echo, &ablation_csv(&rows)))?;
    Ok(AblateSummary {
        fold_sha256: rows[0].report.config.fold_sha256.clone(),
        rows: rows
            .iter()
            .map(|r| AblateRowSummary {
                kinds: r.kinds,
                accuracy: r.report.accuracy_value,
            })
            .collect(),
        outputs: vec![
            json_path.display().to_string(),
            csv_path.display().to_string(),
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportSummary {
    pub mode: EvalMode,
    pub countries: usize,
    pub omitted_countries: usize,
    pub average: Vec<f64>,
    pub outputs: Vec<String>,
}

pub const REPORT_JSON: &str = "per_country.json";
pub const REPORT_CSV: &str = "per_country.csv";

pub fn cmd_report(
    input: &Path,
    eval_input: Option<&Path>,
    out_dir: &Path,
    kind_sets: &[KindSet],
    cfg: &RunConfig,
) -> Result<ReportSummary, CliError> {
    let geocoder = build_geocoder(cfg)?;
    let union = kind_sets.iter().fold(KindSet::empty(), |acc, s| {
        KindSet::from_kinds(acc.iter().chain(s.iter()))
    });
    if union.is_empty() {
        return Err(CliError::Usage("no feature sets given".into()));
    }
    let (train_data, _) = read_labeled(input, cfg.strict)?;
    let train = extract(&train_data, union, cfg, &geocoder)?;
    let (eval_set, mode, inputs) = match eval_input {
        Some(path) => {
            let (d, _) = read_labeled(path, cfg.strict)?;
            (
                extract(&d, union, cfg, &geocoder)?,
                EvalMode::HeldOut,
                vec![input, path],
            )
        }
        None => (train.clone(), EvalMode::SameSet, vec![input]),
    };
    let pc = PerCountryConfig {
        kind_sets: kind_sets.to_vec(),
        min_count: cfg.min_count,
        alpha: cfg.alpha,
        uniform_priors: cfg.uniform_priors,
        region: load_region(cfg)?,
        mode,
    };
    let mut report = per_country_report(&train, &eval_set, &pc)?;
    let echo = cfg.echo("report", &inputs);
    report.run_config = Some(echo.clone());

    create_dir(out_dir)?;
    let json_path = out_dir.join(REPORT_JSON);
    let csv_path = out_dir.join(REPORT_CSV);
    write_file(&json_path, &report.to_json())?;
    write_file(&csv_path, &csv_with_hash(&echo, &report.to_csv()))?;
    Ok(ReportSummary {
        mode,
        countries: report.rows.len(),
        omitted_countries: report.omitted_countries,
        average: report.average.clone(),
        outputs: vec![
            json_path.display().to_string(),
            csv_path.display().to_string(),
        ],
    })
}

pub fn cmd_cache(path: &Path, compact: bool) -> Result<Value, CliError> {
    let cache = GeocodeCache::open(path).map_err(|e| CliError::Geocoder(e.to_string()))?;
    let stats = cache.stats();
    let mut summary = json!({
        "path": path.display().to_string(),
        "entries": stats.entries,
        "positives": stats.positives,
        "negatives": stats.negatives,
    });
    if compact {
        let written = cache
            .compact()
            .map_err(|e| CliError::Geocoder(e.to_string()))?;
        summary["lines_written"] = written.into();
    }
    Ok(summary)
}
