//! Feature extraction over the six tweet metadata kinds.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tweet::{CountryLabel, TweetRecord};

/// The six metadata feature kinds, in the column order of the feature
/// ablation table. Scoring sums kinds in this order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Location,
    Timezone,
    TweetLanguage,
    Geoparsed,
    UtcOffset,
    UserLanguage,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 6] = [
        FeatureKind::Location,
        FeatureKind::Timezone,
        FeatureKind::TweetLanguage,
        FeatureKind::Geoparsed,
        FeatureKind::UtcOffset,
        FeatureKind::UserLanguage,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Location => "location",
            FeatureKind::Timezone => "timezone",
            FeatureKind::TweetLanguage => "tweet_language",
            FeatureKind::Geoparsed => "geoparsed",
            FeatureKind::UtcOffset => "utc_offset",
            FeatureKind::UserLanguage => "user_language",
        }
    }

    /// Column header used in ablation tables.
    pub fn short_name(self) -> &'static str {
        match self {
            FeatureKind::Location => "Loc",
            FeatureKind::Timezone => "Timezone",
            FeatureKind::TweetLanguage => "Language",
            FeatureKind::Geoparsed => "Geoparsed",
            FeatureKind::UtcOffset => "UTC",
            FeatureKind::UserLanguage => "User language",
        }
    }

    fn bit(self) -> u8 {
        1 << (self as u8)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown feature kind {0:?}")]
pub struct UnknownKind(pub String);

impl FromStr for FeatureKind {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let kind = match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "location" | "loc" | "user_location" => FeatureKind::Location,
            "timezone" | "tz" | "time_zone" => FeatureKind::Timezone,
            "tweet_language" | "language" | "lang" => FeatureKind::TweetLanguage,
            "geoparsed" | "geo" => FeatureKind::Geoparsed,
            "utc_offset" | "utc" => FeatureKind::UtcOffset,
            "user_language" | "ulang" => FeatureKind::UserLanguage,
            _ => return Err(UnknownKind(s.to_string())),
        };
        Ok(kind)
    }
}

/// A set of feature kinds. Iterates in enum order.
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct KindSet(u8);

impl KindSet {
    pub const fn empty() -> Self {
        Self(0)
    }

    pub fn all() -> Self {
        Self::from_kinds(FeatureKind::ALL)
    }

    pub fn from_kinds<I: IntoIterator<Item = FeatureKind>>(kinds: I) -> Self {
        Self(kinds.into_iter().fold(0, |acc, k| acc | k.bit()))
    }

    pub fn contains(self, kind: FeatureKind) -> bool {
        self.0 & kind.bit() != 0
    }

    pub fn insert(&mut self, kind: FeatureKind) {
        self.0 |= kind.bit();
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_subset(self, other: KindSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = FeatureKind> {
        FeatureKind::ALL
            .into_iter()
            .filter(move |k| self.contains(*k))
    }

    /// Comma-separated kind names, e.g. `location,timezone`.
    pub fn label(self) -> String {
        self.iter()
            .map(FeatureKind::name)
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl fmt::Debug for KindSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl FromStr for KindSet {
    type Err = UnknownKind;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case("all") {
            return Ok(Self::all());
        }
        s.split([',', '+'])
            .filter(|p| !p.trim().is_empty())
            .map(FeatureKind::from_str)
            .collect::<Result<Vec<_>, _>>()
            .map(Self::from_kinds)
    }
}

impl Serialize for KindSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(self.iter())
    }
}

impl<'de> Deserialize<'de> for KindSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Vec::<FeatureKind>::deserialize(d).map(Self::from_kinds)
    }
}

/// Partial map from feature kind to a non-empty normalized value.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureVector(BTreeMap<FeatureKind, String>);

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a value; empty values are dropped.
    pub fn insert(&mut self, kind: FeatureKind, value: impl Into<String>) {
        let value = value.into();
        if !value.is_empty() {
            self.0.insert(kind, value);
        }
    }

    pub fn get(&self, kind: FeatureKind) -> Option<&str> {
        self.0.get(&kind).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kinds(&self) -> KindSet {
        KindSet::from_kinds(self.0.keys().copied())
    }

    /// Entries in enum order.
    pub fn iter(&self) -> impl Iterator<Item = (FeatureKind, &str)> {
        self.0.iter().map(|(k, v)| (*k, v.as_str()))
    }

    pub fn restrict(&self, kinds: KindSet) -> FeatureVector {
        FeatureVector(
            self.0
                .iter()
                .filter(|(k, _)| kinds.contains(**k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        )
    }
}

impl<S: Into<String>> FromIterator<(FeatureKind, S)> for FeatureVector {
    fn from_iter<I: IntoIterator<Item = (FeatureKind, S)>>(iter: I) -> Self {
        let mut fv = FeatureVector::new();
        for (k, v) in iter {
            fv.insert(k, v);
        }
        fv
    }
}

/// Forward geocoding capability used for the `Geoparsed` feature.
pub trait Geoparser {
    fn geoparse(&self, raw_location: &str) -> Result<Option<CountryLabel>, String>;
}

/// Geoparser that never resolves anything.
pub struct NoGeoparser;

impl Geoparser for NoGeoparser {
    fn geoparse(&self, _: &str) -> Result<Option<CountryLabel>, String> {
        Ok(None)
    }
}

/// Trims, collapses internal whitespace runs and optionally case-folds.
pub fn normalize_text(raw: &str, fold_case: bool) -> String {
    let collapsed = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    if fold_case {
        collapsed.to_lowercase()
    } else {
        collapsed
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ExtractionWarning {
    pub kind: FeatureKind,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Extraction {
    pub features: FeatureVector,
    pub warnings: Vec<ExtractionWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("at least one feature kind must be enabled")]
pub struct NoKindsEnabled;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureExtractor {
    enabled: KindSet,
    fold_case: bool,
}

impl FeatureExtractor {
    pub fn new(enabled: KindSet) -> Result<Self, NoKindsEnabled> {
        if enabled.is_empty() {
            return Err(NoKindsEnabled);
        }
        Ok(Self {
            enabled,
            fold_case: true,
        })
    }

    /// Case folding of Location and Timezone values; on by default.
    pub fn with_case_folding(mut self, fold: bool) -> Self {
        self.fold_case = fold;
        self
    }

    pub fn enabled(&self) -> KindSet {
        self.enabled
    }

    pub fn extract<G: Geoparser + ?Sized>(&self, tweet: &TweetRecord, geoparser: &G) -> Extraction {
        let mut out = Extraction::default();
        for kind in self.enabled.iter() {
            let value = match kind {
                FeatureKind::Location => tweet
                    .user_location
                    .as_deref()
                    .map(|s| normalize_text(s, self.fold_case)),
                FeatureKind::Timezone => tweet.time_zone.as_deref().map(|s| {
                    if self.fold_case {
                        s.to_lowercase()
                    } else {
                        s.to_string()
                    }
                }),
                FeatureKind::TweetLanguage => {
                    tweet.tweet_language.as_deref().map(str::to_lowercase)
                }
                FeatureKind::UserLanguage => tweet.user_language.as_deref().map(str::to_lowercase),
                FeatureKind::UtcOffset => tweet.utc_offset_seconds.map(|s| s.to_string()),
                FeatureKind::Geoparsed => match tweet.user_location.as_deref() {
                    Some(raw) if !raw.trim().is_empty() => match geoparser.geoparse(raw) {
                        Ok(label) => label.map(String::from),
                        Err(message) => {
                            out.warnings.push(ExtractionWarning { kind, message });
                            None
                        }
                    },
                    _ => None,
                },
            };
            if let Some(v) = value {
                out.features.insert(kind, v);
            }
        }
        out
    }
}
