use std::collections::HashMap;
use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::features::normalize_text;
use crate::tweet::CountryLabel;

const BUNDLED: &str = include_str!("../../data/gazetteer.tsv");

/// Shortest n-gram tried during partial matching. Keeps two-letter codes
/// such as "in" or "us" from matching inside longer strings.
const MIN_PARTIAL_CHARS: usize = 3;

const SEGMENT_SEPARATORS: &[char] = &[',', '/', '|', ';', '•', '·'];

#[derive(Debug, Error)]
pub enum GazetteerError {
    #[error("failed to read gazetteer {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("line {line}: {key:?} maps to both {first} and {second}")]
    ConflictingEntry {
        line: usize,
        key: String,
        first: CountryLabel,
        second: CountryLabel,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazetteerEntry {
    pub country: CountryLabel,
    pub provenance: String,
}

/// How a query matched the gazetteer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GazetteerMatch {
    pub country: CountryLabel,
    pub key: String,
}

/// Normalized place name to country table.
#[derive(Debug, Clone, Default)]
pub struct Gazetteer {
    entries: HashMap<String, GazetteerEntry>,
}

impl Gazetteer {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The GeoNames-derived table shipped with the crate.
    pub fn bundled() -> Self {
        Self::parse(BUNDLED, "bundled").expect("bundled gazetteer is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, GazetteerError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| GazetteerError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses `name<TAB>alpha2[<TAB>provenance]` lines; `#` starts a comment.
    pub fn parse(text: &str, source: &str) -> Result<Self, GazetteerError> {
        let mut entries: HashMap<String, GazetteerEntry> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            if raw.trim().is_empty() || raw.trim_start().starts_with('#') {
                continue;
            }
            let mut cols = raw.split('\t');
            let (Some(name), Some(code)) = (cols.next(), cols.next()) else {
                return Err(GazetteerError::BadLine {
                    line,
                    reason: "expected name<TAB>alpha2".into(),
                });
            };
            let key = normalize_text(name, true);
            if key.is_empty() {
                return Err(GazetteerError::BadLine {
                    line,
                    reason: "empty place name".into(),
                });
            }
            let country = CountryLabel::new(code).map_err(|e| GazetteerError::BadLine {
                line,
                reason: e.to_string(),
            })?;
            if country.is_other() {
                return Err(GazetteerError::BadLine {
                    line,
                    reason: "ZZ is reserved for the collapsed Other class".into(),
                });
            }
            let provenance = cols
                .next()
                .map(str::to_string)
                .unwrap_or_else(|| format!("{source}:{line}"));
            if let Some(prev) = entries.get(&key) {
                if prev.country != country {
                    return Err(GazetteerError::ConflictingEntry {
                        line,
                        key,
                        first: prev.country.clone(),
                        second: country,
                    });
                }
                continue;
            }
            entries.insert(
                key,
                GazetteerEntry {
                    country,
                    provenance,
                },
            );
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, normalized_key: &str) -> Option<&GazetteerEntry> {
        self.entries.get(normalized_key)
    }

    /// Resolves a free-text location.
    ///
    /// Tries the whole normalized query, then each comma/slash separated
    /// segment from the right, then word n-grams from longest to shortest
    /// (left to right within a length). The first hit wins.
    pub fn resolve(&self, query: &str) -> Option<GazetteerMatch> {
        let key = normalize_text(query, true);
        if key.is_empty() {
            return None;
        }
        let hit = |k: &str| {
            self.entries.get(k).map(|e| GazetteerMatch {
                country: e.country.clone(),
                key: k.to_string(),
            })
        };
        if let Some(m) = hit(&key) {
            return Some(m);
        }
        let segments: Vec<&str> = key
            .split(SEGMENT_SEPARATORS)
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .collect();
        if segments.len() > 1 {
            if let Some(m) = segments.iter().rev().find_map(|s| hit(s)) {
                return Some(m);
            }
        }
        let tokens: Vec<&str> = key
            .split(|c: char| c.is_whitespace() || SEGMENT_SEPARATORS.contains(&c))
            .map(|t| t.trim_matches(|c: char| !c.is_alphanumeric()))
            .filter(|t| !t.is_empty())
            .collect();
        for n in (1..=tokens.len()).rev() {
            for window in tokens.windows(n) {
                let candidate = window.join(" ");
                if candidate.chars().count() < MIN_PARTIAL_CHARS {
                    continue;
                }
                if let Some(m) = hit(&candidate) {
                    return Some(m);
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    #[test]
    fn two_line_file() {
        let g = Gazetteer::parse("enschede\tNL\nparis\tFR\n", "t").unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.get("paris").unwrap().country, code("FR"));
        assert_eq!(g.get("paris").unwrap().provenance, "t:2");
    }

    #[test]
    fn conflicting_duplicate_rejected() {
        let err = Gazetteer::parse("paris\tFR\nparis\tUS\n", "t").unwrap_err();
        assert!(matches!(
            err,
            GazetteerError::ConflictingEntry { line: 2, .. }
        ));
    }

    #[test]
    fn agreeing_duplicate_and_comments_accepted() {
        let g = Gazetteer::parse("# header\nParis\tFR\n\n  paris \tfr\tmanual\n", "t").unwrap();
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn empty_file_misses_everything() {
        let g = Gazetteer::parse("", "t").unwrap();
        assert!(g.is_empty());
        assert_eq!(g.resolve("Amsterdam"), None);
    }

    #[test]
    fn malformed_lines_rejected() {
        assert!(Gazetteer::parse("paris\n", "t").is_err());
        assert!(Gazetteer::parse("paris\tFRA\n", "t").is_err());
        assert!(Gazetteer::parse("nowhere\tZZ\n", "t").is_err());
    }

    #[test]
    fn partial_matching_order() {
        let g = Gazetteer::parse(
            "new york\tUS\nyork\tGB\namsterdam, nl\tNL\namsterdam\tNL\nin\tIN\nlondon\tGB\n",
            "t",
        )
        .unwrap();
        assert_eq!(g.resolve("Amazing New York").unwrap().country, code("US"));
        assert_eq!(g.resolve("Amsterdam, NL").unwrap().key, "amsterdam, nl");
        assert_eq!(g.resolve("living in London!").unwrap().country, code("GB"));
        assert_eq!(g.resolve("in").unwrap().country, code("IN"));
        assert_eq!(g.resolve("   "), None);
    }

    #[test]
    fn bundled_table_resolves_examples() {
        let g = Gazetteer::bundled();
        assert!(g.len() > 10_000);
        assert_eq!(g.resolve("Awesome Enschede").unwrap().country, code("NL"));
        assert_eq!(g.resolve("Amazing New York").unwrap().country, code("US"));
        assert_eq!(g.resolve("Amsterdam, NL").unwrap().country, code("NL"));
        assert_eq!(g.resolve("on the moon"), None);
        assert_eq!(g.resolve("everywhere"), None);
        assert!(g.entries.values().all(|e| !e.country.is_other()));
    }
}
