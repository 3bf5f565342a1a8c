use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tweet::CountryLabel;

const EUROPE: &str = include_str!("../../data/regions/europe.txt");

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("failed to read region file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("region file line {line}: {reason}")]
    BadLine { line: usize, reason: String },
    #[error("region is empty")]
    Empty,
}

/// A named set of country codes. Everything outside collapses to `ZZ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Region {
    pub name: String,
    codes: BTreeSet<CountryLabel>,
    digest: String,
}

impl Region {
    pub fn europe() -> Self {
        Self::parse("europe", EUROPE).expect("bundled region file is valid")
    }

    /// Resolves a preset name (`europe`) or a path to a region file.
    pub fn from_name_or_path(spec: &str) -> Result<Self, RegionError> {
        if spec.eq_ignore_ascii_case("europe") {
            Ok(Self::europe())
        } else {
            Self::load(spec)
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegionError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| RegionError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let name = path.file_stem().map_or_else(
            || path.display().to_string(),
            |s| s.to_string_lossy().into_owned(),
        );
        Self::parse(&name, &text)
    }

    /// One alpha-2 code per line; `#` starts a comment.
    pub fn parse(name: &str, text: &str) -> Result<Self, RegionError> {
        let mut codes = BTreeSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let code = CountryLabel::new(line).map_err(|e| RegionError::BadLine {
                line: idx + 1,
                reason: e.to_string(),
            })?;
            if code.is_other() {
                return Err(RegionError::BadLine {
                    line: idx + 1,
                    reason: "ZZ cannot be a region member".into(),
                });
            }
            codes.insert(code);
        }
        Self::from_codes(name, codes, Some(text))
    }

    pub fn from_codes(
        name: &str,
        codes: BTreeSet<CountryLabel>,
        source_text: Option<&str>,
    ) -> Result<Self, RegionError> {
        if codes.is_empty() {
            return Err(RegionError::Empty);
        }
        let mut h = Sha256::new();
        match source_text {
            Some(text) => h.update(text.as_bytes()),
            None => codes.iter().for_each(|c| h.update(c.as_str().as_bytes())),
        }
        Ok(Self {
            name: name.to_string(),
            codes,
            digest: format!("{:x}", h.finalize()),
        })
    }

    pub fn contains(&self, label: &CountryLabel) -> bool {
        self.codes.contains(label)
    }

    pub fn codes(&self) -> impl Iterator<Item = &CountryLabel> {
        self.codes.iter()
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    /// Hex SHA-256 of the region file contents.
    pub fn digest(&self) -> &str {
        &self.digest
    }
}

pub fn collapse_label(label: &CountryLabel, region: &Region) -> CountryLabel {
    if region.contains(label) {
        label.clone()
    } else {
        CountryLabel::other()
    }
}

/// Replaces every label outside `region` with `ZZ`.
pub fn collapse_region(labels: &[CountryLabel], region: &Region) -> Vec<CountryLabel> {
    labels.iter().map(|l| collapse_label(l, region)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn l(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    #[test]
    fn europe_examples() {
        let eu = Region::europe();
        assert_eq!(collapse_label(&l("NL"), &eu), l("NL"));
        assert_eq!(collapse_label(&l("US"), &eu), CountryLabel::other());
        let once = collapse_region(&[l("NL"), l("US"), l("ZZ")], &eu);
        assert_eq!(collapse_region(&once, &eu), once);
    }

    #[test]
    fn region_file_errors() {
        assert!(matches!(
            Region::parse("x", "# nothing\n"),
            Err(RegionError::Empty)
        ));
        assert!(Region::parse("x", "NL\nZZ\n").is_err());
        assert!(Region::parse("x", "NLD\n").is_err());
        let r = Region::parse("x", "nl # Netherlands\nBE\n").unwrap();
        assert_eq!(r.len(), 2);
        assert!(r.contains(&l("NL")));
    }

    #[test]
    fn digest_tracks_contents() {
        let a = Region::parse("x", "NL\n").unwrap();
        let b = Region::parse("x", "NL\nBE\n").unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
