use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};

use serde::Serialize;
use thiserror::Error;

use crate::tweet::CountryLabel;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Found(CountryLabel),
    Negative,
}

impl Outcome {
    pub fn country(&self) -> Option<&CountryLabel> {
        match self {
            Outcome::Found(c) => Some(c),
            Outcome::Negative => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Gazetteer,
    Remote,
}

impl Source {
    fn as_str(self) -> &'static str {
        match self {
            Source::Gazetteer => "gazetteer",
            Source::Remote => "remote",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheEntry {
    pub outcome: Outcome,
    pub source: Source,
    pub timestamp: String,
}

/// Cache key. Forward queries are stored verbatim; reverse lookups by
/// coordinates rounded to four decimals.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum CacheKey {
    Forward(String),
    Reverse { lat_e4: i64, lon_e4: i64 },
}

impl CacheKey {
    pub fn reverse(lat: f64, lon: f64) -> Self {
        let round = |v: f64| (v * 1e4).round() as i64;
        CacheKey::Reverse {
            lat_e4: round(lat),
            lon_e4: round(lon),
        }
    }

    /// Query column of the cache file.
    fn encode(&self) -> String {
        match self {
            CacheKey::Forward(q) => {
                let mut out = String::with_capacity(q.len());
                if q.starts_with('@') {
                    out.push('\\');
                }
                for c in q.chars() {
                    match c {
                        '\\' => out.push_str("\\\\"),
                        '\t' => out.push_str("\\t"),
                        '\n' => out.push_str("\\n"),
                        '\r' => out.push_str("\\r"),
                        c => out.push(c),
                    }
                }
                out
            }
            CacheKey::Reverse { lat_e4, lon_e4 } => {
                format!("@{},{}", fixed4(*lat_e4), fixed4(*lon_e4))
            }
        }
    }

    fn decode(s: &str) -> Option<Self> {
        if let Some(rest) = s.strip_prefix('@') {
            let (lat, lon) = rest.split_once(',')?;
            return Some(CacheKey::Reverse {
                lat_e4: parse_fixed4(lat)?,
                lon_e4: parse_fixed4(lon)?,
            });
        }
        let mut out = String::with_capacity(s.len());
        let mut chars = s.chars();
        while let Some(c) = chars.next() {
            if c != '\\' {
                out.push(c);
                continue;
            }
            match chars.next()? {
                '\\' => out.push('\\'),
                't' => out.push('\t'),
                'n' => out.push('\n'),
                'r' => out.push('\r'),
                '@' => out.push('@'),
                _ => return None,
            }
        }
        Some(CacheKey::Forward(out))
    }
}

fn fixed4(v: i64) -> String {
    let sign = if v < 0 { "-" } else { "" };
    let a = v.unsigned_abs();
    format!("{sign}{}.{:04}", a / 10_000, a % 10_000)
}

fn parse_fixed4(s: &str) -> Option<i64> {
    let v: f64 = s.parse().ok()?;
    Some((v * 1e4).round() as i64)
}

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
    #[error("cache file {path} line {line}: {reason}")]
    BadLine {
        path: String,
        line: usize,
        reason: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct CacheStats {
    pub entries: usize,
    pub positives: usize,
    pub negatives: usize,
    pub hits: u64,
    pub misses: u64,
}

/// Persistent geocoding cache backed by an append-only TSV file.
///
/// Reads take a shared lock; writes are serialized and appended to the file
/// before the in-memory map is updated.
#[derive(Debug, Default)]
pub struct GeocodeCache {
    entries: RwLock<HashMap<CacheKey, CacheEntry>>,
    file: Option<Mutex<File>>,
    path: Option<PathBuf>,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl GeocodeCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a cache file. The last line per key wins.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, CacheError> {
        let path = path.as_ref();
        let io_err = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let entries = if path.exists() {
            read_entries(path)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(io_err)?;
        Ok(Self {
            entries: RwLock::new(entries),
            file: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
            ..Default::default()
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Looks up a key without touching the hit/miss counters.
    pub fn peek(&self, key: &CacheKey) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn get(&self, key: &CacheKey) -> Option<CacheEntry> {
        let found = self.peek(key);
        self.record(found.is_some());
        found
    }

    pub(crate) fn record(&self, hit: bool) {
        let counter = if hit { &self.hits } else { &self.misses };
        counter.fetch_add(1, Ordering::Relaxed);
    }

    pub fn insert(
        &self,
        key: CacheKey,
        outcome: Outcome,
        source: Source,
    ) -> Result<CacheEntry, CacheError> {
        let entry = CacheEntry {
            outcome,
            source,
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
        };
        let mut map = self.entries.write().expect("cache lock");
        if let (Some(file), Some(path)) = (&self.file, &self.path) {
            let mut f = file.lock().expect("cache file lock");
            writeln!(f, "{}", format_line(&key, &entry)).map_err(|source| CacheError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        map.insert(key, entry.clone());
        Ok(entry)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn stats(&self) -> CacheStats {
        let map = self.entries.read().expect("cache lock");
        let negatives = map
            .values()
            .filter(|e| e.outcome == Outcome::Negative)
            .count();
        CacheStats {
            entries: map.len(),
            positives: map.len() - negatives,
            negatives,
            hits: self.hits.load(Ordering::Relaxed),
            misses: self.misses.load(Ordering::Relaxed),
        }
    }

    /// Rewrites the backing file with one line per key, sorted by key.
    pub fn compact(&self) -> Result<usize, CacheError> {
        let Some(path) = &self.path else {
            return Ok(self.len());
        };
        let map = self.entries.write().expect("cache lock");
        let mut lines: Vec<String> = map.iter().map(|(k, e)| format_line(k, e)).collect();
        lines.sort();
        let tmp = path.with_extension("compact.tmp");
        let io_err = |source| CacheError::Io {
            path: path.display().to_string(),
            source,
        };
        let mut body = lines.join("\n");
        if !body.is_empty() {
            body.push('\n');
        }
        fs::write(&tmp, body).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)?;
        if let Some(file) = &self.file {
            let reopened = OpenOptions::new().append(true).open(path).map_err(io_err)?;
            *file.lock().expect("cache file lock") = reopened;
        }
        Ok(lines.len())
    }
}

fn format_line(key: &CacheKey, entry: &CacheEntry) -> String {
    let outcome = match &entry.outcome {
        Outcome::Found(c) => c.as_str(),
        Outcome::Negative => "-",
    };
    format!(
        "{}\t{}\t{}\t{}",
        key.encode(),
        outcome,
        entry.source.as_str(),
        entry.timestamp
    )
}

fn read_entries(path: &Path) -> Result<HashMap<CacheKey, CacheEntry>, CacheError> {
    let file = File::open(path).map_err(|source| CacheError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let bad = |line: usize, reason: &str| CacheError::BadLine {
        path: path.display().to_string(),
        line,
        reason: reason.to_string(),
    };
    let mut map = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CacheError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let [query, outcome, source, timestamp] = cols[..] else {
            return Err(bad(idx + 1, "expected 4 tab-separated columns"));
        };
        let key = CacheKey::decode(query).ok_or_else(|| bad(idx + 1, "bad query encoding"))?;
        let outcome = match outcome {
            "-" => Outcome::Negative,
            code => {
                Outcome::Found(CountryLabel::new(code).map_err(|e| bad(idx + 1, &e.to_string()))?)
            }
        };
        let source = match source {
            "gazetteer" => Source::Gazetteer,
            "remote" => Source::Remote,
            _ => return Err(bad(idx + 1, "source must be gazetteer or remote")),
        };
        map.insert(
            key,
            CacheEntry {
                outcome,
                source,
                timestamp: timestamp.to_string(),
            },
        );
    }
    Ok(map)
}
