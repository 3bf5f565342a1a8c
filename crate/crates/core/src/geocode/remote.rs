//! Remote geocoding backends.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use crate::tweet::CountryLabel;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RemoteError {
    #[error("remote geocoder unavailable: {0}")]
    Unavailable(String),
    #[error("remote geocoder rejected credentials: {0}")]
    Auth(String),
    #[error("remote geocoder rate limited")]
    RateLimited,
    #[error("unexpected remote response: {0}")]
    BadResponse(String),
}

/// A remote geocoding service reduced to country resolution.
///
/// Adapters own their rate limiting; the caller bounds concurrency.
pub trait RemoteGeocoder: Send + Sync {
    fn forward(&self, query: &str) -> Result<Option<CountryLabel>, RemoteError>;
    fn reverse(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, RemoteError>;
}

/// Deterministic in-memory backend that counts its calls.
#[derive(Debug, Default)]
pub struct StubRemote {
    forward: HashMap<String, CountryLabel>,
    reverse: Vec<((f64, f64), CountryLabel)>,
    fail: bool,
    forward_calls: AtomicUsize,
    reverse_calls: AtomicUsize,
}

impl StubRemote {
    pub fn new() -> Self {
        Self::default()
    }

    /// A stub whose every call fails as unavailable.
    pub fn failing() -> Self {
        Self {
            fail: true,
            ..Self::default()
        }
    }

    pub fn with_forward(mut self, query: &str, country: &str) -> Self {
        self.forward.insert(
            query.to_string(),
            CountryLabel::new(country).expect("valid code"),
        );
        self
    }

    /// Answers reverse queries within 0.5 degrees of `(lat, lon)`.
    pub fn with_reverse(mut self, lat: f64, lon: f64, country: &str) -> Self {
        self.reverse
            .push(((lat, lon), CountryLabel::new(country).expect("valid code")));
        self
    }

    pub fn forward_calls(&self) -> usize {
        self.forward_calls.load(Ordering::SeqCst)
    }

    pub fn reverse_calls(&self) -> usize {
        self.reverse_calls.load(Ordering::SeqCst)
    }
}

impl RemoteGeocoder for StubRemote {
    fn forward(&self, query: &str) -> Result<Option<CountryLabel>, RemoteError> {
        self.forward_calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            return Err(RemoteError::Unavailable("stub configured to fail".into()));
        }
        Ok(self.forward.get(query).cloned())
    }

    fn reverse(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, RemoteError> {
        self.reverse_calls.fetch_add(1, Ordering::SeqCst);
        if self.fail {
            return Err(RemoteError::Unavailable("stub configured to fail".into()));
        }
        Ok(self
            .reverse
            .iter()
            .find(|((a, b), _)| (a - lat).abs() <= 0.5 && (b - lon).abs() <= 0.5)
            .map(|(_, c)| c.clone()))
    }
}

impl<T: RemoteGeocoder + ?Sized> RemoteGeocoder for std::sync::Arc<T> {
    fn forward(&self, query: &str) -> Result<Option<CountryLabel>, RemoteError> {
        (**self).forward(query)
    }

    fn reverse(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, RemoteError> {
        (**self).reverse(lat, lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemoteConfig {
    pub base_url: String,
    /// Sent as the `key` query parameter when set.
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub user_agent: String,
}

impl RemoteConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            timeout: Duration::from_secs(10),
            user_agent: concat!("tweet-country/", env!("CARGO_PKG_VERSION")).to_string(),
        }
    }
}

/// Adapter for Nominatim-compatible `/search` and `/reverse` endpoints
/// (`format=jsonv2`, `addressdetails=1`).
pub struct NominatimClient {
    agent: ureq::Agent,
    config: RemoteConfig,
}

impl NominatimClient {
    pub fn new(config: RemoteConfig) -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(config.timeout)
            .user_agent(&config.user_agent)
            .build();
        Self { agent, config }
    }

    fn get(&self, endpoint: &str, params: &[(&str, String)]) -> Result<Value, RemoteError> {
        let url = format!(
            "{}/{}",
            self.config.base_url.trim_end_matches('/'),
            endpoint
        );
        let mut req = self
            .agent
            .get(&url)
            .query("format", "jsonv2")
            .query("addressdetails", "1");
        for (k, v) in params {
            req = req.query(k, v);
        }
        if let Some(key) = &self.config.api_key {
            req = req.query("key", key);
        }
        match req.call() {
            Ok(resp) => resp
                .into_json::<Value>()
                .map_err(|e| RemoteError::BadResponse(e.to_string())),
            Err(ureq::Error::Status(401 | 403, _)) => Err(RemoteError::Auth(url)),
            Err(ureq::Error::Status(429, _)) => Err(RemoteError::RateLimited),
            Err(e) => Err(RemoteError::Unavailable(e.to_string())),
        }
    }
}

impl RemoteGeocoder for NominatimClient {
    fn forward(&self, query: &str) -> Result<Option<CountryLabel>, RemoteError> {
        let body = self.get("search", &[("q", query.to_string()), ("limit", "1".into())])?;
        parse_search_response(&body)
    }

    fn reverse(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, RemoteError> {
        let body = self.get(
            "reverse",
            &[("lat", lat.to_string()), ("lon", lon.to_string())],
        )?;
        parse_reverse_response(&body)
    }
}

fn country_of_place(place: &Value) -> Result<Option<CountryLabel>, RemoteError> {
    match place
        .pointer("/address/country_code")
        .and_then(Value::as_str)
    {
        Some(code) => CountryLabel::new(code)
            .map(Some)
            .map_err(|e| RemoteError::BadResponse(e.to_string())),
        None => Ok(None),
    }
}

/// `/search` returns an array of places, best first.
pub fn parse_search_response(body: &Value) -> Result<Option<CountryLabel>, RemoteError> {
    let places = body
        .as_array()
        .ok_or_else(|| RemoteError::BadResponse("search response is not an array".into()))?;
    match places.first() {
        Some(place) => country_of_place(place),
        None => Ok(None),
    }
}

/// `/reverse` returns a single place, or `{"error": ...}` when nothing is
/// there.
pub fn parse_reverse_response(body: &Value) -> Result<Option<CountryLabel>, RemoteError> {
    if body.get("error").is_some() {
        return Ok(None);
    }
    if !body.is_object() {
        return Err(RemoteError::BadResponse(
            "reverse response is not an object".into(),
        ));
    }
    country_of_place(body)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn search_response_parsing() {
        let body = json!([{"display_name": "New York", "address": {"country_code": "us"}}]);
        assert_eq!(
            parse_search_response(&body).unwrap(),
            Some(CountryLabel::new("US").unwrap())
        );
        assert_eq!(parse_search_response(&json!([])).unwrap(), None);
        assert!(parse_search_response(&json!({"x": 1})).is_err());
    }

    #[test]
    fn reverse_response_parsing() {
        let body = json!({"address": {"country_code": "nl", "city": "Leiden"}});
        assert_eq!(
            parse_reverse_response(&body).unwrap(),
            Some(CountryLabel::new("NL").unwrap())
        );
        assert_eq!(
            parse_reverse_response(&json!({"error": "Unable to geocode"})).unwrap(),
            None
        );
        assert!(parse_reverse_response(&json!({"address": {"country_code": "xyz"}})).is_err());
    }

    #[test]
    fn unreachable_server_is_unavailable() {
        let mut cfg = RemoteConfig::new("http://127.0.0.1:9");
        cfg.timeout = Duration::from_millis(500);
        let client = NominatimClient::new(cfg);
        assert!(matches!(
            client.forward("Leiden"),
            Err(RemoteError::Unavailable(_))
        ));
    }

    #[test]
    fn stub_counts_calls() {
        let stub = StubRemote::new()
            .with_forward("Leiden", "NL")
            .with_reverse(52.0, 4.5, "NL");
        assert_eq!(stub.forward("Leiden").unwrap().unwrap().as_str(), "NL");
        assert_eq!(stub.forward("nowhere").unwrap(), None);
        assert_eq!(stub.reverse(52.2, 4.4).unwrap().unwrap().as_str(), "NL");
        assert_eq!((stub.forward_calls(), stub.reverse_calls()), (2, 1));
        assert!(StubRemote::failing().forward("x").is_err());
    }
}
