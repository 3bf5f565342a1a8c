//! Forward and reverse geocoding down to country level.
//!
//! Lookups go cache first, then local data (gazetteer for place names, the
//! bundled settlement points for coordinates), then an optional remote
//! backend. Every outcome except a remote failure is written to the cache.

mod cache;
mod gazetteer;
mod points;
pub mod remote;

use std::collections::HashSet;
use std::sync::{Condvar, Mutex};

use thiserror::Error;

pub use cache::{CacheEntry, CacheError, CacheKey, CacheStats, GeocodeCache, Outcome, Source};
pub use gazetteer::{Gazetteer, GazetteerEntry, GazetteerError, GazetteerMatch};
pub use points::{haversine_km, PointIndex, DEFAULT_MAX_DISTANCE_KM};
pub use remote::{RemoteError, RemoteGeocoder};

use crate::features::Geoparser;
use crate::tweet::{Coordinates, CountryLabel, ReverseResolver};

#[derive(Debug, Error)]
pub enum GeocodeError {
    #[error("empty geocoding query")]
    InvalidQuery,
    #[error("coordinates out of range: lat={lat} lon={lon}")]
    InvalidCoordinates { lat: f64, lon: f64 },
    #[error(transparent)]
    RemoteUnavailable(#[from] RemoteError),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

/// Limits concurrent resolutions and serializes resolutions of one key.
#[derive(Debug)]
struct Gate {
    active: Mutex<HashSet<CacheKey>>,
    freed: Condvar,
    max_in_flight: usize,
}

struct GateGuard<'a> {
    gate: &'a Gate,
    key: CacheKey,
}

impl Gate {
    fn new(max_in_flight: usize) -> Self {
        Self {
            active: Mutex::new(HashSet::new()),
            freed: Condvar::new(),
            max_in_flight: max_in_flight.max(1),
        }
    }

    fn enter(&self, key: &CacheKey) -> GateGuard<'_> {
        let mut active = self.active.lock().expect("gate lock");
        while active.len() >= self.max_in_flight || active.contains(key) {
            active = self.freed.wait(active).expect("gate lock");
        }
        active.insert(key.clone());
        GateGuard {
            gate: self,
            key: key.clone(),
        }
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        self.gate
            .active
            .lock()
            .expect("gate lock")
            .remove(&self.key);
        self.gate.freed.notify_all();
    }
}

pub struct Geocoder {
    gazetteer: Gazetteer,
    points: PointIndex,
    remote: Option<Box<dyn RemoteGeocoder>>,
    cache: GeocodeCache,
    gate: Gate,
}

impl Geocoder {
    /// Offline geocoder over the given tables with an in-memory cache.
    pub fn new(gazetteer: Gazetteer, points: PointIndex) -> Self {
        Self {
            gazetteer,
            points,
            remote: None,
            cache: GeocodeCache::in_memory(),
            gate: Gate::new(1),
        }
    }

    /// Bundled gazetteer and reverse points, no remote backend.
    pub fn bundled() -> Self {
        Self::new(Gazetteer::bundled(), PointIndex::bundled())
    }

    pub fn with_remote(mut self, remote: Box<dyn RemoteGeocoder>) -> Self {
        self.remote = Some(remote);
        self
    }

    pub fn with_cache(mut self, cache: GeocodeCache) -> Self {
        self.cache = cache;
        self
    }

    /// Maximum number of resolutions (local or remote) running at once.
    /// Defaults to 1.
    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.gate = Gate::new(n);
        self
    }

    pub fn cache(&self) -> &GeocodeCache {
        &self.cache
    }

    pub fn gazetteer(&self) -> &Gazetteer {
        &self.gazetteer
    }

    pub fn cache_stats(&self) -> CacheStats {
        self.cache.stats()
    }

    fn lookup_or_resolve(
        &self,
        key: CacheKey,
        resolve: impl FnOnce() -> Result<(Outcome, Source), GeocodeError>,
    ) -> Result<Option<CountryLabel>, GeocodeError> {
        if let Some(hit) = self.cache.peek(&key) {
            self.cache.record(true);
            return Ok(hit.outcome.country().cloned());
        }
        let _guard = self.gate.enter(&key);
        // Another worker may have resolved this key while we waited.
        if let Some(hit) = self.cache.peek(&key) {
            self.cache.record(true);
            return Ok(hit.outcome.country().cloned());
        }
        self.cache.record(false);
        let (outcome, source) = resolve()?;
        let entry = self.cache.insert(key, outcome, source)?;
        Ok(entry.outcome.country().cloned())
    }

    /// Resolves a free-text location to a country.
    pub fn forward_geocode(&self, query: &str) -> Result<Option<CountryLabel>, GeocodeError> {
        if query.trim().is_empty() {
            return Err(GeocodeError::InvalidQuery);
        }
        self.lookup_or_resolve(CacheKey::Forward(query.to_string()), || {
            if let Some(m) = self.gazetteer.resolve(query) {
                return Ok((Outcome::Found(m.country), Source::Gazetteer));
            }
            match &self.remote {
                Some(remote) => Ok((
                    remote
                        .forward(query)?
                        .map_or(Outcome::Negative, Outcome::Found),
                    Source::Remote,
                )),
                None => Ok((Outcome::Negative, Source::Gazetteer)),
            }
        })
    }

    /// Resolves coordinates to the country containing them.
    pub fn reverse_geocode(
        &self,
        lat: f64,
        lon: f64,
    ) -> Result<Option<CountryLabel>, GeocodeError> {
        if Coordinates::new(lon, lat).is_none() {
            return Err(GeocodeError::InvalidCoordinates { lat, lon });
        }
        self.lookup_or_resolve(CacheKey::reverse(lat, lon), || {
            if let Some((country, _)) = self.points.nearest(lat, lon) {
                return Ok((Outcome::Found(country), Source::Gazetteer));
            }
            match &self.remote {
                Some(remote) => Ok((
                    remote
                        .reverse(lat, lon)?
                        .map_or(Outcome::Negative, Outcome::Found),
                    Source::Remote,
                )),
                None => Ok((Outcome::Negative, Source::Gazetteer)),
            }
        })
    }
}

impl Geoparser for Geocoder {
    fn geoparse(&self, raw_location: &str) -> Result<Option<CountryLabel>, String> {
        self.forward_geocode(raw_location)
            .map_err(|e| e.to_string())
    }
}

impl ReverseResolver for Geocoder {
    fn country_at(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, String> {
        self.reverse_geocode(lat, lon).map_err(|e| e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::remote::StubRemote;
    use super::*;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn code(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    fn small_gazetteer() -> Gazetteer {
        Gazetteer::parse("amsterdam, nl\tNL\nnew york\tUS\nenschede\tNL\n", "t").unwrap()
    }

    fn with_stub(stub: &Arc<StubRemote>) -> Geocoder {
        Geocoder::new(small_gazetteer(), PointIndex::bundled()).with_remote(Box::new(stub.clone()))
    }

    #[test]
    fn forward_examples() {
        let stub = Arc::new(StubRemote::new());
        let g = with_stub(&stub);
        assert_eq!(
            g.forward_geocode("Amazing New York").unwrap(),
            Some(code("US"))
        );
        assert_eq!(
            g.forward_geocode("Amsterdam, NL").unwrap(),
            Some(code("NL"))
        );
        assert_eq!(stub.forward_calls(), 0);
        let hit = g
            .cache()
            .peek(&CacheKey::Forward("Amsterdam, NL".into()))
            .unwrap();
        assert_eq!(hit.source, Source::Gazetteer);

        assert_eq!(g.forward_geocode("on the moon").unwrap(), None);
        assert_eq!(stub.forward_calls(), 1);
        let neg = g
            .cache()
            .peek(&CacheKey::Forward("on the moon".into()))
            .unwrap();
        assert_eq!(
            (neg.outcome, neg.source),
            (Outcome::Negative, Source::Remote)
        );
        assert_eq!(g.cache_stats().negatives, 1);
    }

    #[test]
    fn repeated_query_consults_remote_once() {
        let stub = Arc::new(StubRemote::new().with_forward("Leiden", "NL"));
        let g = with_stub(&stub);
        assert_eq!(g.forward_geocode("Leiden").unwrap(), Some(code("NL")));
        assert_eq!(g.forward_geocode("Leiden").unwrap(), Some(code("NL")));
        assert_eq!(stub.forward_calls(), 1);
        let s = g.cache_stats();
        assert_eq!((s.hits, s.misses), (1, 1));
    }

    #[test]
    fn remote_failure_is_not_cached() {
        let stub = Arc::new(StubRemote::failing());
        let g = with_stub(&stub);
        assert!(matches!(
            g.forward_geocode("Leiden"),
            Err(GeocodeError::RemoteUnavailable(_))
        ));
        assert!(g.cache().is_empty());
        assert!(g.forward_geocode("Leiden").is_err());
        assert_eq!(stub.forward_calls(), 2);
        // Local hits still work with a broken remote.
        assert_eq!(g.forward_geocode("Enschede").unwrap(), Some(code("NL")));
    }

    #[test]
    fn invalid_inputs() {
        let g = Geocoder::bundled();
        assert!(matches!(
            g.forward_geocode("  "),
            Err(GeocodeError::InvalidQuery)
        ));
        assert!(matches!(
            g.reverse_geocode(91.0, 0.0),
            Err(GeocodeError::InvalidCoordinates { .. })
        ));
    }

    #[test]
    fn reverse_examples() {
        let stub = Arc::new(StubRemote::new());
        let g = with_stub(&stub);
        assert_eq!(
            g.reverse_geocode(52.1674, 4.4843).unwrap(),
            Some(code("NL"))
        );
        assert_eq!(g.reverse_geocode(40.71, -74.00).unwrap(), Some(code("US")));
        assert_eq!(stub.reverse_calls(), 0);
        assert_eq!(g.reverse_geocode(0.0, 0.0).unwrap(), None);
        assert_eq!(stub.reverse_calls(), 1);
        assert_eq!(g.reverse_geocode(0.0, 0.0).unwrap(), None);
        assert_eq!(stub.reverse_calls(), 1);
    }

    #[test]
    fn offline_reverse_miss_is_negative() {
        let g = Geocoder::bundled();
        assert_eq!(g.reverse_geocode(0.0, 0.0).unwrap(), None);
        let e = g.cache().peek(&CacheKey::reverse(0.0, 0.0)).unwrap();
        assert_eq!(
            (e.outcome, e.source),
            (Outcome::Negative, Source::Gazetteer)
        );
    }

    #[test]
    fn concurrent_identical_queries_resolve_once() {
        let stub = Arc::new(StubRemote::new().with_forward("Leiden", "NL"));
        let g = Arc::new(with_stub(&stub).with_max_in_flight(4));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let g = g.clone();
                s.spawn(move || assert_eq!(g.forward_geocode("Leiden").unwrap(), Some(code("NL"))));
            }
        });
        assert_eq!(stub.forward_calls(), 1);
    }

    proptest! {
        #[test]
        fn nearby_points_share_a_cache_entry(
            lat_e4 in -800_000i64..800_000,
            lon_e4 in -1_700_000i64..1_700_000,
            dlat in -0.49f64..0.49,
            dlon in -0.49f64..0.49,
        ) {
            let (lat, lon) = (lat_e4 as f64 / 1e4, lon_e4 as f64 / 1e4);
            let g = Geocoder::new(Gazetteer::empty(), PointIndex::empty());
            g.reverse_geocode(lat, lon).unwrap();
            g.reverse_geocode(lat + dlat * 1e-4, lon + dlon * 1e-4).unwrap();
            prop_assert_eq!(g.cache().len(), 1);
        }
    }
}
