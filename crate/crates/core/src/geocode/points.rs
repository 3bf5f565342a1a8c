use std::collections::HashMap;

use crate::tweet::CountryLabel;

const BUNDLED: &str = include_str!("../../data/reverse_points.tsv");

pub const DEFAULT_MAX_DISTANCE_KM: f64 = 100.0;

const EARTH_RADIUS_KM: f64 = 6371.0088;
const KM_PER_DEGREE: f64 = 111.19;

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone)]
struct Point {
    lat: f64,
    lon: f64,
    country: CountryLabel,
}

/// Nearest-settlement reverse lookup over a fixed point set, bucketed on a
/// one-degree grid. Points farther than `max_km` never match, so open ocean
/// resolves to nothing.
#[derive(Debug, Clone)]
pub struct PointIndex {
    points: Vec<Point>,
    cells: HashMap<(i32, i32), Vec<u32>>,
    max_km: f64,
}

fn cell_of(lat: f64, lon: f64) -> (i32, i32) {
    (lat.floor() as i32, lon.floor() as i32)
}

impl PointIndex {
    pub fn bundled() -> Self {
        Self::parse(BUNDLED).expect("bundled reverse points are valid")
    }

    pub fn empty() -> Self {
        Self::from_points(Vec::new())
    }

    /// Parses `lat<TAB>lon<TAB>alpha2` lines; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut points = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            let [lat, lon, cc] = cols[..] else {
                return Err(format!("line {}: expected lat<TAB>lon<TAB>alpha2", idx + 1));
            };
            let lat: f64 = lat.parse().map_err(|e| format!("line {}: {e}", idx + 1))?;
            let lon: f64 = lon.parse().map_err(|e| format!("line {}: {e}", idx + 1))?;
            let country = CountryLabel::new(cc).map_err(|e| format!("line {}: {e}", idx + 1))?;
            points.push((lat, lon, country));
        }
        Ok(Self::from_points(points))
    }

    pub fn from_points(points: Vec<(f64, f64, CountryLabel)>) -> Self {
        let mut cells: HashMap<(i32, i32), Vec<u32>> = HashMap::new();
        let points: Vec<Point> = points
            .into_iter()
            .map(|(lat, lon, country)| Point { lat, lon, country })
            .collect();
        for (i, p) in points.iter().enumerate() {
            cells
                .entry(cell_of(p.lat, p.lon))
                .or_default()
                .push(i as u32);
        }
        Self {
            points,
            cells,
            max_km: DEFAULT_MAX_DISTANCE_KM,
        }
    }

    pub fn with_max_distance_km(mut self, km: f64) -> Self {
        self.max_km = km;
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Country of the nearest point within the distance cutoff, with the
    /// distance in km. Ties go to the earlier point in input order.
    pub fn nearest(&self, lat: f64, lon: f64) -> Option<(CountryLabel, f64)> {
        let lat_span = (self.max_km / KM_PER_DEGREE).ceil() as i32 + 1;
        let (clat, clon) = cell_of(lat, lon);
        let lat_lo = (clat - lat_span).max(-91);
        let lat_hi = (clat + lat_span).min(90);
        let widest = lat_lo.unsigned_abs().max(lat_hi.unsigned_abs() + 1).min(90) as f64;
        let cos = widest.to_radians().cos();
        let lon_span = if cos < 0.02 {
            180
        } else {
            ((self.max_km / (KM_PER_DEGREE * cos)).ceil() as i32 + 1).min(180)
        };

        let mut best: Option<(u32, f64)> = None;
        for la in lat_lo..=lat_hi {
            for dlo in -lon_span..=lon_span {
                let mut lo = clon + dlo;
                if lo < -180 {
                    lo += 360;
                } else if lo >= 180 {
                    lo -= 360;
                }
                let Some(ids) = self.cells.get(&(la, lo)) else {
                    continue;
                };
                for &id in ids {
                    let p = &self.points[id as usize];
                    let d = haversine_km(lat, lon, p.lat, p.lon);
                    let better = match best {
                        None => true,
                        Some((bid, bd)) => d < bd || (d == bd && id < bid),
                    };
                    if better {
                        best = Some((id, d));
                    }
                }
            }
        }
        best.filter(|(_, d)| *d <= self.max_km)
            .map(|(id, d)| (self.points[id as usize].country.clone(), d))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn code(c: &str) -> CountryLabel {
        CountryLabel::new(c).unwrap()
    }

    #[test]
    fn haversine_known_distance() {
        // Amsterdam to Paris is roughly 430 km.
        let d = haversine_km(52.3676, 4.9041, 48.8566, 2.3522);
        assert!((d - 430.0).abs() < 5.0, "{d}");
        assert_eq!(haversine_km(10.0, 20.0, 10.0, 20.0), 0.0);
    }

    #[test]
    fn bundled_points_resolve_examples() {
        let idx = PointIndex::bundled();
        assert!(idx.len() > 10_000);
        assert_eq!(idx.nearest(52.1674, 4.4843).unwrap().0, code("NL"));
        assert_eq!(idx.nearest(40.71, -74.00).unwrap().0, code("US"));
        assert_eq!(idx.nearest(0.0, 0.0), None);
        assert_eq!(idx.nearest(51.5074, -0.1278).unwrap().0, code("GB"));
        assert_eq!(idx.nearest(-33.8688, 151.2093).unwrap().0, code("AU"));
    }

    #[test]
    fn antimeridian_wraps() {
        let idx = PointIndex::from_points(vec![(0.0, 179.9, code("FJ"))]);
        assert_eq!(idx.nearest(0.0, -179.9).unwrap().0, code("FJ"));
    }

    #[test]
    fn grid_search_matches_linear_scan() {
        let idx = PointIndex::bundled().with_max_distance_km(250.0);
        let mut state = 0x2545F491u64;
        let mut next = || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..200 {
            let lat = next() * 180.0 - 90.0;
            let lon = next() * 360.0 - 180.0;
            let brute = idx
                .points
                .iter()
                .map(|p| (haversine_km(lat, lon, p.lat, p.lon), p))
                .filter(|(d, _)| *d <= 250.0)
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, p)| p.country.clone());
            assert_eq!(idx.nearest(lat, lon).map(|r| r.0), brute, "{lat},{lon}");
        }
    }
}
