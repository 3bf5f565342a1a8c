//! Parsed tweet records and ground-truth country labels.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

/// ISO 3166-1 alpha-2 country code used as a class label.
///
/// The code `ZZ` is reserved for the "Other" class produced by region
/// collapse.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct CountryLabel(String);

impl CountryLabel {
    pub const OTHER_CODE: &'static str = "ZZ";

    /// Builds a label from a two-letter code, upper-casing it.
    pub fn new(code: &str) -> Result<Self, InvalidLabel> {
        let code = code.trim();
        if code.len() == 2 && code.bytes().all(|b| b.is_ascii_alphabetic()) {
            Ok(Self(code.to_ascii_uppercase()))
        } else {
            Err(InvalidLabel(code.to_string()))
        }
    }

    pub fn other() -> Self {
        Self(Self::OTHER_CODE.to_string())
    }

    pub fn is_other(&self) -> bool {
        self.0 == Self::OTHER_CODE
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for CountryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl FromStr for CountryLabel {
    type Err = InvalidLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for CountryLabel {
    type Error = InvalidLabel;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<CountryLabel> for String {
    fn from(label: CountryLabel) -> Self {
        label.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid country code {0:?}: expected two ASCII letters")]
pub struct InvalidLabel(pub String);

/// Longitude/latitude pair in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coordinates {
    pub lon: f64,
    pub lat: f64,
}

impl Coordinates {
    pub fn new(lon: f64, lat: f64) -> Option<Self> {
        let valid = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        valid.then_some(Self { lon, lat })
    }
}

pub const MAX_UTC_OFFSET_SECONDS: i64 = 50_400;

/// The subset of a tweet used for classification and labeling.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TweetRecord {
    pub id: String,
    pub text: String,
    pub user_location: Option<String>,
    pub time_zone: Option<String>,
    pub utc_offset_seconds: Option<i64>,
    pub tweet_language: Option<String>,
    pub user_language: Option<String>,
    pub coordinates: Option<Coordinates>,
    pub place_country_code: Option<CountryLabel>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("invalid JSON: {0}")]
    InvalidJson(String),
    #[error("record must be a JSON object")]
    NotAnObject,
    #[error("field '{field}' must be {expected}")]
    WrongType {
        field: &'static str,
        expected: &'static str,
    },
    #[error("field '{field}' out of range: {detail}")]
    OutOfRange { field: &'static str, detail: String },
}

/// Parses one tweet JSON object.
///
/// Both the nested Twitter layout (`user.*`, `place.*`, `coordinates`,
/// `geo`) and the flattened record layout are accepted. When a flat key is
/// present and non-null it wins over the nested path. Absent, `null` and
/// empty-string fields all become `None`; unknown keys are ignored.
pub fn parse_tweet(raw: &str) -> Result<TweetRecord, ParseError> {
    let value: Value =
        serde_json::from_str(raw).map_err(|e| ParseError::InvalidJson(e.to_string()))?;
    match value {
        Value::Object(map) => parse_tweet_object(&map),
        _ => Err(ParseError::NotAnObject),
    }
}

pub fn parse_tweet_object(obj: &Map<String, Value>) -> Result<TweetRecord, ParseError> {
    let user = object_at(obj, "user")?;
    let place = object_at(obj, "place")?;

    let id = match (present(obj, "id_str"), present(obj, "id")) {
        (Some(v), _) => string_value(v, "id_str")?,
        (None, Some(Value::Number(n))) => n.to_string(),
        (None, Some(v)) => string_value(v, "id")?,
        (None, None) => String::new(),
    };
    let text = match present(obj, "text") {
        Some(v) => string_value(v, "text")?,
        None => String::new(),
    };

    let user_location = flat_or_nested_str(obj, "user_location", user, "location")?;
    let time_zone = flat_or_nested_str(obj, "time_zone", user, "time_zone")?;
    let tweet_language = match present(obj, "tweet_language") {
        Some(v) => non_empty(string_value(v, "tweet_language")?),
        None => opt_str(obj, "lang")?,
    }
    .map(|s| s.to_lowercase());
    let user_language =
        flat_or_nested_str(obj, "user_language", user, "lang")?.map(|s| s.to_lowercase());

    let utc_offset_seconds = match present(obj, "utc_offset_seconds") {
        Some(v) => Some(int_value(v, "utc_offset_seconds")?),
        None => match user.and_then(|u| present(u, "utc_offset")) {
            Some(v) => Some(int_value(v, "utc_offset")?),
            None => None,
        },
    };
    if let Some(off) = utc_offset_seconds {
        if off.abs() > MAX_UTC_OFFSET_SECONDS {
            return Err(ParseError::OutOfRange {
                field: "utc_offset",
                detail: format!("{off} seconds"),
            });
        }
    }

    let coordinates = parse_coordinates(obj)?;

    let country_code = match present(obj, "place_country_code") {
        Some(v) => non_empty(string_value(v, "place_country_code")?),
        None => match place {
            Some(p) => opt_str(p, "country_code")?,
            None => None,
        },
    };
    let place_country_code = country_code
        .map(|code| {
            CountryLabel::new(&code).map_err(|_| ParseError::OutOfRange {
                field: "place_country_code",
                detail: format!("{code:?} is not a two-letter code"),
            })
        })
        .transpose()?;

    Ok(TweetRecord {
        id,
        text,
        user_location,
        time_zone,
        utc_offset_seconds,
        tweet_language,
        user_language,
        coordinates,
        place_country_code,
    })
}

fn parse_coordinates(obj: &Map<String, Value>) -> Result<Option<Coordinates>, ParseError> {
    let flat_lon = present(obj, "lon");
    let flat_lat = present(obj, "lat");
    let pair = match (flat_lon, flat_lat) {
        (Some(lon), Some(lat)) => Some((float_value(lon, "lon")?, float_value(lat, "lat")?)),
        (Some(_), None) | (None, Some(_)) => {
            return Err(ParseError::WrongType {
                field: "lon/lat",
                expected: "present together",
            })
        }
        (None, None) => {
            // GeoJSON point: [longitude, latitude].
            if let Some(point) = object_at(obj, "coordinates")? {
                point_pair(point, "coordinates")?
            } else if let Some(point) = object_at(obj, "geo")? {
                // Legacy field: [latitude, longitude].
                point_pair(point, "geo")?.map(|(lat, lon)| (lon, lat))
            } else {
                None
            }
        }
    };
    pair.map(|(lon, lat)| {
        Coordinates::new(lon, lat).ok_or_else(|| ParseError::OutOfRange {
            field: "coordinates",
            detail: format!("lon={lon} lat={lat}"),
        })
    })
    .transpose()
}

fn point_pair(
    point: &Map<String, Value>,
    field: &'static str,
) -> Result<Option<(f64, f64)>, ParseError> {
    let Some(v) = present(point, "coordinates") else {
        return Ok(None);
    };
    let wrong = ParseError::WrongType {
        field,
        expected: "a two-element numeric array",
    };
    match v.as_array().map(Vec::as_slice) {
        Some([a, b]) => match (a.as_f64(), b.as_f64()) {
            (Some(a), Some(b)) => Ok(Some((a, b))),
            _ => Err(wrong),
        },
        _ => Err(wrong),
    }
}

fn present<'a>(obj: &'a Map<String, Value>, key: &str) -> Option<&'a Value> {
    obj.get(key).filter(|v| !v.is_null())
}

fn object_at<'a>(
    obj: &'a Map<String, Value>,
    key: &'static str,
) -> Result<Option<&'a Map<String, Value>>, ParseError> {
    match present(obj, key) {
        None => Ok(None),
        Some(Value::Object(m)) => Ok(Some(m)),
        // Twitter sometimes renders "geo" as the string "..." in docs; only
        // objects carry a point.
        Some(_) if key == "geo" => Ok(None),
        Some(_) => Err(ParseError::WrongType {
            field: key,
            expected: "an object",
        }),
    }
}

fn string_value(v: &Value, field: &'static str) -> Result<String, ParseError> {
    v.as_str().map(str::to_string).ok_or(ParseError::WrongType {
        field,
        expected: "a string",
    })
}

fn int_value(v: &Value, field: &'static str) -> Result<i64, ParseError> {
    v.as_i64().ok_or(ParseError::WrongType {
        field,
        expected: "an integer",
    })
}

fn float_value(v: &Value, field: &'static str) -> Result<f64, ParseError> {
    v.as_f64().ok_or(ParseError::WrongType {
        field,
        expected: "a number",
    })
}

fn non_empty(s: String) -> Option<String> {
    if s.trim().is_empty() {
        None
    } else {
        Some(s)
    }
}

fn opt_str(obj: &Map<String, Value>, key: &'static str) -> Result<Option<String>, ParseError> {
    match present(obj, key) {
        Some(v) => Ok(non_empty(string_value(v, key)?)),
        None => Ok(None),
    }
}

fn flat_or_nested_str(
    obj: &Map<String, Value>,
    flat_key: &'static str,
    nested: Option<&Map<String, Value>>,
    nested_key: &'static str,
) -> Result<Option<String>, ParseError> {
    if let Some(v) = present(obj, flat_key) {
        return Ok(non_empty(string_value(v, flat_key)?));
    }
    match nested {
        Some(n) => opt_str(n, nested_key),
        None => Ok(None),
    }
}

impl TweetRecord {
    /// Serializes to the flattened record layout. Absent fields are omitted.
    pub fn to_flat_json(&self) -> Map<String, Value> {
        let mut m = Map::new();
        m.insert("id".into(), Value::String(self.id.clone()));
        m.insert("text".into(), Value::String(self.text.clone()));
        let mut put_str = |k: &str, v: &Option<String>| {
            if let Some(v) = v {
                m.insert(k.into(), Value::String(v.clone()));
            }
        };
        put_str("user_location", &self.user_location);
        put_str("time_zone", &self.time_zone);
        put_str("tweet_language", &self.tweet_language);
        put_str("user_language", &self.user_language);
        if let Some(off) = self.utc_offset_seconds {
            m.insert("utc_offset_seconds".into(), Value::from(off));
        }
        if let Some(c) = self.coordinates {
            m.insert("lon".into(), Value::from(c.lon));
            m.insert("lat".into(), Value::from(c.lat));
        }
        if let Some(cc) = &self.place_country_code {
            m.insert("place_country_code".into(), Value::String(cc.to_string()));
        }
        m
    }
}

/// Reverse geocoding capability used by [`label_of`].
pub trait ReverseResolver {
    fn country_at(&self, lat: f64, lon: f64) -> Result<Option<CountryLabel>, String>;
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabelError {
    #[error("reverse geocoder failed: {0}")]
    ResolverUnavailable(String),
    #[error("no country found for lat={lat} lon={lon}")]
    NoCountry { lat: f64, lon: f64 },
}

/// Ground-truth country of a tweet from its embedded geo information.
///
/// `place_country_code` wins over coordinates. Returns `Ok(None)` only when
/// the tweet carries no geo information at all.
pub fn label_of<R: ReverseResolver + ?Sized>(
    tweet: &TweetRecord,
    resolver: &R,
) -> Result<Option<CountryLabel>, LabelError> {
    if let Some(cc) = &tweet.place_country_code {
        return Ok(Some(cc.clone()));
    }
    let Some(c) = tweet.coordinates else {
        return Ok(None);
    };
    match resolver.country_at(c.lat, c.lon) {
        Ok(Some(label)) => Ok(Some(label)),
        Ok(None) => Err(LabelError::NoCountry {
            lat: c.lat,
            lon: c.lon,
        }),
        Err(e) => Err(LabelError::ResolverUnavailable(e)),
    }
}
