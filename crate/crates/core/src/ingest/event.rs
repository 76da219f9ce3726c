use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Column layout of the raw event logs.
pub const HEADER: [&str; 9] = [
    "event_time",
    "event_type",
    "product_id",
    "category_id",
    "category_code",
    "brand",
    "price",
    "user_id",
    "user_session",
];

/// Stand-in for a missing brand or category.
pub const UNKNOWN: &str = "unknown";

const TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S UTC";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventType {
    View,
    Cart,
    RemoveFromCart,
    Purchase,
}

impl EventType {
    pub const ALL: [EventType; 4] = [
        EventType::View,
        EventType::Cart,
        EventType::RemoveFromCart,
        EventType::Purchase,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventType::View => "view",
            EventType::Cart => "cart",
            EventType::RemoveFromCart => "remove_from_cart",
            EventType::Purchase => "purchase",
        }
    }

    fn bit(self) -> u8 {
        1 << self as u8
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EventType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileName {
    Cosmetics,
    Electronics,
    Custom,
}

impl fmt::Display for ProfileName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProfileName::Cosmetics => "cosmetics",
            ProfileName::Electronics => "electronics",
            ProfileName::Custom => "custom",
        })
    }
}

impl FromStr for ProfileName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cosmetics" => Ok(ProfileName::Cosmetics),
            "electronics" => Ok(ProfileName::Electronics),
            "custom" => Ok(ProfileName::Custom),
            other => Err(format!("unknown profile `{other}`")),
        }
    }
}

/// A dataset flavour: which event types may appear in its logs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetProfile {
    name: ProfileName,
    allowed: u8,
}

impl DatasetProfile {
    pub fn cosmetics() -> Self {
        Self::build(ProfileName::Cosmetics, &EventType::ALL)
    }

    pub fn electronics() -> Self {
        Self::build(
            ProfileName::Electronics,
            &[EventType::Cart, EventType::View, EventType::Purchase],
        )
    }

    pub fn custom(allowed: &[EventType]) -> Self {
        Self::build(ProfileName::Custom, allowed)
    }

    pub fn by_name(name: ProfileName) -> Self {
        match name {
            ProfileName::Cosmetics => Self::cosmetics(),
            ProfileName::Electronics => Self::electronics(),
            ProfileName::Custom => Self::custom(&EventType::ALL),
        }
    }

    fn build(name: ProfileName, allowed: &[EventType]) -> Self {
        Self {
            name,
            allowed: allowed.iter().fold(0, |acc, t| acc | t.bit()),
        }
    }

    pub fn name(&self) -> ProfileName {
        self.name
    }

    pub fn allows(&self, event_type: EventType) -> bool {
        self.allowed & event_type.bit() != 0
    }

    pub fn allowed_event_types(&self) -> Vec<EventType> {
        EventType::ALL.into_iter().filter(|&t| self.allows(t)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub user_id: String,
    pub session_id: String,
    /// Seconds since the Unix epoch, UTC.
    pub event_time: i64,
    pub event_type: EventType,
    pub product_id: String,
    pub category: String,
    pub category_code: String,
    pub brand: String,
    pub price: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RowErrorKind {
    #[error("expected 9 fields, found {0}")]
    FieldCount(usize),
    #[error("malformed timestamp `{0}`")]
    Timestamp(String),
    #[error("unknown event type `{0}`")]
    UnknownEventType(String),
    #[error("event type `{event_type}` not allowed in profile `{profile}`")]
    ProfileViolation {
        event_type: EventType,
        profile: ProfileName,
    },
    #[error("malformed price `{0}`")]
    Price(String),
    #[error("negative price {0}")]
    NegativePrice(f64),
    #[error("missing {0}")]
    MissingField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("row {row}: {kind}")]
pub struct RowError {
    /// 1-based data row number (the header is row 0).
    pub row: u64,
    pub kind: RowErrorKind,
}

pub fn parse_timestamp(field: &str) -> Option<i64> {
    NaiveDateTime::parse_from_str(field, TIME_FORMAT)
        .ok()
        .map(|t| t.and_utc().timestamp())
}

pub fn format_timestamp(epoch_secs: i64) -> String {
    DateTime::from_timestamp(epoch_secs, 0)
        .map(|t| t.format(TIME_FORMAT).to_string())
        .unwrap_or_default()
}

fn or_unknown(field: &str) -> String {
    if field.is_empty() {
        UNKNOWN.to_string()
    } else {
        field.to_string()
    }
}

fn from_unknown(field: &str) -> &str {
    if field == UNKNOWN {
        ""
    } else {
        field
    }
}

/// Parses one record in the raw log layout (see [`HEADER`]).
pub fn parse_event_row<S: AsRef<str>>(fields: &[S], row: u64, profile: &DatasetProfile) -> Result<Event, RowError> {
    let fail = |kind| RowError { row, kind };
    if fields.len() != HEADER.len() {
        return Err(fail(RowErrorKind::FieldCount(fields.len())));
    }
    let f = |i: usize| fields[i].as_ref().trim();

    let event_time = parse_timestamp(f(0)).ok_or_else(|| fail(RowErrorKind::Timestamp(f(0).to_string())))?;
    let event_type: EventType = f(1).parse().map_err(|s| fail(RowErrorKind::UnknownEventType(s)))?;
    if !profile.allows(event_type) {
        return Err(fail(RowErrorKind::ProfileViolation {
            event_type,
            profile: profile.name(),
        }));
    }
    let price: f64 = f(6)
        .parse()
        .ok()
        .filter(|p: &f64| p.is_finite())
        .ok_or_else(|| fail(RowErrorKind::Price(f(6).to_string())))?;
    if price < 0.0 {
        return Err(fail(RowErrorKind::NegativePrice(price)));
    }
    if f(7).is_empty() {
        return Err(fail(RowErrorKind::MissingField("user_id")));
    }
    if f(8).is_empty() {
        return Err(fail(RowErrorKind::MissingField("user_session")));
    }
    if f(2).is_empty() {
        return Err(fail(RowErrorKind::MissingField("product_id")));
    }

    Ok(Event {
        user_id: f(7).to_string(),
        session_id: f(8).to_string(),
        event_time,
        event_type,
        product_id: f(2).to_string(),
        category: or_unknown(f(3)),
        category_code: f(4).to_string(),
        brand: or_unknown(f(5)),
        price,
    })
}

impl Event {
    /// Fields in [`HEADER`] order. Missing brand/category are written back as
    /// empty fields, as in the source logs.
    pub fn to_fields(&self) -> [String; 9] {
        [
            format_timestamp(self.event_time),
            self.event_type.to_string(),
            self.product_id.clone(),
            from_unknown(&self.category).to_string(),
            self.category_code.clone(),
            from_unknown(&self.brand).to_string(),
            self.price.to_string(),
            self.user_id.clone(),
            self.session_id.clone(),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CART_ROW: [&str; 9] = [
        "2019-12-01 00:00:02 UTC",
        "cart",
        "5844397",
        "1487580006317032337",
        "",
        "",
        "2.62",
        "595414620",
        "4adb70bb-edbd-4981-b60f-a05bfd32683a",
    ];

    #[test]
    fn parses_cart_row() {
        let e = parse_event_row(&CART_ROW, 1, &DatasetProfile::cosmetics()).unwrap();
        assert_eq!(e.event_type, EventType::Cart);
        assert_eq!(e.price, 2.62);
        assert_eq!(e.brand, UNKNOWN);
        assert_eq!(e.event_time, 1_575_158_402);
        assert_eq!(e.to_fields().map(|s| s), CART_ROW.map(String::from));
    }

    #[test]
    fn electronics_rejects_removal() {
        let mut row = CART_ROW;
        row[1] = "remove_from_cart";
        let err = parse_event_row(&row, 4, &DatasetProfile::electronics()).unwrap_err();
        assert_eq!(err.row, 4);
        assert!(matches!(err.kind, RowErrorKind::ProfileViolation { .. }));
        assert!(parse_event_row(&row, 4, &DatasetProfile::cosmetics()).is_ok());
    }

    #[test]
    fn rejects_negative_price_and_bad_time() {
        let mut row = CART_ROW;
        row[6] = "-1.00";
        let err = parse_event_row(&row, 2, &DatasetProfile::cosmetics()).unwrap_err();
        assert_eq!(err.kind, RowErrorKind::NegativePrice(-1.0));

        let mut row = CART_ROW;
        row[0] = "2019-12-01T00:00:02Z";
        let err = parse_event_row(&row, 3, &DatasetProfile::cosmetics()).unwrap_err();
        assert!(matches!(err.kind, RowErrorKind::Timestamp(_)));
    }

    #[test]
    fn rejects_missing_session() {
        let mut row = CART_ROW;
        row[8] = "";
        let err = parse_event_row(&row, 9, &DatasetProfile::cosmetics()).unwrap_err();
        assert_eq!(err.kind, RowErrorKind::MissingField("user_session"));
    }

    #[test]
    fn profile_sets() {
        let e = DatasetProfile::electronics();
        assert_eq!(
            e.allowed_event_types(),
            vec![EventType::View, EventType::Cart, EventType::Purchase]
        );
        assert_eq!(DatasetProfile::cosmetics().allowed_event_types().len(), 4);
    }
}
