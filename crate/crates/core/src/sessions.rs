//! Grouping events into sessions and the session-level feature sets.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DatasetProfile, Event, EventType, ProfileName};
use crate::matrix::FeatureMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SessionKey {
    pub user_id: String,
    pub session_id: String,
}

/// All events of one `(user, session)` pair, sorted by time.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub key: SessionKey,
    pub events: Vec<Event>,
}

impl SessionRecord {
    pub fn label(&self) -> u8 {
        label_session(self)
    }

    /// Events used for features: everything except purchases.
    pub fn browsing_events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.events.iter().filter(|e| e.event_type != EventType::Purchase)
    }
}

/// 1 iff the session contains a purchase.
pub fn label_session(record: &SessionRecord) -> u8 {
    u8::from(record.events.iter().any(|e| e.event_type == EventType::Purchase))
}

/// Groups events by `(user_id, session_id)`. Records come out in order of
/// first appearance; events inside a record are stably sorted by time.
pub fn sessionize<I>(events: I) -> Vec<SessionRecord>
where
    I: IntoIterator<Item = Event>,
{
    let mut index: HashMap<(String, String), usize> = HashMap::new();
    let mut records: Vec<SessionRecord> = Vec::new();
    for event in events {
        let key = (event.user_id.clone(), event.session_id.clone());
        let slot = *index.entry(key).or_insert_with(|| {
            records.push(SessionRecord {
                key: SessionKey {
                    user_id: event.user_id.clone(),
                    session_id: event.session_id.clone(),
                },
                events: Vec::new(),
            });
            records.len() - 1
        });
        records[slot].events.push(event);
    }
    for r in &mut records {
        r.events.sort_by_key(|e| e.event_time);
    }
    records
}

pub const COSMETICS_SESSION_FEATURES: [&str; 8] = [
    "total_events",
    "cart_brands",
    "cart_products",
    "cart_events",
    "remove_events",
    "view_events",
    "viewed_brands",
    "viewed_products",
];

pub const ELECTRONICS_SESSION_FEATURES: [&str; 9] = [
    "mean_cart_price",
    "cart_brands",
    "cart_categories",
    "cart_products",
    "cart_events",
    "total_cart_price",
    "total_events",
    "interaction_time",
    "viewed_brands",
];

pub fn session_feature_names(profile: &DatasetProfile) -> &'static [&'static str] {
    match profile.name() {
        ProfileName::Electronics => &ELECTRONICS_SESSION_FEATURES,
        ProfileName::Cosmetics | ProfileName::Custom => &COSMETICS_SESSION_FEATURES,
    }
}

#[derive(Default)]
struct Tally<'a> {
    total: usize,
    carts: usize,
    removes: usize,
    views: usize,
    cart_price: f64,
    cart_brands: BTreeSet<&'a str>,
    cart_products: BTreeSet<&'a str>,
    cart_categories: BTreeSet<&'a str>,
    viewed_brands: BTreeSet<&'a str>,
    viewed_products: BTreeSet<&'a str>,
    first: Option<i64>,
    last: Option<i64>,
}

/// Session features for the profile; purchase events are ignored.
pub fn session_features(record: &SessionRecord, profile: &DatasetProfile) -> Result<Vec<f64>> {
    let mut t = Tally::default();
    for e in &record.events {
        if !profile.allows(e.event_type) {
            return Err(Error::ProfileMismatch {
                session: format!("{}/{}", record.key.user_id, record.key.session_id),
                event_type: e.event_type.to_string(),
                profile: profile.name().to_string(),
            });
        }
    }
    for e in record.browsing_events() {
        t.total += 1;
        t.first = Some(t.first.map_or(e.event_time, |f| f.min(e.event_time)));
        t.last = Some(t.last.map_or(e.event_time, |l| l.max(e.event_time)));
        match e.event_type {
            EventType::Cart => {
                t.carts += 1;
                t.cart_price += e.price;
                t.cart_brands.insert(&e.brand);
                t.cart_products.insert(&e.product_id);
                t.cart_categories.insert(&e.category);
            }
            EventType::RemoveFromCart => t.removes += 1,
            EventType::View => {
                t.views += 1;
                t.viewed_brands.insert(&e.brand);
                t.viewed_products.insert(&e.product_id);
            }
            EventType::Purchase => unreachable!("filtered"),
        }
    }
    let n = |x: usize| x as f64;
    Ok(match profile.name() {
        ProfileName::Electronics => vec![
            if t.carts > 0 { t.cart_price / n(t.carts) } else { 0.0 },
            n(t.cart_brands.len()),
            n(t.cart_categories.len()),
            n(t.cart_products.len()),
            n(t.carts),
            t.cart_price,
            n(t.total),
            t.last.zip(t.first).map_or(0, |(l, f)| l - f) as f64,
            n(t.viewed_brands.len()),
        ],
        ProfileName::Cosmetics | ProfileName::Custom => vec![
            n(t.total),
            n(t.cart_brands.len()),
            n(t.cart_products.len()),
            n(t.carts),
            n(t.removes),
            n(t.views),
            n(t.viewed_brands.len()),
            n(t.viewed_products.len()),
        ],
    })
}

/// Session feature table with labels, one row per record.
pub fn session_matrix(records: &[SessionRecord], profile: &DatasetProfile) -> Result<FeatureMatrix> {
    let names = session_feature_names(profile);
    let mut values = Vec::with_capacity(records.len() * names.len());
    let mut labels = Vec::with_capacity(records.len());
    for r in records {
        values.extend(session_features(r, profile)?);
        labels.push(r.label());
    }
    FeatureMatrix::new(names.iter().map(|s| s.to_string()).collect(), values, labels)
}

/// Writes the session feature table (feature names + `label`).
pub fn write_session_csv<W: Write>(records: &[SessionRecord], profile: &DatasetProfile, out: W) -> Result<()> {
    if records.is_empty() {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = session_feature_names(profile).to_vec();
        header.push("label");
        w.write_record(&header)?;
        w.flush().map_err(|e| Error::io("<session csv>", e))?;
        return Ok(());
    }
    session_matrix(records, profile)?.write_csv(out)
}
