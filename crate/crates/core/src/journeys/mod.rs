//! User journeys: all sessions of a user (optionally split per product
//! category) consolidated into one labeled feature vector.

mod sampling;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ingest::EventType;
use crate::matrix::{ColumnScale, FeatureMatrix};
use crate::sessions::{SessionKey, SessionRecord};

pub(crate) use sampling::shuffled;
pub use sampling::{cap_per_cluster, oversample_balance, sample_indices, stratified_subsample};

pub const JOURNEY_FEATURES: [&str; 11] = [
    "interaction_time",
    "total_events",
    "sessions",
    "cart_events",
    "view_events",
    "remove_events",
    "cart_time",
    "view_time",
    "max_price",
    "min_price",
    "brands",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JourneyGrouping {
    #[default]
    User,
    UserCategory,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JourneyKey {
    pub user_id: String,
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JourneyRecord {
    pub key: JourneyKey,
    pub sessions: Vec<SessionRecord>,
}

impl JourneyRecord {
    /// 1 iff any session of the journey contains a purchase.
    pub fn label(&self) -> u8 {
        self.sessions.iter().map(SessionRecord::label).max().unwrap_or(0)
    }

    pub fn session_keys(&self) -> Vec<&SessionKey> {
        self.sessions.iter().map(|s| &s.key).collect()
    }
}

/// One journey per key, ordered by key. Under [`JourneyGrouping::UserCategory`]
/// each session is split into per-category parts that keep the session key.
pub fn build_journeys<I>(sessions: I, grouping: JourneyGrouping) -> Vec<JourneyRecord>
where
    I: IntoIterator<Item = SessionRecord>,
{
    let mut journeys: BTreeMap<JourneyKey, Vec<SessionRecord>> = BTreeMap::new();
    for session in sessions {
        match grouping {
            JourneyGrouping::User => {
                let key = JourneyKey {
                    user_id: session.key.user_id.clone(),
                    category: None,
                };
                journeys.entry(key).or_default().push(session);
            }
            JourneyGrouping::UserCategory => {
                let mut parts: BTreeMap<String, Vec<_>> = BTreeMap::new();
                for e in session.events {
                    parts.entry(e.category.clone()).or_default().push(e);
                }
                for (category, events) in parts {
                    let key = JourneyKey {
                        user_id: session.key.user_id.clone(),
                        category: Some(category),
                    };
                    journeys.entry(key).or_default().push(SessionRecord {
                        key: session.key.clone(),
                        events,
                    });
                }
            }
        }
    }
    journeys
        .into_iter()
        .map(|(key, sessions)| JourneyRecord { key, sessions })
        .collect()
}

/// The eleven journey features, in [`JOURNEY_FEATURES`] order. Purchases are
/// ignored; an event's dwell time is the gap to the next non-purchase event of
/// its session (0 for the last one).
pub fn journey_features(journey: &JourneyRecord) -> [f64; 11] {
    let mut interaction = 0i64;
    let (mut total, mut carts, mut views, mut removes) = (0usize, 0usize, 0usize, 0usize);
    let (mut cart_time, mut view_time) = (0i64, 0i64);
    let mut max_price: Option<f64> = None;
    let mut min_price: Option<f64> = None;
    let mut brands = BTreeSet::new();

    for session in &journey.sessions {
        let browsing: Vec<_> = session.browsing_events().collect();
        if let (Some(first), Some(last)) = (browsing.first(), browsing.last()) {
            interaction += last.event_time - first.event_time;
        }
        for (i, e) in browsing.iter().enumerate() {
            let dwell = browsing.get(i + 1).map_or(0, |next| next.event_time - e.event_time);
            total += 1;
            match e.event_type {
                EventType::Cart => {
                    carts += 1;
                    cart_time += dwell;
                }
                EventType::View => {
                    views += 1;
                    view_time += dwell;
                }
                EventType::RemoveFromCart => removes += 1,
                EventType::Purchase => unreachable!("filtered"),
            }
            max_price = Some(max_price.map_or(e.price, |m| m.max(e.price)));
            min_price = Some(min_price.map_or(e.price, |m| m.min(e.price)));
            brands.insert(e.brand.as_str());
        }
    }
    [
        interaction as f64,
        total as f64,
        journey.sessions.len() as f64,
        carts as f64,
        views as f64,
        removes as f64,
        cart_time as f64,
        view_time as f64,
        max_price.unwrap_or(0.0),
        min_price.unwrap_or(0.0),
        brands.len() as f64,
    ]
}

/// Unscaled journey feature table.
pub fn journey_matrix(journeys: &[JourneyRecord]) -> Result<FeatureMatrix> {
    let mut values = Vec::with_capacity(journeys.len() * JOURNEY_FEATURES.len());
    let mut labels = Vec::with_capacity(journeys.len());
    for j in journeys {
        values.extend(journey_features(j));
        labels.push(j.label());
    }
    FeatureMatrix::new(JOURNEY_FEATURES.iter().map(|s| s.to_string()).collect(), values, labels)
}

/// Min-max scales each column to [0, 1]; constant columns become 0.
/// The per-column `(min, max)` is kept on the result.
pub fn scale_unit_interval(matrix: &FeatureMatrix) -> FeatureMatrix {
    let d = matrix.n_cols();
    let mut scales = vec![
        ColumnScale {
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        };
        d
    ];
    for row in matrix.rows() {
        for (s, &v) in scales.iter_mut().zip(row) {
            s.min = s.min.min(v);
            s.max = s.max.max(v);
        }
    }
    let values: Vec<f64> = matrix
        .rows()
        .flat_map(|row| {
            row.iter().zip(&scales).map(|(&v, s)| {
                if s.max > s.min {
                    ((v - s.min) / (s.max - s.min)).clamp(0.0, 1.0)
                } else {
                    0.0
                }
            })
        })
        .collect();
    let mut out =
        FeatureMatrix::new(matrix.columns().to_vec(), values, matrix.labels().to_vec()).expect("same shape as input");
    if let Some(q) = matrix.clusters() {
        out = out.with_clusters(q.to_vec()).expect("same length");
    }
    out.with_scaling(scales)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::Event;
    use crate::sessions::sessionize;
    use EventType::*;

    fn ev(user: &str, session: &str, t: i64, ty: EventType, brand: &str, category: &str, price: f64) -> Event {
        Event {
            user_id: user.into(),
            session_id: session.into(),
            event_time: t,
            event_type: ty,
            product_id: format!("p-{brand}"),
            category: category.into(),
            category_code: String::new(),
            brand: brand.into(),
            price,
        }
    }

    #[test]
    fn groups_by_user() {
        let sessions = sessionize(vec![
            ev("u1", "a", 0, View, "b", "c", 1.0),
            ev("u1", "b", 100, View, "b", "c", 1.0),
            ev("u1", "c", 200, View, "b", "c", 1.0),
            ev("u2", "d", 0, View, "b", "c", 1.0),
        ]);
        let journeys = build_journeys(sessions, JourneyGrouping::User);
        assert_eq!(journeys.len(), 2);
        assert_eq!(journeys[0].sessions.len(), 3);
        assert_eq!(journeys[1].sessions.len(), 1);
        assert!(journeys[1].sessions.iter().all(|s| s.key.user_id == "u2"));
        assert!(build_journeys(Vec::new(), JourneyGrouping::User).is_empty());
    }

    #[test]
    fn groups_by_user_and_category() {
        let sessions = sessionize(vec![
            ev("u1", "a", 0, View, "b", "c1", 1.0),
            ev("u1", "a", 5, Cart, "b", "c2", 1.0),
            ev("u1", "b", 9, Purchase, "b", "c2", 1.0),
        ]);
        let journeys = build_journeys(sessions, JourneyGrouping::UserCategory);
        assert_eq!(journeys.len(), 2);
        assert_eq!(journeys[0].key.category.as_deref(), Some("c1"));
        assert_eq!(journeys[0].label(), 0);
        assert_eq!(journeys[1].sessions.len(), 2);
        assert_eq!(journeys[1].label(), 1);
    }

    #[test]
    fn minimal_journey() {
        let j = &build_journeys(
            sessionize(vec![ev("u", "s", 0, View, "b", "c", 5.0)]),
            JourneyGrouping::User,
        )[0];
        assert_eq!(
            journey_features(j),
            [0.0, 1.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 5.0, 5.0, 1.0]
        );
    }

    #[test]
    fn two_session_hand_aggregation() {
        // session a: view@0 (dwell 10), cart@10 (dwell 30), remove@40 (dwell 0), purchase ignored
        // session b: view@1000 (dwell 20), view@1020 (dwell 0)
        let events = vec![
            ev("u", "a", 0, View, "x", "c", 4.0),
            ev("u", "a", 10, Cart, "y", "c", 9.0),
            ev("u", "a", 40, RemoveFromCart, "y", "c", 9.0),
            ev("u", "a", 45, Purchase, "z", "c", 100.0),
            ev("u", "b", 1000, View, "x", "c", 2.5),
            ev("u", "b", 1020, View, "w", "c", 3.0),
        ];
        let j = &build_journeys(sessionize(events), JourneyGrouping::User)[0];
        assert_eq!(
            journey_features(j),
            [60.0, 5.0, 2.0, 1.0, 3.0, 1.0, 30.0, 30.0, 9.0, 2.5, 3.0]
        );
        assert_eq!(j.label(), 1);
    }

    #[test]
    fn electronics_has_no_removals() {
        let spec = crate::ingest::GeneratorSpec::electronics_preset(200, 4);
        let (_, bytes) = crate::ingest::generate_synthetic(&spec, Vec::new()).unwrap();
        let events = crate::ingest::EventReader::new(
            bytes.as_slice(),
            crate::ingest::DatasetProfile::electronics(),
            crate::ingest::ErrorPolicy::FailFast,
        )
        .unwrap()
        .map(|e| e.unwrap());
        let journeys = build_journeys(sessionize(events), JourneyGrouping::User);
        assert_eq!(journeys.len(), 200);
        assert!(journeys.iter().all(|j| journey_features(j)[5] == 0.0));
    }

    #[test]
    fn scaling_rules() {
        let m = FeatureMatrix::from_unnamed_rows(&[vec![0.0, 7.0], vec![5.0, 7.0], vec![10.0, 7.0]], vec![0, 1, 0])
            .unwrap();
        let s = scale_unit_interval(&m);
        assert_eq!(s.values(), &[0.0, 0.0, 0.5, 0.0, 1.0, 0.0]);
        let rec = s.scaling().unwrap();
        assert_eq!(rec[0], ColumnScale { min: 0.0, max: 10.0 });
        assert_eq!(rec[0].inverse(0.5), 5.0);
    }
}
