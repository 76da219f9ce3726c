use std::collections::BTreeSet;

use proptest::prelude::*;

use opam_core::analytics::cluster_profile;
use opam_core::clustering::{kmeans, KMeansConfig};
use opam_core::ingest::{
    generate_synthetic, DatasetProfile, ErrorPolicy, Event, EventReader, EventWriter, GeneratorSpec,
};
use opam_core::journeys::{build_journeys, journey_matrix, scale_unit_interval, JourneyGrouping};
use opam_core::ranking::fisher_scores;
use opam_core::sessions::{sessionize, SessionRecord};
use opam_core::FeatureMatrix;

fn generated(users: usize, seed: u64) -> (opam_core::ingest::GeneratorManifest, Vec<Event>) {
    let (manifest, log) = generate_synthetic(&GeneratorSpec::cosmetics_preset(users, seed), Vec::new()).unwrap();
    let reader = EventReader::new(&log[..], DatasetProfile::cosmetics(), ErrorPolicy::FailFast).unwrap();
    (manifest, reader.map(|e| e.unwrap()).collect())
}

#[test]
fn generator_manifest_agrees_with_the_log() {
    let (manifest, events) = generated(500, 11);
    assert_eq!(events.len() as u64, manifest.events);
    let sessions = sessionize(events.iter().cloned());
    assert_eq!(sessions.len() as u64, manifest.sessions);
    let buying = sessions.iter().filter(|s| s.label() == 1).count() as u64;
    assert_eq!(buying, manifest.purchasing_sessions);
    let users: BTreeSet<_> = events.iter().map(|e| e.user_id.clone()).collect();
    assert_eq!(users.len(), manifest.personas.len());
}

#[test]
fn events_survive_a_write_read_round_trip() {
    let (_, events) = generated(100, 3);
    let mut w = EventWriter::new(Vec::new()).unwrap();
    for e in &events {
        w.write(e).unwrap();
    }
    let bytes = w.finish().unwrap();
    let back: Vec<Event> = EventReader::new(&bytes[..], DatasetProfile::cosmetics(), ErrorPolicy::FailFast)
        .unwrap()
        .map(|e| e.unwrap())
        .collect();
    assert_eq!(back, events);
}

#[test]
fn sessions_partition_events_in_time_order() {
    let (_, events) = generated(300, 5);
    let sessions = sessionize(events.iter().cloned());
    assert_eq!(sessions.iter().map(|s| s.events.len()).sum::<usize>(), events.len());
    let keys: BTreeSet<_> = sessions.iter().map(|s| &s.key).collect();
    assert_eq!(keys.len(), sessions.len());
    for s in &sessions {
        assert!(s.events.windows(2).all(|w| w[0].event_time <= w[1].event_time));
        assert!(s
            .events
            .iter()
            .all(|e| e.user_id == s.key.user_id && e.session_id == s.key.session_id));
    }
}

#[test]
fn user_journeys_cover_every_session_once() {
    let (manifest, events) = generated(300, 8);
    let sessions = sessionize(events);
    let n_sessions = sessions.len();
    let journeys = build_journeys(sessions, JourneyGrouping::User);
    assert_eq!(journeys.len(), manifest.personas.len());
    assert_eq!(journeys.iter().map(|j| j.sessions.len()).sum::<usize>(), n_sessions);
    for j in &journeys {
        let label = j.sessions.iter().any(|s: &SessionRecord| s.label() == 1);
        assert_eq!(j.label(), u8::from(label));
    }
    let m = journey_matrix(&journeys).unwrap();
    assert_eq!((m.n_rows(), m.n_cols()), (journeys.len(), 11));
    assert!(m.values().iter().all(|v| v.is_finite() && *v >= 0.0));
}

#[test]
fn end_to_end_is_deterministic() {
    let run = || {
        let (_, events) = generated(400, 21);
        let m =
            scale_unit_interval(&journey_matrix(&build_journeys(sessionize(events), JourneyGrouping::User)).unwrap());
        let ranking = fisher_scores(&m).unwrap();
        let model = kmeans(m.values(), m.n_cols(), &KMeansConfig::new(4, 21)).unwrap();
        let clustered = m.with_clusters(model.assignments).unwrap();
        (ranking, cluster_profile(&clustered).unwrap())
    };
    assert_eq!(run(), run());
}

fn matrix_strategy() -> impl Strategy<Value = FeatureMatrix> {
    (1usize..6, 2usize..40).prop_flat_map(|(d, n)| {
        (
            prop::collection::vec(-1e3f64..1e3, d * n),
            prop::collection::vec(0u8..2, n),
        )
            .prop_map(move |(v, y)| {
                let columns = (0..d).map(|j| format!("f{j}")).collect();
                FeatureMatrix::new(columns, v, y).unwrap()
            })
    })
}

proptest! {
    #[test]
    fn scaling_lands_in_the_unit_interval_and_is_idempotent(m in matrix_strategy()) {
        let once = scale_unit_interval(&m);
        prop_assert!(once.values().iter().all(|v| (0.0..=1.0).contains(v)));
        let twice = scale_unit_interval(&once);
        for (a, b) in once.values().iter().zip(twice.values()) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        let scales = once.scaling().unwrap();
        for i in 0..m.n_rows() {
            for (j, s) in scales.iter().enumerate() {
                let back = s.inverse(once.get(i, j));
                prop_assert!((back - m.get(i, j)).abs() <= 1e-9 * (1.0 + m.get(i, j).abs()));
            }
        }
    }

    #[test]
    fn feature_matrix_csv_round_trips(m in matrix_strategy()) {
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        let back = FeatureMatrix::read_csv(&buf[..]).unwrap();
        prop_assert_eq!(back.columns(), m.columns());
        prop_assert_eq!(back.values(), m.values());
        prop_assert_eq!(back.labels(), m.labels());
    }
}
