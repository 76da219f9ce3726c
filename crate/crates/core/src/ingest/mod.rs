//! Raw event logs: parsing, streaming and synthetic generation.

mod event;
mod stream;
mod synth;

pub use event::{
    format_timestamp, parse_event_row, parse_timestamp, DatasetProfile, Event, EventType, ProfileName, RowError,
    RowErrorKind, HEADER, UNKNOWN,
};
pub use stream::{ErrorPolicy, EventReader, EventWriter, IngestSummary};
pub use synth::{
    apportion, generate_synthetic, Behavior, EventMix, GeneratorManifest, GeneratorSpec, PersonaSpec, PersonaTally,
    IMPULSIVE_SHOPPER, NEW_SHOPPER,
};
