use std::fs::File;
use std::io::{BufReader, Read};
use std::path::Path;

use serde::Serialize;

use super::event::{parse_event_row, DatasetProfile, Event, RowError, RowErrorKind, HEADER};
use crate::error::{Error, Result};

/// What to do with a row that fails to parse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ErrorPolicy {
    /// Yield the row error and stop.
    FailFast,
    /// Drop the row and count it.
    #[default]
    SkipAndCount,
}

const MAX_ERROR_SAMPLES: usize = 16;

#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub rows_read: u64,
    pub events: u64,
    pub errors: u64,
    /// The first few row errors, for diagnostics.
    #[serde(serialize_with = "serialize_errors")]
    pub error_samples: Vec<RowError>,
}

fn serialize_errors<S: serde::Serializer>(errs: &[RowError], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(errs.iter().map(ToString::to_string))
}

/// Streams events out of a CSV source one row at a time.
pub struct EventReader<R: Read> {
    inner: csv::Reader<R>,
    record: csv::StringRecord,
    profile: DatasetProfile,
    policy: ErrorPolicy,
    summary: IngestSummary,
    done: bool,
}

impl EventReader<BufReader<File>> {
    pub fn open(path: impl AsRef<Path>, profile: DatasetProfile, policy: ErrorPolicy) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::with_capacity(1 << 16, file), profile, policy)
    }
}

impl<R: Read> EventReader<R> {
    pub fn new(source: R, profile: DatasetProfile, policy: ErrorPolicy) -> Result<Self> {
        let mut inner = csv::ReaderBuilder::new()
            .has_headers(true)
            .flexible(true)
            .from_reader(source);
        let header = inner.headers()?;
        if header.iter().map(str::trim).ne(HEADER.iter().copied()) {
            return Err(Error::HeaderMismatch {
                expected: HEADER.join(","),
                found: header.iter().collect::<Vec<_>>().join(","),
            });
        }
        Ok(Self {
            inner,
            record: csv::StringRecord::new(),
            profile,
            policy,
            summary: IngestSummary::default(),
            done: false,
        })
    }

    pub fn summary(&self) -> &IngestSummary {
        &self.summary
    }

    pub fn into_summary(self) -> IngestSummary {
        self.summary
    }

    fn record_error(&mut self, err: RowError) -> Option<Result<Event>> {
        self.summary.errors += 1;
        if self.summary.error_samples.len() < MAX_ERROR_SAMPLES {
            self.summary.error_samples.push(err.clone());
        }
        match self.policy {
            ErrorPolicy::SkipAndCount => None,
            ErrorPolicy::FailFast => {
                self.done = true;
                Some(Err(err.into()))
            }
        }
    }
}

impl<R: Read> Iterator for EventReader<R> {
    type Item = Result<Event>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            let row = self.summary.rows_read + 1;
            match self.inner.read_record(&mut self.record) {
                Ok(false) => self.done = true,
                Ok(true) => {
                    self.summary.rows_read = row;
                    let fields: Vec<&str> = self.record.iter().collect();
                    match parse_event_row(&fields, row, &self.profile) {
                        Ok(event) => {
                            self.summary.events += 1;
                            return Some(Ok(event));
                        }
                        Err(err) => {
                            if let Some(out) = self.record_error(err) {
                                return Some(out);
                            }
                        }
                    }
                }
                Err(e) if matches!(e.kind(), csv::ErrorKind::Utf8 { .. }) => {
                    self.summary.rows_read = row;
                    let err = RowError {
                        row,
                        kind: RowErrorKind::MissingField("valid utf-8"),
                    };
                    if let Some(out) = self.record_error(err) {
                        return Some(out);
                    }
                }
                Err(e) => {
                    self.done = true;
                    return Some(Err(e.into()));
                }
            }
        }
        None
    }
}

/// Writes events in the raw log layout.
pub struct EventWriter<W: std::io::Write> {
    inner: csv::Writer<W>,
}

impl<W: std::io::Write> EventWriter<W> {
    pub fn new(sink: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(sink);
        inner.write_record(HEADER)?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, event: &Event) -> Result<()> {
        self.inner.write_record(event.to_fields())?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.inner.flush().map_err(|e| Error::io("<event writer>", e))?;
        self.inner
            .into_inner()
            .map_err(|e| Error::io("<event writer>", e.into_error()))
    }
}
