//! Marker trace files: one JSON object per line,
//! `{"t": <s>, "markers": {"EL1": [x, y, z], ..., "ABD": null}, "gripper": "close"}`.
//!
//! Every line lists all seven labels; an occluded marker is `null`. The
//! optional `gripper` field carries an open/close/toggle event issued at `t`.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Deserialize, Serialize, Serializer};

use super::IoError;
use crate::geometry::{MarkerFrame, MarkerLabel, Vec3};
use crate::robot::GripperEvent;

/// Nominal motion-capture rate (Hz).
pub const TRACE_RATE_HZ: f64 = 270.0;

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub frame: MarkerFrame,
    pub gripper: Option<GripperEvent>,
}

impl TraceRecord {
    pub fn t(&self) -> f64 {
        self.frame.t
    }
}

/// Time-ordered marker records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MarkerTrace {
    pub records: Vec<TraceRecord>,
}

impl MarkerTrace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a record, enforcing strictly increasing timestamps.
    pub fn push(&mut self, record: TraceRecord) -> Result<(), IoError> {
        if let Some(last) = self.records.last() {
            if !(record.t() > last.t()) {
                return Err(IoError::NonMonotoneTimestamp {
                    line: self.records.len() + 1,
                    t: record.t(),
                    previous: last.t(),
                });
            }
        }
        self.records.push(record);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn end_time(&self) -> Option<f64> {
        self.records.last().map(TraceRecord::t)
    }

    pub fn frames(&self) -> impl Iterator<Item = &MarkerFrame> {
        self.records.iter().map(|r| &r.frame)
    }
}

struct Markers<'a>(&'a MarkerFrame);

impl Serialize for Markers<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut map = s.serialize_map(Some(7))?;
        for label in MarkerLabel::ALL {
            let p = self.0.get(label).map(|p| [p.x, p.y, p.z]);
            map.serialize_entry(label.as_str(), &p)?;
        }
        map.end()
    }
}

#[derive(Serialize)]
struct LineOut<'a> {
    t: f64,
    markers: Markers<'a>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gripper: Option<GripperEvent>,
}

#[derive(Deserialize)]
struct LineIn {
    t: f64,
    markers: HashMap<String, Option<[f64; 3]>>,
    #[serde(default)]
    gripper: Option<GripperEvent>,
}

/// Encodes one record as a trace line (no trailing newline).
pub fn encode_record(record: &TraceRecord) -> String {
    serde_json::to_string(&LineOut {
        t: record.frame.t,
        markers: Markers(&record.frame),
        gripper: record.gripper,
    })
    .expect("trace records always serialize")
}

/// Decodes one trace line; `line_no` is used for error reporting.
pub fn decode_record(text: &str, line_no: usize) -> Result<TraceRecord, IoError> {
    let err = |message: String| IoError::Parse { line: line_no, message };
    let parsed: LineIn = serde_json::from_str(text).map_err(|e| err(e.to_string()))?;
    if !parsed.t.is_finite() {
        return Err(err("non-finite timestamp".into()));
    }
    if parsed.markers.len() != MarkerLabel::ALL.len() {
        return Err(err(format!("expected 7 markers, found {}", parsed.markers.len())));
    }
    let mut frame = MarkerFrame::new(parsed.t);
    for (name, pos) in parsed.markers {
        let label = MarkerLabel::parse(&name).ok_or_else(|| err(format!("unknown marker {name:?}")))?;
        if let Some(p) = pos {
            if p.iter().any(|c| !c.is_finite()) {
                return Err(err(format!("non-finite position for {name}")));
            }
            frame.set(label, Some(Vec3::from(p)));
        }
    }
    Ok(TraceRecord {
        frame,
        gripper: parsed.gripper,
    })
}

pub fn write_trace(path: &Path, trace: &MarkerTrace) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in &trace.records {
        writeln!(w, "{}", encode_record(r))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a trace; blank lines are skipped.
pub fn read_trace(path: &Path) -> Result<MarkerTrace, IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut trace = MarkerTrace::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = decode_record(&line, i + 1)?;
        trace.push(record).map_err(|e| match e {
            IoError::NonMonotoneTimestamp { t, previous, .. } => IoError::NonMonotoneTimestamp {
                line: i + 1,
                t,
                previous,
            },
            other => other,
        })?;
    }
    Ok(trace)
}
