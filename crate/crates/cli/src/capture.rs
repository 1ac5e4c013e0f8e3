//! Capture CSV: `point,seq,stream,t_ns,size_bytes`, one row per tap
//! observation, grouped by point and sorted by time within a group.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use tsn5g::sim::{CaptureRecord, CaptureSet};
use tsn5g::{Instant, ObservationPoint, StreamId};

use crate::error::CliError;

pub const CAPTURE_HEADER: [&str; 5] = ["point", "seq", "stream", "t_ns", "size_bytes"];

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    point: String,
    seq: u64,
    stream: Option<u32>,
    t_ns: u64,
    size_bytes: u32,
}

pub fn write_capture<W: Write>(out: W, captures: &CaptureSet) -> Result<(), CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .has_headers(false)
        .from_writer(out);
    w.write_record(CAPTURE_HEADER)?;
    for point in ObservationPoint::ALL {
        for r in captures.at(point) {
            w.serialize(Row {
                point: point.as_str().to_string(),
                seq: r.seq,
                stream: r.stream.map(|s| s.0),
                t_ns: r.t.as_nanos(),
                size_bytes: r.size_bytes,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_capture<R: Read>(input: R) -> Result<CaptureSet, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().ne(CAPTURE_HEADER) {
        return Err(CliError::Parse(format!(
            "capture header must be `{}`, found `{}`",
            CAPTURE_HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut set = CaptureSet::default();
    for (i, row) in rdr.deserialize::<Row>().enumerate() {
        let row = row?;
        let point: ObservationPoint = row.point.parse().map_err(|_| {
            CliError::Parse(format!("record {}: unknown point `{}`", i + 1, row.point))
        })?;
        set.at_mut(point).push(CaptureRecord {
            seq: row.seq,
            stream: row.stream.map(StreamId),
            t: Instant::from_nanos(row.t_ns),
            size_bytes: row.size_bytes,
        });
    }
    for point in ObservationPoint::ALL {
        set.at_mut(point).sort_by_key(|r| r.t);
    }
    Ok(set)
}
