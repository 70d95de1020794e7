//! Per-slot CSV traces.
//!
//! Columns, in order: `block,slot,phase,state,x1,x2,y3`. `slot` counts from
//! 0 across the whole chain, `phase` is `code` or `preamble`, `state` is the
//! battery level before the slot, and symbols are `0`/`1`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TRACE_HEADER: [&str; 7] = ["block", "slot", "phase", "state", "x1", "x2", "y3"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Code,
    Preamble,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub block: usize,
    pub slot: usize,
    pub phase: Phase,
    pub state: usize,
    pub x1: u8,
    pub x2: u8,
    pub y3: u8,
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(TRACE_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a trace, checking the header and that symbols are bits.
pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::Io(e.to_string()))?;
    if headers.iter().ne(TRACE_HEADER.iter().copied()) {
        return Err(Error::Io(format!(
            "unexpected trace header {:?}, expected {}",
            headers.iter().collect::<Vec<_>>(),
            TRACE_HEADER.join(",")
        )));
    }
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        let row: TraceRow = rec.map_err(|e| Error::Io(e.to_string()))?;
        if row.x1 > 1 || row.x2 > 1 || row.y3 > 1 {
            return Err(Error::Io(format!("non-binary symbol in slot {}", row.slot)));
        }
        rows.push(row);
    }
    Ok(rows)
}
