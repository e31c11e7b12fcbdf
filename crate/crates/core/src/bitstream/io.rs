//! JSON-lines and CSV encodings of frame-size series.
//!
//! One JSON object per stream:
//! `{"source_id":"clip.h264","sizes_bits":[8000,1200],"frame_types":"IP"}`.
//! Labelled series carry an extra `"label"` key.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{FrameSizeSeries, FrameType};

/// Version of the JSONL series layout, reported by `--version`.
pub const SERIES_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum SeriesFormatError {
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Serialize, Deserialize)]
struct SeriesRecord {
    source_id: String,
    sizes_bits: Vec<u64>,
    frame_types: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

/// Encodes one series as a single JSON line (no trailing newline).
pub fn to_json_line(series: &FrameSizeSeries) -> String {
    let rec = SeriesRecord {
        source_id: series.source_id.clone(),
        sizes_bits: series.values.clone(),
        frame_types: series.frame_type_string(),
        label: series.label.clone(),
    };
    serde_json::to_string(&rec).expect("series record always serializes")
}

pub fn parse_json_line(line: &str, line_no: usize) -> Result<FrameSizeSeries, SeriesFormatError> {
    let rec: SeriesRecord =
        serde_json::from_str(line).map_err(|source| SeriesFormatError::Json { line: line_no, source })?;
    let frame_types = rec
        .frame_types
        .chars()
        .map(|c| {
            FrameType::from_char(c).ok_or_else(|| SeriesFormatError::Invalid {
                line: line_no,
                message: format!("unknown frame type {c:?}"),
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if frame_types.len() != rec.sizes_bits.len() {
        return Err(SeriesFormatError::Invalid {
            line: line_no,
            message: format!("{} sizes but {} frame types", rec.sizes_bits.len(), frame_types.len()),
        });
    }
    Ok(FrameSizeSeries {
        source_id: rec.source_id,
        values: rec.sizes_bits,
        frame_types,
        label: rec.label,
    })
}

pub fn write_jsonl<W: Write>(mut out: W, series: &[FrameSizeSeries]) -> std::io::Result<()> {
    for s in series {
        writeln!(out, "{}", to_json_line(s))?;
    }
    Ok(())
}

/// Reads every non-blank line as a series record.
pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<FrameSizeSeries>, SeriesFormatError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(parse_json_line(&line, i + 1)?);
    }
    Ok(out)
}

/// Writes `frame_index,size_bits,frame_type` rows for one series.
pub fn write_csv<W: Write>(out: W, series: &FrameSizeSeries) -> Result<(), SeriesFormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame_index", "size_bits", "frame_type"])?;
    for (i, (size, ty)) in series.values.iter().zip(&series.frame_types).enumerate() {
        w.write_record([i.to_string(), size.to_string(), ty.as_char().to_string()])?;
    }
    w.flush()?;
    Ok(())
}
