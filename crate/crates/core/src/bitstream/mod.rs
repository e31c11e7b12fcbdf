//! Frame-size extraction from H.264 Annex B elementary streams.
//!
//! Nothing here decodes pixels. The stream is split on start codes, NAL units
//! are grouped into access units using `first_mb_in_slice`, and each access
//! unit contributes one sample: the number of bits it occupies in the file,
//! start codes included. SPS/PPS/SEI/AUD units are charged to the picture
//! that follows them, so the samples of a well-formed stream add up to
//! exactly `8 * file_len`.

mod access_unit;
mod annexb;
pub mod bits;
mod extract;
pub mod io;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use access_unit::{classify_frame_type, group_access_units, AuGrouping};
pub use annexb::{detect_format, scan_nal_units, StreamFormat, START_CODE_SEARCH_LIMIT};
pub use bits::{read_exp_golomb, unescape_rbsp, BitReader};
pub use extract::{extract_frame_sizes, extract_from_bytes, Extraction};

/// Errors produced while framing or parsing a byte stream.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BitstreamError {
    #[error("no Annex B start code in the first {searched} bytes{}", hint.map(|h| format!(" ({h})")).unwrap_or_default())]
    NoStartCode {
        searched: usize,
        hint: Option<&'static str>,
    },
    #[error("unsupported stream format: {0}")]
    UnsupportedFormat(StreamFormat),
    #[error("ran out of bits at bit {position}")]
    OutOfBits { position: usize },
    #[error("exp-golomb codeword at bit {position} has more than 63 leading zeros")]
    ExpGolombTooLong { position: usize },
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Non-fatal conditions found while parsing. They are reported alongside a
/// successful result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParseWarning {
    /// The final NAL unit looks cut off (start code at end of file).
    TruncatedUnit { byte_offset: usize },
    /// A NAL header had its forbidden_zero_bit set.
    ForbiddenBit { byte_offset: usize },
    /// The stream contained no coded slices.
    NoVclUnits,
}

/// One NAL unit as framed by Annex B start codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NalUnit {
    /// Offset of the start code in the stream.
    pub byte_offset: usize,
    /// 3 for `00 00 01`, 4 for `00 00 00 01`.
    pub start_code_len: u8,
    /// NAL header byte plus RBSP, up to and including the last non-zero byte.
    pub payload_size_bytes: usize,
    /// Zero bytes after the payload and before the next start code.
    pub padding_bytes: usize,
    /// Bytes before the first start code (leading zeros or junk). Only the
    /// first unit of a stream can have these.
    pub leading_bytes: usize,
    pub nal_unit_type: u8,
    pub nal_ref_idc: u8,
    pub forbidden_bit: bool,
    pub truncated: bool,
}

impl NalUnit {
    /// Offset of the NAL header byte.
    pub fn payload_offset(&self) -> usize {
        self.byte_offset + self.start_code_len as usize
    }

    /// Bytes charged to this unit: leading bytes, start code, payload and padding.
    pub fn span_len(&self) -> usize {
        self.leading_bytes + self.start_code_len as usize + self.payload_size_bytes + self.padding_bytes
    }

    /// Start of the span charged to this unit.
    pub fn span_start(&self) -> usize {
        self.byte_offset - self.leading_bytes
    }

    pub fn payload<'a>(&self, stream: &'a [u8]) -> &'a [u8] {
        let start = self.payload_offset();
        &stream[start..start + self.payload_size_bytes]
    }

    /// Coded slice of a picture (types 1 to 5).
    pub fn is_vcl(&self) -> bool {
        (1..=5).contains(&self.nal_unit_type)
    }

    pub fn is_idr(&self) -> bool {
        self.nal_unit_type == 5
    }
}

/// Coding type of one picture.
///
/// SI slices count as `I` and SP slices as `P`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameType {
    I,
    P,
    B,
    Unknown,
}

impl FrameType {
    /// Maps an H.264 `slice_type` value (0..=9) to a frame type.
    pub fn from_slice_type(slice_type: u64) -> Self {
        match slice_type % 5 {
            _ if slice_type > 9 => FrameType::Unknown,
            0 | 3 => FrameType::P,
            1 => FrameType::B,
            2 | 4 => FrameType::I,
            _ => unreachable!(),
        }
    }

    pub fn as_char(self) -> char {
        match self {
            FrameType::I => 'I',
            FrameType::P => 'P',
            FrameType::B => 'B',
            FrameType::Unknown => 'U',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'I' => Some(FrameType::I),
            'P' => Some(FrameType::P),
            'B' => Some(FrameType::B),
            'U' => Some(FrameType::Unknown),
            _ => None,
        }
    }
}

impl fmt::Display for FrameType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

/// One coded picture.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessUnit {
    /// Decode-order position.
    pub index: usize,
    pub byte_offset: usize,
    pub byte_len: usize,
    /// `8 * byte_len`.
    pub size_bits: u64,
    pub frame_type: FrameType,
    /// Index of the first member in the NAL list this unit was grouped from.
    pub first_nal: usize,
    pub nal_count: usize,
}

/// Per-frame compressed sizes of one stream, in decode order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct FrameSizeSeries {
    pub source_id: String,
    /// Size of each frame in bits.
    pub values: Vec<u64>,
    pub frame_types: Vec<FrameType>,
    /// Class label, present for labelled (e.g. synthetic) series.
    pub label: Option<String>,
}

impl FrameSizeSeries {
    pub fn new(source_id: impl Into<String>, values: Vec<u64>, frame_types: Vec<FrameType>) -> Self {
        assert_eq!(values.len(), frame_types.len(), "one frame type per size");
        Self {
            source_id: source_id.into(),
            values,
            frame_types,
            label: None,
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn total_bits(&self) -> u64 {
        self.values.iter().sum()
    }

    pub fn frame_type_string(&self) -> String {
        self.frame_types.iter().map(|t| t.as_char()).collect()
    }
}
