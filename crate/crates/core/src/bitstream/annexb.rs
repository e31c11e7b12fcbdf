//! Annex B framing: locating start codes and cutting the stream into NAL units.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::{BitstreamError, NalUnit};

/// How far into a stream the first start code is searched for before the
/// input is declared not to be Annex B.
pub const START_CODE_SEARCH_LIMIT: usize = 64 * 1024;

/// Container or codec family recognised from the first bytes of a file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamFormat {
    AnnexBH264,
    AnnexBHevc,
    Mp4,
    Matroska,
    MpegTs,
    Unknown,
}

impl fmt::Display for StreamFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            StreamFormat::AnnexBH264 => "H.264 Annex B",
            StreamFormat::AnnexBHevc => "HEVC Annex B",
            StreamFormat::Mp4 => "MP4/ISO-BMFF container",
            StreamFormat::Matroska => "Matroska/WebM container",
            StreamFormat::MpegTs => "MPEG-TS container",
            StreamFormat::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

impl StreamFormat {
    pub(crate) fn hint(self) -> Option<&'static str> {
        match self {
            StreamFormat::Mp4 | StreamFormat::Matroska | StreamFormat::MpegTs => Some(
                "container input must be demuxed first, e.g. `ffmpeg -i in.mp4 -c:v copy -bsf:v h264_mp4toannexb -f h264 out.h264`",
            ),
            _ => None,
        }
    }
}

/// Sniffs the container or codec family of `bytes`.
pub fn detect_format(bytes: &[u8]) -> StreamFormat {
    if bytes.len() >= 8 {
        let tag = &bytes[4..8];
        if [b"ftyp", b"moov", b"mdat", b"free", b"skip", b"wide", b"styp"]
            .iter()
            .any(|t| tag == &t[..])
        {
            return StreamFormat::Mp4;
        }
    }
    if bytes.starts_with(&[0x1A, 0x45, 0xDF, 0xA3]) {
        return StreamFormat::Matroska;
    }
    if bytes.len() > 188 && bytes[0] == 0x47 && bytes[188] == 0x47 {
        return StreamFormat::MpegTs;
    }
    match find_start_code(bytes, 0, bytes.len().min(START_CODE_SEARCH_LIMIT + 3)) {
        Some(p) => {
            let header = &bytes[p + 3..];
            // HEVC VPS/SPS/PPS/AUD/SEI headers: type << 1 in the first byte,
            // nuh_temporal_id_plus1 = 1 in the second.
            if header.len() >= 2 && matches!(header[0], 0x40 | 0x42 | 0x44 | 0x46 | 0x4E) && header[1] == 0x01 {
                StreamFormat::AnnexBHevc
            } else {
                StreamFormat::AnnexBH264
            }
        }
        None => StreamFormat::Unknown,
    }
}

/// Returns the index of the first `00 00 01` whose first zero lies in
/// `from..end`.
fn find_start_code(bytes: &[u8], from: usize, end: usize) -> Option<usize> {
    let mut i = from;
    while i + 2 < bytes.len() && i < end {
        let third = bytes[i + 2];
        if third > 1 {
            i += 3;
        } else if third == 1 && bytes[i + 1] == 0 && bytes[i] == 0 {
            return Some(i);
        } else {
            i += 1;
        }
    }
    None
}

/// Splits an Annex B byte stream into NAL units.
///
/// Every byte of the input is charged to exactly one unit: bytes before the
/// first start code to the first unit, zero bytes between units to the unit
/// before them. A zero directly in front of `00 00 01` is read as part of a
/// four byte start code.
///
/// Returns `NoStartCode` when the first [`START_CODE_SEARCH_LIMIT`] bytes of a
/// non-empty input contain no start code.
pub fn scan_nal_units(stream: &[u8]) -> Result<Vec<NalUnit>, BitstreamError> {
    if stream.is_empty() {
        return Ok(Vec::new());
    }
    let first = match find_start_code(stream, 0, START_CODE_SEARCH_LIMIT) {
        Some(p) => p,
        None => {
            return Err(BitstreamError::NoStartCode {
                searched: stream.len().min(START_CODE_SEARCH_LIMIT),
                hint: detect_format(stream).hint(),
            })
        }
    };

    // (start code offset, start code length)
    let mut codes: Vec<(usize, u8)> = Vec::new();
    let mut p = first;
    let mut floor = 0usize;
    loop {
        let (offset, len) = if p > floor && stream[p - 1] == 0 { (p - 1, 4) } else { (p, 3) };
        codes.push((offset, len));
        // the next code cannot overlap this unit's header byte
        floor = p + 4;
        match find_start_code(stream, floor, stream.len()) {
            Some(next) => p = next,
            None => break,
        }
    }

    let mut units: Vec<NalUnit> = Vec::with_capacity(codes.len());
    for (i, &(offset, sc_len)) in codes.iter().enumerate() {
        let payload_start = offset + sc_len as usize;
        let region_end = codes.get(i + 1).map_or(stream.len(), |c| c.0);
        if payload_start >= region_end {
            // start code with no header byte: only possible at end of stream
            match units.last_mut() {
                Some(prev) => {
                    prev.padding_bytes += region_end - offset;
                    prev.truncated = true;
                }
                None => return Ok(Vec::new()),
            }
            continue;
        }
        let region = &stream[payload_start..region_end];
        let payload = region.iter().rposition(|&b| b != 0).map_or(1, |last| last + 1);
        let header = region[0];
        units.push(NalUnit {
            byte_offset: offset,
            start_code_len: sc_len,
            payload_size_bytes: payload,
            padding_bytes: region.len() - payload,
            leading_bytes: if units.is_empty() { offset } else { 0 },
            nal_unit_type: header & 0x1F,
            nal_ref_idc: (header >> 5) & 0x03,
            forbidden_bit: header & 0x80 != 0,
            truncated: false,
        });
    }
    if let Some(last) = units.last_mut() {
        if last.is_vcl() && last.payload_size_bytes < 2 {
            last.truncated = true;
        }
    }
    Ok(units)
}
