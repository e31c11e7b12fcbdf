use std::path::Path;

use super::annexb::{detect_format, StreamFormat};
use super::{group_access_units, scan_nal_units, AccessUnit, BitstreamError, FrameSizeSeries, ParseWarning};

/// Everything learned from one stream.
#[derive(Debug, Clone)]
pub struct Extraction {
    pub series: FrameSizeSeries,
    pub access_units: Vec<AccessUnit>,
    pub nal_count: usize,
    pub stream_len: usize,
    pub warnings: Vec<ParseWarning>,
}

/// Runs scan, grouping and frame typing over an in-memory stream.
pub fn extract_from_bytes(stream: &[u8], source_id: &str) -> Result<Extraction, BitstreamError> {
    let nals = scan_nal_units(stream)?;
    if nals.is_empty() {
        return Err(BitstreamError::NoStartCode {
            searched: stream.len(),
            hint: detect_format(stream).hint(),
        });
    }
    if detect_format(stream) == StreamFormat::AnnexBHevc {
        return Err(BitstreamError::UnsupportedFormat(StreamFormat::AnnexBHevc));
    }
    let grouping = group_access_units(&nals, stream);
    let series = FrameSizeSeries::new(
        source_id,
        grouping.units.iter().map(|au| au.size_bits).collect(),
        grouping.units.iter().map(|au| au.frame_type).collect(),
    );
    Ok(Extraction {
        series,
        access_units: grouping.units,
        nal_count: nals.len(),
        stream_len: stream.len(),
        warnings: grouping.warnings,
    })
}

/// Reads an Annex B file and returns its frame-size series. The file name
/// (without directories) becomes the `source_id`.
pub fn extract_frame_sizes(path: impl AsRef<Path>) -> Result<FrameSizeSeries, BitstreamError> {
    extract_file(path.as_ref()).map(|e| e.series)
}

pub(crate) fn extract_file(path: &Path) -> Result<Extraction, BitstreamError> {
    let bytes = std::fs::read(path).map_err(|e| BitstreamError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let source_id = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    extract_from_bytes(&bytes, &source_id)
}
