//! Grouping NAL units into pictures and reading their slice type.

use super::bits::{unescape_rbsp, BitReader};
use super::{AccessUnit, BitstreamError, FrameType, NalUnit, ParseWarning};

/// Bytes of slice data unescaped per slice; enough for `first_mb_in_slice`
/// and `slice_type`.
const SLICE_HEADER_PEEK: usize = 32;

/// Result of [`group_access_units`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AuGrouping {
    pub units: Vec<AccessUnit>,
    pub warnings: Vec<ParseWarning>,
}

/// `(first_mb_in_slice, slice_type)` of a slice NAL.
fn slice_header_prefix(nal: &NalUnit, stream: &[u8]) -> Result<(u64, u64), BitstreamError> {
    let payload = nal.payload(stream);
    let rbsp = unescape_rbsp(&payload[1..], SLICE_HEADER_PEEK);
    let mut r = BitReader::new(&rbsp);
    let first_mb = r.read_ue()?;
    let slice_type = r.read_ue()?;
    Ok((first_mb, slice_type))
}

fn first_mb_in_slice(nal: &NalUnit, stream: &[u8]) -> Option<u64> {
    let payload = nal.payload(stream);
    let rbsp = unescape_rbsp(&payload[1..], SLICE_HEADER_PEEK);
    BitReader::new(&rbsp).read_ue().ok()
}

/// End of sequence, end of stream and filler data close the picture they
/// follow rather than opening the next one.
fn trails_picture(nal_unit_type: u8) -> bool {
    matches!(nal_unit_type, 10..=12)
}

/// Frame type of an access unit from the first slice among `members`.
///
/// IDR slices are always `I`. Otherwise `slice_type` is read from the slice
/// header; a header too short to hold it yields `Unknown`.
pub fn classify_frame_type(members: &[NalUnit], stream: &[u8]) -> FrameType {
    let Some(first_vcl) = members.iter().find(|n| n.is_vcl()) else {
        return FrameType::Unknown;
    };
    if first_vcl.is_idr() {
        return FrameType::I;
    }
    match slice_header_prefix(first_vcl, stream) {
        Ok((_, slice_type)) => FrameType::from_slice_type(slice_type),
        Err(_) => FrameType::Unknown,
    }
}

/// Groups NAL units into access units.
///
/// A new access unit begins at an access unit delimiter, or at a slice whose
/// `first_mb_in_slice` is 0 (or unreadable) once the current unit already
/// holds a slice. Parameter sets, SEI and delimiters are charged to the
/// picture after them; non-VCL units left over at the end of the stream go to
/// the last picture.
pub fn group_access_units(nals: &[NalUnit], stream: &[u8]) -> AuGrouping {
    let mut starts: Vec<usize> = Vec::new();
    let mut pending: Option<usize> = None;
    let mut force_new = false;
    let mut have_picture = false;

    for (i, nal) in nals.iter().enumerate() {
        if nal.is_vcl() {
            let continues = have_picture && !force_new && matches!(first_mb_in_slice(nal, stream), Some(mb) if mb > 0);
            if !continues {
                starts.push(pending.unwrap_or(i));
            }
            pending = None;
            force_new = false;
            have_picture = true;
        } else if trails_picture(nal.nal_unit_type) && have_picture && pending.is_none() {
            // stays with the current picture
        } else {
            if nal.nal_unit_type == 9 {
                force_new = true;
            }
            pending.get_or_insert(i);
        }
    }

    let mut grouping = AuGrouping::default();
    for nal in nals.iter().filter(|n| n.forbidden_bit) {
        grouping.warnings.push(ParseWarning::ForbiddenBit { byte_offset: nal.byte_offset });
    }
    if let Some(last) = nals.last().filter(|n| n.truncated) {
        grouping.warnings.push(ParseWarning::TruncatedUnit { byte_offset: last.byte_offset });
    }
    if starts.is_empty() {
        if !nals.is_empty() {
            grouping.warnings.push(ParseWarning::NoVclUnits);
        }
        return grouping;
    }

    grouping.units.reserve(starts.len());
    for (index, &first) in starts.iter().enumerate() {
        let end = starts.get(index + 1).copied().unwrap_or(nals.len());
        let members = &nals[first..end];
        let byte_len: usize = members.iter().map(NalUnit::span_len).sum();
        grouping.units.push(AccessUnit {
            index,
            byte_offset: members[0].span_start(),
            byte_len,
            size_bits: 8 * byte_len as u64,
            frame_type: classify_frame_type(members, stream),
            first_nal: first,
            nal_count: members.len(),
        });
    }
    grouping
}

#[cfg(test)]
mod tests {
    use super::super::bits::test_support::BitWriter;
    use super::super::scan_nal_units;
    use super::*;

    fn slice_nal(header: u8, first_mb: u64, slice_type: u64, body: usize) -> Vec<u8> {
        let mut w = BitWriter::default();
        w.put_ue(first_mb);
        w.put_ue(slice_type);
        w.put_ue(0); // pic_parameter_set_id
        w.put_bits(0b1011_0110, 8);
        let mut out = vec![0, 0, 0, 1, header];
        out.extend(w.finish_rbsp());
        out.extend(std::iter::repeat(0x5A).take(body));
        out
    }

    fn param_sets() -> Vec<u8> {
        let mut s = vec![0, 0, 0, 1, 0x67, 0x42, 0xC0, 0x1E, 0xDA];
        s.extend([0, 0, 0, 1, 0x68, 0xCE, 0x38, 0x80]);
        s
    }

    fn group(stream: &[u8]) -> AuGrouping {
        let nals = scan_nal_units(stream).unwrap();
        group_access_units(&nals, stream)
    }

    #[test]
    fn parameter_sets_join_following_idr() {
        let mut s = param_sets();
        s.extend(slice_nal(0x65, 0, 7, 40));
        s.extend(slice_nal(0x41, 0, 5, 10));
        s.extend(slice_nal(0x41, 0, 5, 12));
        let g = group(&s);
        assert_eq!(g.units.len(), 3);
        assert_eq!(g.units[0].nal_count, 3);
        assert_eq!(g.units[0].first_nal, 0);
        let types: Vec<_> = g.units.iter().map(|a| a.frame_type).collect();
        assert_eq!(types, vec![FrameType::I, FrameType::P, FrameType::P]);
        let total: u64 = g.units.iter().map(|a| a.size_bits).sum();
        assert_eq!(total, 8 * s.len() as u64);
    }

    #[test]
    fn two_slices_per_picture_pair_up() {
        let mut s = param_sets();
        s.extend(slice_nal(0x65, 0, 7, 20));
        s.extend(slice_nal(0x65, 40, 7, 20));
        s.extend(slice_nal(0x41, 0, 0, 8));
        s.extend(slice_nal(0x41, 40, 0, 8));
        let g = group(&s);
        assert_eq!(g.units.len(), 2);
        assert_eq!(g.units[0].nal_count, 4);
        assert_eq!(g.units[1].nal_count, 2);
        assert_eq!(g.units[1].byte_offset, g.units[0].byte_offset + g.units[0].byte_len);
    }

    #[test]
    fn delimiter_forces_new_picture() {
        let mut s = vec![0, 0, 0, 1, 0x09, 0xF0];
        s.extend(slice_nal(0x65, 0, 7, 5));
        s.extend([0, 0, 0, 1, 0x09, 0x30]);
        // broken encoder: second picture starts at mb 3, the AUD still splits it
        s.extend(slice_nal(0x01, 3, 1, 5));
        let g = group(&s);
        assert_eq!(g.units.len(), 2);
        assert_eq!(g.units[1].frame_type, FrameType::B);
        assert_eq!(g.units[1].nal_count, 2);
    }

    #[test]
    fn sei_between_pictures_goes_forward() {
        let mut s = param_sets();
        s.extend(slice_nal(0x65, 0, 7, 5));
        s.extend([0, 0, 1, 0x06, 0x05, 0x01, 0x80]);
        s.extend(slice_nal(0x41, 0, 0, 5));
        let g = group(&s);
        assert_eq!(g.units.len(), 2);
        assert_eq!(g.units[0].nal_count, 3);
        assert_eq!(g.units[1].nal_count, 2);
    }

    #[test]
    fn end_of_stream_stays_with_last_picture() {
        let mut s = param_sets();
        s.extend(slice_nal(0x65, 0, 7, 5));
        s.extend([0, 0, 1, 0x0B]);
        let g = group(&s);
        assert_eq!(g.units.len(), 1);
        assert_eq!(g.units[0].nal_count, 4);
        assert_eq!(g.units[0].size_bits, 8 * s.len() as u64);
    }

    #[test]
    fn empty_list_gives_no_units() {
        let g = group_access_units(&[], &[]);
        assert!(g.units.is_empty());
        assert!(g.warnings.is_empty());
    }

    #[test]
    fn stream_without_slices_warns() {
        let s = param_sets();
        let g = group(&s);
        assert!(g.units.is_empty());
        assert_eq!(g.warnings, vec![ParseWarning::NoVclUnits]);
    }

    #[test]
    fn idr_is_intra_regardless_of_slice_type() {
        let s = slice_nal(0x65, 0, 0, 3);
        let nals = scan_nal_units(&s).unwrap();
        assert_eq!(classify_frame_type(&nals, &s), FrameType::I);
    }

    #[test]
    fn slice_types_map_to_frame_types() {
        for (st, ft) in [(0, FrameType::P), (6, FrameType::B), (2, FrameType::I), (8, FrameType::P), (9, FrameType::I)] {
            let s = slice_nal(0x41, 0, st, 3);
            let nals = scan_nal_units(&s).unwrap();
            assert_eq!(classify_frame_type(&nals, &s), ft, "slice_type {st}");
        }
    }

    #[test]
    fn corrupted_slice_header_is_unknown() {
        // header byte followed by all-zero bits: no ue(v) terminator
        let s = [0, 0, 1, 0x41, 0x00, 0x00, 0x00, 0x00];
        let nals = scan_nal_units(&s).unwrap();
        assert_eq!(classify_frame_type(&nals, &s), FrameType::Unknown);
    }

    #[test]
    fn slice_header_behind_emulation_prevention() {
        // first_mb_in_slice = 0, slice_type = 0 ... then 00 00 03 inside header bytes
        let s = [0, 0, 1, 0x41, 0b1100_0000, 0x00, 0x00, 0x03, 0x01, 0x80];
        let nals = scan_nal_units(&s).unwrap();
        assert_eq!(classify_frame_type(&nals, &s), FrameType::P);
    }
}
