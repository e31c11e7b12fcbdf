//! Bit-level reading of RBSP data: emulation prevention removal and `ue(v)`.

use super::BitstreamError;

/// Removes `emulation_prevention_three_byte`s (the `03` in `00 00 03`) from
/// at most `limit` input bytes.
pub fn unescape_rbsp(data: &[u8], limit: usize) -> Vec<u8> {
    let data = &data[..data.len().min(limit)];
    let mut out = Vec::with_capacity(data.len());
    let mut zeros = 0usize;
    for &b in data {
        if zeros >= 2 && b == 0x03 {
            zeros = 0;
            continue;
        }
        zeros = if b == 0 { zeros + 1 } else { 0 };
        out.push(b);
    }
    out
}

/// MSB-first bit cursor over an RBSP buffer.
#[derive(Debug, Clone)]
pub struct BitReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> BitReader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    /// Current position in bits from the start of the buffer.
    pub fn position(&self) -> usize {
        self.pos
    }

    pub fn bits_left(&self) -> usize {
        self.buf.len() * 8 - self.pos
    }

    pub fn read_bit(&mut self) -> Result<bool, BitstreamError> {
        if self.pos >= self.buf.len() * 8 {
            return Err(BitstreamError::OutOfBits { position: self.pos });
        }
        let byte = self.buf[self.pos / 8];
        let bit = (byte >> (7 - (self.pos % 8))) & 1;
        self.pos += 1;
        Ok(bit == 1)
    }

    /// Reads `count` bits (at most 64) as an unsigned integer.
    pub fn read_bits(&mut self, count: u32) -> Result<u64, BitstreamError> {
        assert!(count <= 64, "read_bits supports at most 64 bits");
        if (count as usize) > self.bits_left() {
            return Err(BitstreamError::OutOfBits { position: self.pos });
        }
        let mut v = 0u64;
        for _ in 0..count {
            v = (v << 1) | u64::from(self.read_bit()?);
        }
        Ok(v)
    }

    /// Reads one unsigned Exp-Golomb codeword, `ue(v)`.
    ///
    /// Counts `z` leading zero bits, then reads `z + 1` bits `b` and returns
    /// `b - 1`. The cursor is left untouched on error.
    pub fn read_ue(&mut self) -> Result<u64, BitstreamError> {
        let start = self.pos;
        let mut zeros = 0u32;
        loop {
            match self.read_bit() {
                Ok(true) => break,
                Ok(false) => {
                    zeros += 1;
                    if zeros > 63 {
                        self.pos = start;
                        return Err(BitstreamError::ExpGolombTooLong { position: start });
                    }
                }
                Err(_) => {
                    self.pos = start;
                    return Err(BitstreamError::OutOfBits { position: start });
                }
            }
        }
        // the terminating 1 is the leading bit of `b`
        let suffix = match self.read_bits(zeros) {
            Ok(v) => v,
            Err(_) => {
                self.pos = start;
                return Err(BitstreamError::OutOfBits { position: start });
            }
        };
        Ok(((1u64 << zeros) | suffix) - 1)
    }
}

/// Free-function form of [`BitReader::read_ue`].
pub fn read_exp_golomb(reader: &mut BitReader<'_>) -> Result<u64, BitstreamError> {
    reader.read_ue()
}
