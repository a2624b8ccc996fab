//! Canonical byte encoding.
//!
//! Integers are big-endian and fixed width, text is UTF-8 behind a 4-byte
//! length prefix, lists carry a 4-byte count prefix. Decoding is strict: any
//! input that would not re-encode to the same bytes is rejected.

use crate::crypto::Digest;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("unexpected end of input at byte {0}")]
    Truncated(usize),
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("invalid UTF-8 at byte {0}")]
    InvalidUtf8(usize),
    #[error("unknown tag {tag:#04x} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("invalid value for {0}")]
    InvalidValue(&'static str),
}

#[derive(Debug, Default, Clone)]
pub struct Encoder {
    buf: Vec<u8>,
}

impl Encoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn u8(&mut self, v: u8) -> &mut Self {
        self.buf.push(v);
        self
    }

    pub fn u32(&mut self, v: u32) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.buf.extend_from_slice(&v.to_be_bytes());
        self
    }

    pub fn raw(&mut self, bytes: &[u8]) -> &mut Self {
        self.buf.extend_from_slice(bytes);
        self
    }

    pub fn digest(&mut self, d: &Digest) -> &mut Self {
        self.raw(d.as_bytes())
    }

    pub fn len_prefix(&mut self, len: usize) -> &mut Self {
        self.u32(u32::try_from(len).expect("length exceeds u32"))
    }

    pub fn text(&mut self, s: &str) -> &mut Self {
        self.len_prefix(s.len()).raw(s.as_bytes())
    }

    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.len_prefix(b.len()).raw(b)
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[derive(Debug)]
pub struct Decoder<'a> {
    input: &'a [u8],
    pos: usize,
}

impl<'a> Decoder<'a> {
    pub fn new(input: &'a [u8]) -> Self {
        Decoder { input, pos: 0 }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&end| end <= self.input.len())
            .ok_or(DecodeError::Truncated(self.pos))?;
        let out = &self.input[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let mut out = [0u8; N];
        out.copy_from_slice(self.take(N)?);
        Ok(out)
    }

    pub fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }

    pub fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_be_bytes(self.array()?))
    }

    pub fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_be_bytes(self.array()?))
    }

    pub fn digest(&mut self) -> Result<Digest, DecodeError> {
        Ok(Digest(self.array()?))
    }

    pub fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let len = self.u32()? as usize;
        self.take(len)
    }

    pub fn text(&mut self) -> Result<String, DecodeError> {
        let start = self.pos + 4;
        let raw = self.bytes()?;
        std::str::from_utf8(raw)
            .map(str::to_owned)
            .map_err(|e| DecodeError::InvalidUtf8(start + e.valid_up_to()))
    }

    /// Reads a list count, rejecting counts that could not possibly fit in
    /// the remaining input given `min_item_len` bytes per item.
    pub fn count(&mut self, min_item_len: usize) -> Result<usize, DecodeError> {
        let n = self.u32()? as usize;
        if n.saturating_mul(min_item_len.max(1)) > self.input.len() - self.pos {
            return Err(DecodeError::Truncated(self.pos));
        }
        Ok(n)
    }

    pub fn bool(&mut self) -> Result<bool, DecodeError> {
        match self.u8()? {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(DecodeError::InvalidValue("bool")),
        }
    }

    pub fn finish(self) -> Result<(), DecodeError> {
        match self.input.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::TrailingBytes(n)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_width_big_endian() {
        let mut e = Encoder::new();
        e.u8(1).u32(0x0203_0405).u64(6).text("hé");
        let bytes = e.finish();
        assert_eq!(
            bytes,
            [1, 2, 3, 4, 5, 0, 0, 0, 0, 0, 0, 0, 6, 0, 0, 0, 3, b'h', 0xc3, 0xa9]
        );
        let mut d = Decoder::new(&bytes);
        assert_eq!(d.u8().unwrap(), 1);
        assert_eq!(d.u32().unwrap(), 0x0203_0405);
        assert_eq!(d.u64().unwrap(), 6);
        assert_eq!(d.text().unwrap(), "hé");
        d.finish().unwrap();
    }

    #[test]
    fn strictness() {
        assert_eq!(Decoder::new(&[2]).bool(), Err(DecodeError::InvalidValue("bool")));
        assert_eq!(Decoder::new(&[0, 0, 0, 9, 1]).text(), Err(DecodeError::Truncated(4)));
        assert_eq!(
            Decoder::new(&[0, 0, 0, 1, 0xff]).text(),
            Err(DecodeError::InvalidUtf8(4))
        );
        assert_eq!(Decoder::new(&[0xff, 0xff, 0xff, 0xff]).count(1), Err(DecodeError::Truncated(4)));
        let mut d = Decoder::new(&[1, 2]);
        d.u8().unwrap();
        assert_eq!(d.finish(), Err(DecodeError::TrailingBytes(1)));
    }
}
