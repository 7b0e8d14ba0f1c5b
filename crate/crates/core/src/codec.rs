//! Little-endian binary framing shared by the graph, index and weights files.
//!
//! Container layout: magic (4 bytes) | version (u16) | section count (u32) |
//! sections [tag (4 bytes) | length (u64) | payload] | CRC-32 of everything before it.

use thiserror::Error;

pub const CONTAINER_MAGIC: [u8; 4] = *b"SFLT";
pub const CONTAINER_VERSION: u16 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CodecError {
    #[error("not a recognised file (bad magic)")]
    BadMagic,
    #[error("format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("file is truncated")]
    Truncated,
    #[error("checksum mismatch: file is corrupt")]
    Checksum,
    #[error("missing section `{0}`")]
    MissingSection(String),
    #[error("invalid content: {0}")]
    Invalid(String),
}

#[derive(Debug, Default)]
pub struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }

    pub fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f32(&mut self, v: f32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub fn str(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.bytes(s.as_bytes());
    }

    pub fn len(&self) -> usize {
        self.buf.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buf.is_empty()
    }

    pub fn into_inner(self) -> Vec<u8> {
        self.buf
    }

    /// Appends the CRC-32 trailer and returns the finished bytes.
    pub fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.u32(crc);
        self.buf
    }
}

pub struct ByteReader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.data.len() - self.pos
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.remaining() < n {
            return Err(CodecError::Truncated);
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    pub fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    pub fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn str(&mut self) -> Result<String, CodecError> {
        let n = self.u32()? as usize;
        let raw = self.take(n)?;
        String::from_utf8(raw.to_vec()).map_err(|_| CodecError::Invalid("string is not UTF-8".into()))
    }

    pub fn expect_end(&self) -> Result<(), CodecError> {
        if self.remaining() == 0 {
            Ok(())
        } else {
            Err(CodecError::Invalid(format!("{} trailing bytes", self.remaining())))
        }
    }
}

/// Checks the CRC-32 trailer and returns the bytes it covers.
pub fn verify_checksum(bytes: &[u8]) -> Result<&[u8], CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated);
    }
    let (body, tail) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
    if crc32fast::hash(body) != stored {
        return Err(CodecError::Checksum);
    }
    Ok(body)
}

/// Serialises tagged sections into one checksummed container.
pub fn write_container(sections: &[([u8; 4], Vec<u8>)]) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.bytes(&CONTAINER_MAGIC);
    w.u16(CONTAINER_VERSION);
    w.u32(sections.len() as u32);
    for (tag, payload) in sections {
        w.bytes(tag);
        w.u64(payload.len() as u64);
        w.bytes(payload);
    }
    w.finish()
}

pub fn read_container(bytes: &[u8]) -> Result<Vec<([u8; 4], Vec<u8>)>, CodecError> {
    if bytes.len() < 4 {
        return Err(CodecError::Truncated);
    }
    if bytes[..4] != CONTAINER_MAGIC {
        return Err(CodecError::BadMagic);
    }
    let body = verify_checksum(bytes)?;
    let mut r = ByteReader::new(&body[4..]);
    let version = r.u16()?;
    if version != CONTAINER_VERSION {
        return Err(CodecError::VersionMismatch { found: version.into(), expected: CONTAINER_VERSION.into() });
    }
    let count = r.u32()?;
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let tag: [u8; 4] = r.take(4)?.try_into().expect("4 bytes");
        let len = r.u64()? as usize;
        out.push((tag, r.take(len)?.to_vec()));
    }
    r.expect_end()?;
    Ok(out)
}

pub fn find_section(sections: &[([u8; 4], Vec<u8>)], tag: [u8; 4]) -> Result<&[u8], CodecError> {
    sections
        .iter()
        .find(|(t, _)| *t == tag)
        .map(|(_, p)| p.as_slice())
        .ok_or_else(|| CodecError::MissingSection(String::from_utf8_lossy(&tag).into_owned()))
}
