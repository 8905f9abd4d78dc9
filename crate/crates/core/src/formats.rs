//! The 16-byte header shared by all LUT and CLT files.
//!
//! ```text
//! offset  size  field
//!      0     4  magic (ASCII)
//!      4     2  version, u16 LE (currently 1)
//!      6     2  n, bits per raw coordinate, u16 LE
//!      8     4  k, crystal count, u32 LE
//!     12     2  entry width in bytes, u16 LE
//!     14     2  reserved, must be zero
//! ```
//! All payload values that follow are little-endian.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const HEADER_BYTES: usize = 16;
pub const FORMAT_VERSION: u16 = 1;

pub const MAGIC_FULL_CLT: [u8; 4] = *b"FCLT";
pub const MAGIC_BOUNDARY_CLT: [u8; 4] = *b"BCLT";
pub const MAGIC_PEAK_LUT: [u8; 4] = *b"PKLT";
pub const MAGIC_TIME_LUT: [u8; 4] = *b"TOLT";

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    Magic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported version {0}")]
    Version(u16),
    #[error("header mismatch: {0}")]
    Header(String),
    #[error("payload length {found} bytes, expected {expected}")]
    Length { expected: usize, found: usize },
    #[error("invalid content: {0}")]
    Content(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FileHeader {
    pub magic: [u8; 4],
    pub n_bits: u16,
    pub k: u32,
    pub entry_bytes: u16,
}

impl FileHeader {
    pub fn to_bytes(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(&self.magic);
        out[4..6].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
        out[6..8].copy_from_slice(&self.n_bits.to_le_bytes());
        out[8..12].copy_from_slice(&self.k.to_le_bytes());
        out[12..14].copy_from_slice(&self.entry_bytes.to_le_bytes());
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, FormatError> {
        if bytes.len() < HEADER_BYTES {
            return Err(FormatError::Length { expected: HEADER_BYTES, found: bytes.len() });
        }
        let magic: [u8; 4] = bytes[0..4].try_into().unwrap();
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(FormatError::Version(version));
        }
        if bytes[14] != 0 || bytes[15] != 0 {
            return Err(FormatError::Header("reserved bytes are nonzero".into()));
        }
        Ok(Self {
            magic,
            n_bits: u16::from_le_bytes([bytes[6], bytes[7]]),
            k: u32::from_le_bytes(bytes[8..12].try_into().unwrap()),
            entry_bytes: u16::from_le_bytes([bytes[12], bytes[13]]),
        })
    }

    /// Checks this header against the one a reader expects.
    pub fn expect(&self, expected: &FileHeader) -> Result<(), FormatError> {
        if self.magic != expected.magic {
            return Err(FormatError::Magic { expected: expected.magic, found: self.magic });
        }
        if self != expected {
            return Err(FormatError::Header(format!("found {self:?}, expected {expected:?}")));
        }
        Ok(())
    }
}

/// Reads a whole LUT file and returns its payload after validating the header.
pub fn read_payload<R: Read>(mut r: R, expected: &FileHeader, payload_bytes: usize) -> Result<Vec<u8>, FormatError> {
    let mut buf = Vec::with_capacity(HEADER_BYTES + payload_bytes);
    r.read_to_end(&mut buf)?;
    FileHeader::parse(&buf)?.expect(expected)?;
    let payload = buf.split_off(HEADER_BYTES);
    if payload.len() != payload_bytes {
        return Err(FormatError::Length { expected: payload_bytes, found: payload.len() });
    }
    Ok(payload)
}

pub fn write_file<W: Write>(mut w: W, header: &FileHeader, payload: &[u8]) -> io::Result<()> {
    w.write_all(&header.to_bytes())?;
    w.write_all(payload)?;
    w.flush()
}

pub(crate) fn u16s_le(payload: &[u8]) -> impl Iterator<Item = u16> + '_ {
    payload.chunks_exact(2).map(|c| u16::from_le_bytes([c[0], c[1]]))
}
