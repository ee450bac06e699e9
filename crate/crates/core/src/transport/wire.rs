//! Length-prefixed little-endian frame format.
//!
//! ```text
//! u32 length of everything after this field
//! u32 magic | u16 version | u32 node_id | i64 capture time (us) | u32 count
//! count x { u32 track_id | u8 class | f64 x y yaw v omega | f64 cov_xx cov_xy cov_yy }
//! ```

use std::io::{self, Read, Write};

use thiserror::Error;

use crate::tracking::{ReportedObject, StampedObjectList};
use crate::{ObjectClass, Timestamp};

pub const MAGIC: u32 = u32::from_le_bytes(*b"CPOL");
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 8 + 4;
pub const RECORD_LEN: usize = 4 + 1 + 8 * 5 + 8 * 3;
/// Frames larger than this are rejected before allocation.
pub const MAX_FRAME_LEN: usize = HEADER_LEN + RECORD_LEN * 65_536;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DecodeError {
    #[error("truncated frame: needed {needed} bytes, have {available}")]
    Truncated { needed: usize, available: usize },
    #[error("bad magic 0x{0:08x}")]
    BadMagic(u32),
    #[error("unsupported wire version {0}")]
    UnsupportedVersion(u16),
    #[error("frame length {declared} does not match {count} records ({expected} bytes)")]
    LengthMismatch { declared: usize, count: usize, expected: usize },
    #[error("frame length {0} exceeds limit")]
    TooLarge(usize),
    #[error("record {index}: invalid class code {code}")]
    InvalidClass { index: usize, code: u8 },
}

pub fn encoded_len(msg: &StampedObjectList) -> usize {
    4 + HEADER_LEN + RECORD_LEN * msg.objects.len()
}

pub fn encode(msg: &StampedObjectList) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(msg));
    let body = (HEADER_LEN + RECORD_LEN * msg.objects.len()) as u32;
    out.extend_from_slice(&body.to_le_bytes());
    out.extend_from_slice(&MAGIC.to_le_bytes());
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&msg.node_id.to_le_bytes());
    out.extend_from_slice(&msg.capture_timestamp.micros().to_le_bytes());
    out.extend_from_slice(&(msg.objects.len() as u32).to_le_bytes());
    for o in &msg.objects {
        out.extend_from_slice(&o.track_id.to_le_bytes());
        out.push(o.class.as_u8());
        for v in [o.x, o.y, o.yaw, o.v, o.omega] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in o.covariance {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        let end = self.pos + N;
        let Some(bytes) = self.buf.get(self.pos..end) else {
            return Err(DecodeError::Truncated { needed: end, available: self.buf.len() });
        };
        self.pos = end;
        Ok(bytes.try_into().expect("slice length"))
    }
    fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take::<1>()?[0])
    }
    fn u16(&mut self) -> Result<u16, DecodeError> {
        self.take().map(u16::from_le_bytes)
    }
    fn u32(&mut self) -> Result<u32, DecodeError> {
        self.take().map(u32::from_le_bytes)
    }
    fn i64(&mut self) -> Result<i64, DecodeError> {
        self.take().map(i64::from_le_bytes)
    }
    fn f64(&mut self) -> Result<f64, DecodeError> {
        self.take().map(f64::from_le_bytes)
    }
}

/// Decodes one frame from the front of `bytes` and returns it with the
/// number of bytes consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(StampedObjectList, usize), DecodeError> {
    let mut c = Cursor { buf: bytes, pos: 0 };
    let declared = c.u32()? as usize;
    if declared > MAX_FRAME_LEN {
        return Err(DecodeError::TooLarge(declared));
    }
    if bytes.len() < 4 + declared {
        return Err(DecodeError::Truncated { needed: 4 + declared, available: bytes.len() });
    }
    c.buf = &bytes[..4 + declared];
    let magic = c.u32()?;
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    let node_id = c.u32()?;
    let capture_timestamp = Timestamp::from_micros(c.i64()?);
    let count = c.u32()? as usize;
    let expected = HEADER_LEN + RECORD_LEN * count;
    if declared != expected {
        return Err(DecodeError::LengthMismatch { declared, count, expected });
    }
    let mut objects = Vec::with_capacity(count);
    for index in 0..count {
        let track_id = c.u32()?;
        let code = c.u8()?;
        let class = ObjectClass::from_u8(code).ok_or(DecodeError::InvalidClass { index, code })?;
        let (x, y, yaw, v, omega) = (c.f64()?, c.f64()?, c.f64()?, c.f64()?, c.f64()?);
        let covariance = [c.f64()?, c.f64()?, c.f64()?];
        objects.push(ReportedObject { track_id, class, x, y, yaw, v, omega, covariance });
    }
    Ok((StampedObjectList { node_id, capture_timestamp, objects }, c.pos))
}

/// Decodes a buffer holding exactly one frame.
pub fn decode(bytes: &[u8]) -> Result<StampedObjectList, DecodeError> {
    let (msg, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError::LengthMismatch {
            declared: used - 4,
            count: msg.objects.len(),
            expected: bytes.len() - 4,
        });
    }
    Ok(msg)
}

pub fn write_frame<W: Write>(out: &mut W, msg: &StampedObjectList) -> io::Result<()> {
    out.write_all(&encode(msg))
}

/// Reads one frame from a stream. Returns `Ok(None)` on a clean end of stream.
pub fn read_frame<R: Read>(input: &mut R) -> io::Result<Option<StampedObjectList>> {
    let mut len = [0u8; 4];
    match input.read_exact(&mut len) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(e),
    }
    let declared = u32::from_le_bytes(len) as usize;
    if declared > MAX_FRAME_LEN {
        return Err(io::Error::new(io::ErrorKind::InvalidData, DecodeError::TooLarge(declared)));
    }
    let mut buf = vec![0u8; 4 + declared];
    buf[..4].copy_from_slice(&len);
    input.read_exact(&mut buf[4..])?;
    decode(&buf).map(Some).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
}
