//! Framed binary wire protocol spoken with external backends.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! request  = "M3MI" u16:version(=1) u16:width u16:height u8:band
//!            u16:scale_milli u8:perspective f32[width*height*3] u8[width*height]
//! response = "M3MO" u16:width u16:height f32[width*height*3]
//! ```
//!
//! Tile samples are interleaved RGB in row-major order. Mask bytes are 0
//! (keep) or 1 (restore). A backend process answers each request with one
//! response and then waits for the next request on the same pipes.

use std::io::{self, Read, Write};

use thiserror::Error;

pub const REQUEST_MAGIC: [u8; 4] = *b"M3MI";
pub const RESPONSE_MAGIC: [u8; 4] = *b"M3MO";
pub const VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported protocol version {0}")]
    BadVersion(u16),
    #[error("unknown band code {0}")]
    BadBand(u8),
    #[error("stream ended inside {0}")]
    Truncated(&'static str),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestFrame {
    pub width: u16,
    pub height: u16,
    pub band: u8,
    pub scale_milli: u16,
    pub perspective: u8,
    pub tile: Vec<f32>,
    pub mask: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseFrame {
    pub width: u16,
    pub height: u16,
    pub tile: Vec<f32>,
}

fn read_exact_or(r: &mut impl Read, buf: &mut [u8], what: &'static str) -> Result<(), ProtocolError> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated(what),
        _ => ProtocolError::Io(e),
    })
}

/// Reads the 4-byte magic; `Ok(None)` on a clean end of stream.
fn read_magic(r: &mut impl Read, expected: [u8; 4]) -> Result<Option<()>, ProtocolError> {
    let mut magic = [0u8; 4];
    let mut got = 0;
    while got < 4 {
        match r.read(&mut magic[got..]) {
            Ok(0) if got == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated("magic")),
            Ok(n) => got += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    if magic != expected {
        return Err(ProtocolError::BadMagic { expected, found: magic });
    }
    Ok(Some(()))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn read_f32s(r: &mut impl Read, n: usize, what: &'static str) -> Result<Vec<f32>, ProtocolError> {
    let mut raw = vec![0u8; n * 4];
    read_exact_or(r, &mut raw, what)?;
    Ok(raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn put_f32s(out: &mut Vec<u8>, values: &[f32]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

impl RequestFrame {
    pub fn pixels(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(16 + self.tile.len() * 4 + self.mask.len());
        out.extend_from_slice(&REQUEST_MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        out.push(self.band);
        out.extend_from_slice(&self.scale_milli.to_le_bytes());
        out.push(self.perspective);
        put_f32s(&mut out, &self.tile);
        out.extend_from_slice(&self.mask);
        out
    }

    /// Reads one request; `Ok(None)` when the stream ends between frames.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Self>, ProtocolError> {
        if read_magic(r, REQUEST_MAGIC)?.is_none() {
            return Ok(None);
        }
        let mut head = [0u8; 10];
        read_exact_or(r, &mut head, "request header")?;
        let version = u16_at(&head, 0);
        if version != VERSION {
            return Err(ProtocolError::BadVersion(version));
        }
        let (width, height, band) = (u16_at(&head, 2), u16_at(&head, 4), head[6]);
        if band > 2 {
            return Err(ProtocolError::BadBand(band));
        }
        let (scale_milli, perspective) = (u16_at(&head, 7), head[9]);
        let n = width as usize * height as usize;
        let tile = read_f32s(r, n * 3, "request tile")?;
        let mut mask = vec![0u8; n];
        read_exact_or(r, &mut mask, "request mask")?;
        Ok(Some(Self {
            width,
            height,
            band,
            scale_milli,
            perspective,
            tile,
            mask,
        }))
    }
}

impl ResponseFrame {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(8 + self.tile.len() * 4);
        out.extend_from_slice(&RESPONSE_MAGIC);
        out.extend_from_slice(&self.width.to_le_bytes());
        out.extend_from_slice(&self.height.to_le_bytes());
        put_f32s(&mut out, &self.tile);
        out
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one response whose payload length follows its own header.
    pub fn read_from(r: &mut impl Read) -> Result<Self, ProtocolError> {
        if read_magic(r, RESPONSE_MAGIC)?.is_none() {
            return Err(ProtocolError::Truncated("response magic"));
        }
        let mut head = [0u8; 4];
        read_exact_or(r, &mut head, "response header")?;
        let (width, height) = (u16_at(&head, 0), u16_at(&head, 2));
        let tile = read_f32s(r, width as usize * height as usize * 3, "response tile")?;
        Ok(Self { width, height, tile })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> RequestFrame {
        RequestFrame {
            width: 2,
            height: 1,
            band: 1,
            scale_milli: 800,
            perspective: 15,
            tile: vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125],
            mask: vec![0, 1],
        }
    }

    #[test]
    fn request_layout_is_bit_exact() {
        let bytes = sample().encode();
        assert_eq!(&bytes[..4], b"M3MI");
        assert_eq!(&bytes[4..14], &[1, 0, 2, 0, 1, 0, 1, 0x20, 0x03, 15]);
        assert_eq!(bytes.len(), 4 + 2 + 2 + 2 + 1 + 2 + 1 + 6 * 4 + 2);
        assert_eq!(&bytes[14..18], &0.0f32.to_le_bytes());
        assert_eq!(&bytes[bytes.len() - 2..], &[0, 1]);
    }

    #[test]
    fn request_round_trip() {
        let req = sample();
        let bytes = req.encode();
        let back = RequestFrame::read_from(&mut &bytes[..]).unwrap().unwrap();
        assert_eq!(back, req);
        assert!(RequestFrame::read_from(&mut &[][..]).unwrap().is_none());
    }

    #[test]
    fn truncated_and_bad_magic() {
        let bytes = sample().encode();
        assert!(matches!(
            RequestFrame::read_from(&mut &bytes[..bytes.len() - 1]),
            Err(ProtocolError::Truncated(_))
        ));
        let resp = ResponseFrame {
            width: 1,
            height: 1,
            tile: vec![0.5; 3],
        };
        let mut enc = resp.encode();
        assert_eq!(ResponseFrame::read_from(&mut &enc[..]).unwrap(), resp);
        enc[0] = b'X';
        assert!(matches!(ResponseFrame::read_from(&mut &enc[..]), Err(ProtocolError::BadMagic { .. })));
    }
}
