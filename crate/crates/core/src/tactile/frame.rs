//! Tactile image container and its binary record format.

use crate::error::{Error, Result};
use crate::geom::Vec2;

pub const MAGIC: &[u8; 4] = b"TACF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 16;

/// Geometry of a tactile image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameSpec {
    pub height: usize,
    pub width: usize,
    /// Pixels per meter.
    pub p2m: f32,
}

impl Default for FrameSpec {
    fn default() -> Self {
        Self {
            height: 32,
            width: 32,
            p2m: 2000.0,
        }
    }
}

impl FrameSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(2) || !self.width.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "tactile frame must have even nonzero dimensions, got {}x{}",
                self.height, self.width
            )));
        }
        if self.height > u16::MAX as usize || self.width > u16::MAX as usize {
            return Err(Error::InvalidConfig("tactile frame too large".into()));
        }
        if !(self.p2m > 0.0 && self.p2m.is_finite()) {
            return Err(Error::InvalidConfig("p2m must be positive".into()));
        }
        Ok(())
    }
}

/// Grayscale tactile image; pixel `(u, v)` is stored at `v * width + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct TactileFrame {
    pub height: usize,
    pub width: usize,
    pub p2m: f32,
    pub pixels: Vec<u8>,
    pub timestamp: f64,
}

impl TactileFrame {
    pub fn blank(spec: &FrameSpec, value: u8) -> Self {
        Self {
            height: spec.height,
            width: spec.width,
            p2m: spec.p2m,
            pixels: vec![value; spec.height * spec.width],
            timestamp: 0.0,
        }
    }

    pub fn spec(&self) -> FrameSpec {
        FrameSpec {
            height: self.height,
            width: self.width,
            p2m: self.p2m,
        }
    }

    /// Sensing-region center `(W/2, H/2)` in pixel coordinates.
    pub fn center(&self) -> Vec2 {
        Vec2::new(self.width as f64 / 2.0, self.height as f64 / 2.0)
    }

    pub fn get(&self, u: usize, v: usize) -> u8 {
        self.pixels[v * self.width + u]
    }

    /// Appends the 16-byte header and the row-major pixels.
    pub fn write_to(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.extend_from_slice(&self.p2m.to_le_bytes());
        out.extend_from_slice(&[0, 0]);
        out.extend_from_slice(&self.pixels);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.pixels.len());
        self.write_to(&mut out);
        out
    }

    /// Decodes one record from the front of `bytes`, returning it and the bytes consumed.
    pub fn read_from(bytes: &[u8], timestamp: f64) -> Result<(TactileFrame, usize)> {
        let what = "tactile frame";
        if bytes.len() < HEADER_LEN {
            return Err(Error::Truncated(what.into()));
        }
        if &bytes[0..4] != MAGIC {
            return Err(Error::BadMagic(what.into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != VERSION {
            return Err(Error::VersionMismatch {
                what: what.into(),
                found: version as u32,
                expected: VERSION as u32,
            });
        }
        let height = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let width = u16::from_le_bytes([bytes[8], bytes[9]]) as usize;
        let p2m = f32::from_le_bytes([bytes[10], bytes[11], bytes[12], bytes[13]]);
        let total = HEADER_LEN + height * width;
        if bytes.len() < total {
            return Err(Error::Truncated(what.into()));
        }
        let frame = TactileFrame {
            height,
            width,
            p2m,
            pixels: bytes[HEADER_LEN..total].to_vec(),
            timestamp,
        };
        Ok((frame, total))
    }
}
