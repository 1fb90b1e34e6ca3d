use std::io::{Read, Write};

use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"DPTH";

/// Per-pixel depth raster; a depth of zero marks an unknown pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseDepthMap {
    width: usize,
    height: usize,
    depth: Vec<f64>,
    variance: Vec<f64>,
}

impl DenseDepthMap {
    pub fn unknown(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            depth: vec![0.0; width * height],
            variance: vec![0.0; width * height],
        }
    }

    pub fn new(width: usize, height: usize, depth: Vec<f64>, variance: Vec<f64>) -> Result<Self> {
        if depth.len() != width * height || variance.len() != width * height {
            return Err(Error::invalid("depth raster size mismatch"));
        }
        for (d, v) in depth.iter().zip(&variance) {
            if !d.is_finite() || *d < 0.0 {
                return Err(Error::invalid("depth must be finite and non-negative"));
            }
            if *d > 0.0 && !(*v > 0.0 && v.is_finite()) {
                return Err(Error::invalid("known pixels need a positive variance"));
            }
        }
        Ok(Self {
            width,
            height,
            depth,
            variance,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Depth at `(x, y)`, `None` when unknown or out of bounds.
    pub fn depth(&self, x: usize, y: usize) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let d = self.depth[y * self.width + x];
        (d > 0.0).then_some(d)
    }

    pub fn variance(&self, x: usize, y: usize) -> Option<f64> {
        self.depth(x, y).map(|_| self.variance[y * self.width + x])
    }

    pub fn set(&mut self, x: usize, y: usize, depth: f64, variance: f64) {
        debug_assert!(depth > 0.0 && variance > 0.0);
        let i = y * self.width + x;
        self.depth[i] = depth;
        self.variance[i] = variance;
    }

    pub fn depths(&self) -> &[f64] {
        &self.depth
    }

    pub fn variances(&self) -> &[f64] {
        &self.variance
    }

    pub fn known_count(&self) -> usize {
        self.depth.iter().filter(|d| **d > 0.0).count()
    }

    /// Multiplies every depth by `s` (variances by `s^2`).
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            width: self.width,
            height: self.height,
            depth: self.depth.iter().map(|d| d * s).collect(),
            variance: self.variance.iter().map(|v| v * s * s).collect(),
        }
    }

    /// Binary little-endian: `DPTH`, u32 width, u32 height, f32 depths, f32 variances.
    pub fn write(&self, mut w: impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.width as u32).to_le_bytes())?;
        w.write_all(&(self.height as u32).to_le_bytes())?;
        let mut buf = Vec::with_capacity(8 * self.depth.len());
        for d in &self.depth {
            buf.extend_from_slice(&(*d as f32).to_le_bytes());
        }
        for v in &self.variance {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read(mut r: impl Read) -> Result<Self> {
        let bad = |m: &str| Error::Parse {
            line: 0,
            message: format!("depth file: {m}"),
        };
        let mut header = [0u8; 12];
        r.read_exact(&mut header).map_err(|_| bad("truncated header"))?;
        if &header[..4] != MAGIC {
            return Err(bad("bad magic"));
        }
        let width = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let n = width * height;
        let mut body = vec![0u8; 8 * n];
        r.read_exact(&mut body).map_err(|_| bad("truncated raster"))?;
        let floats: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let (depth, variance) = floats.split_at(n);
        Self::new(width, height, depth.to_vec(), variance.to_vec())
            .map_err(|e| bad(&e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_layout() {
        let mut m = DenseDepthMap::unknown(3, 2);
        m.set(1, 0, 2.5, 0.25);
        let mut buf = Vec::new();
        m.write(&mut buf).unwrap();
        assert_eq!(buf.len(), 12 + 3 * 2 * 8);
        assert_eq!(&buf[..4], b"DPTH");
        assert_eq!(u32::from_le_bytes(buf[4..8].try_into().unwrap()), 3);
        assert_eq!(f32::from_le_bytes(buf[16..20].try_into().unwrap()), 2.5);
        let back = DenseDepthMap::read(&buf[..]).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.depth(0, 0), None);
        assert_eq!(back.depth(1, 0), Some(2.5));
    }

    #[test]
    fn rejects_bad_magic() {
        assert!(DenseDepthMap::read(&b"XXXX\0\0\0\0\0\0\0\0"[..]).is_err());
    }
}
