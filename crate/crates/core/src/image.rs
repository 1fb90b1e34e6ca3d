//! Grayscale images with values in `[0, 1]` and bilinear sampling.

use std::io::{Read, Write};

use nalgebra::{Point2, Vector2};

use crate::error::{Error, Result};

/// Row-major scalar image.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityImage {
    width: usize,
    height: usize,
    values: Vec<f64>,
}

impl IntensityImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid("image dimensions must be positive"));
        }
        if values.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} values for a {width}x{height} image, got {}",
                width * height,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("image contains non-finite values"));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                values.push(f(x, y));
            }
        }
        Self::new(width, height, values)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// True when bilinear sampling at `p` stays `margin` pixels inside.
    pub fn contains(&self, p: &Point2<f64>, margin: f64) -> bool {
        p.x >= margin
            && p.y >= margin
            && p.x <= (self.width - 1) as f64 - margin
            && p.y <= (self.height - 1) as f64 - margin
    }

    /// Bilinear sample, `None` outside the image.
    pub fn sample(&self, p: &Point2<f64>) -> Option<f64> {
        self.sample_with_gradient(p).map(|(v, _)| v)
    }

    /// Bilinear sample and the exact derivative of the bilinear interpolant.
    pub fn sample_with_gradient(&self, p: &Point2<f64>) -> Option<(f64, Vector2<f64>)> {
        if !(p.x.is_finite() && p.y.is_finite()) || !self.contains(p, 0.0) {
            return None;
        }
        let x0 = (p.x.floor() as usize).min(self.width.saturating_sub(2));
        let y0 = (p.y.floor() as usize).min(self.height.saturating_sub(2));
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = p.x - x0 as f64;
        let ay = p.y - y0 as f64;
        let v00 = self.get(x0, y0);
        let v10 = self.get(x1, y0);
        let v01 = self.get(x0, y1);
        let v11 = self.get(x1, y1);
        let top = v00 + ax * (v10 - v00);
        let bottom = v01 + ax * (v11 - v01);
        let value = top + ay * (bottom - top);
        let gx = (1.0 - ay) * (v10 - v00) + ay * (v11 - v01);
        let gy = bottom - top;
        Some((value, Vector2::new(gx, gy)))
    }

    /// Square block of bilinear samples centered at `center`.
    pub fn block(&self, center: &Point2<f64>, half_size: usize) -> Option<PixelBlock> {
        let r = half_size as f64;
        if !self.contains(center, r) {
            return None;
        }
        let side = 2 * half_size + 1;
        let mut intensities = Vec::with_capacity(side * side);
        for dy in 0..side {
            for dx in 0..side {
                let p = Point2::new(center.x + dx as f64 - r, center.y + dy as f64 - r);
                intensities.push(self.sample(&p)?);
            }
        }
        Some(PixelBlock {
            center: *center,
            half_size,
            intensities,
        })
    }

    /// Reads an 8-bit binary PGM (P5), normalizing to `[0, 1]`.
    pub fn read_pgm(mut reader: impl Read) -> Result<Self> {
        let mut bytes = Vec::new();
        reader.read_to_end(&mut bytes)?;
        let mut pos = 0usize;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(pgm_error("truncated header"));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // Single whitespace byte separates header from raster.
        pos += 1;
        if tokens[0] != "P5" {
            return Err(pgm_error("only binary P5 images are supported"));
        }
        let parse = |s: &str| s.parse::<usize>().map_err(|_| pgm_error("bad header number"));
        let width = parse(&tokens[1])?;
        let height = parse(&tokens[2])?;
        let maxval = parse(&tokens[3])?;
        if maxval == 0 || maxval > 255 {
            return Err(pgm_error("only 8-bit images are supported"));
        }
        let raster = bytes
            .get(pos..pos + width * height)
            .ok_or_else(|| pgm_error("truncated raster"))?;
        let scale = 1.0 / maxval as f64;
        Self::new(
            width,
            height,
            raster.iter().map(|&b| (b as f64 * scale).min(1.0)).collect(),
        )
    }

    /// Writes an 8-bit binary PGM, clamping to `[0, 1]`.
    pub fn write_pgm(&self, mut writer: impl Write) -> Result<()> {
        write!(writer, "P5\n{} {}\n255\n", self.width, self.height)?;
        let raster: Vec<u8> = self
            .values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
            .collect();
        writer.write_all(&raster)?;
        Ok(())
    }
}

fn pgm_error(msg: &str) -> Error {
    Error::Parse {
        line: 1,
        message: format!("PGM: {msg}"),
    }
}

/// Square patch of intensities, `(2 * half_size + 1)^2` values, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelBlock {
    pub center: Point2<f64>,
    pub half_size: usize,
    pub intensities: Vec<f64>,
}

impl PixelBlock {
    pub fn new(center: Point2<f64>, half_size: usize, intensities: Vec<f64>) -> Result<Self> {
        let side = 2 * half_size + 1;
        if intensities.len() != side * side {
            return Err(Error::invalid(format!(
                "block with half-size {half_size} needs {} values, got {}",
                side * side,
                intensities.len()
            )));
        }
        if intensities.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("block contains non-finite values"));
        }
        Ok(Self {
            center,
            half_size,
            intensities,
        })
    }

    pub fn side(&self) -> usize {
        2 * self.half_size + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bilinear_is_exact_on_affine_images() {
        let img = IntensityImage::from_fn(20, 10, |x, y| 0.01 * x as f64 + 0.02 * y as f64).unwrap();
        let (v, g) = img.sample_with_gradient(&Point2::new(3.25, 4.5)).unwrap();
        assert!((v - (0.0325 + 0.09)).abs() < 1e-12);
        assert!((g - Vector2::new(0.01, 0.02)).norm() < 1e-12);
        assert!(img.sample(&Point2::new(19.0, 9.0)).is_some());
        assert!(img.sample(&Point2::new(19.01, 9.0)).is_none());
        assert!(img.sample(&Point2::new(-0.01, 0.0)).is_none());
    }

    #[test]
    fn block_has_expected_size() {
        let img = IntensityImage::constant(30, 30, 0.5).unwrap();
        let b = img.block(&Point2::new(10.0, 10.0), 3).unwrap();
        assert_eq!(b.intensities.len(), 49);
        assert!(img.block(&Point2::new(2.0, 10.0), 3).is_none());
    }

    #[test]
    fn pgm_round_trip() {
        let img = IntensityImage::from_fn(7, 5, |x, y| ((x * 5 + y) % 256) as f64 / 255.0).unwrap();
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = IntensityImage::read_pgm(&buf[..]).unwrap();
        assert_eq!(back.width(), 7);
        for (a, b) in img.values().iter().zip(back.values()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pgm_rejects_ascii() {
        assert!(IntensityImage::read_pgm(&b"P2\n1 1\n255\n0\n"[..]).is_err());
    }

    proptest! {
        #[test]
        fn gradient_matches_finite_differences(x in 1.1f64..17.9, y in 1.1f64..7.9) {
            let img = IntensityImage::from_fn(20, 10, |x, y| ((x * 7 + y * 13) % 11) as f64 / 10.0).unwrap();
            let p = Point2::new(x, y);
            prop_assume!((x.fract() - 0.5).abs() < 0.49 && (y.fract() - 0.5).abs() < 0.49);
            let (_, g) = img.sample_with_gradient(&p).unwrap();
            let h = 1e-6;
            let fx = (img.sample(&Point2::new(x + h, y)).unwrap() - img.sample(&Point2::new(x - h, y)).unwrap()) / (2.0 * h);
            let fy = (img.sample(&Point2::new(x, y + h)).unwrap() - img.sample(&Point2::new(x, y - h)).unwrap()) / (2.0 * h);
            prop_assert!((fx - g.x).abs() < 1e-6 && (fy - g.y).abs() < 1e-6);
        }
    }
}
