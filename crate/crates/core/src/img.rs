//! Float RGB images and the PPM (P6) / PFM (PF) file formats.
//!
//! All rendering and metrics operate on `ImageRgb`: row-major, top-left
//! origin, f64 channels nominally in [0,1]. PF files store f32 little-endian
//! (bottom-up rows, negative scale header) and round-trip bit-exactly at f32
//! precision; P6 is 8-bit for previews.

use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRgb {
    pub width: usize,
    pub height: usize,
    /// Row-major, `width * height` pixels.
    pub data: Vec<[f64; 3]>,
}

impl ImageRgb {
    pub fn new(width: usize, height: usize) -> Self {
        ImageRgb { width, height, data: vec![[0.0; 3]; width * height] }
    }

    pub fn filled(width: usize, height: usize, value: [f64; 3]) -> Self {
        ImageRgb { width, height, data: vec![value; width * height] }
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64; 3] {
        &mut self.data[y * self.width + x]
    }

    pub fn same_shape(&self, other: &ImageRgb) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Rec. 601 luma, used by the block-matching flow proxy.
    pub fn luminance(&self) -> Vec<f64> {
        self.data
            .iter()
            .map(|p| 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2])
            .collect()
    }

    /// Box-average downscale by an integer factor. Partial edge cells average
    /// over the pixels actually available.
    pub fn downscale(&self, factor: usize) -> ImageRgb {
        assert!(factor >= 1);
        if factor == 1 {
            return self.clone();
        }
        let w = self.width.div_ceil(factor);
        let h = self.height.div_ceil(factor);
        let mut out = ImageRgb::new(w, h);
        for oy in 0..h {
            for ox in 0..w {
                let x0 = ox * factor;
                let y0 = oy * factor;
                let x1 = (x0 + factor).min(self.width);
                let y1 = (y0 + factor).min(self.height);
                let mut acc = [0.0f64; 3];
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = self.pixel(x, y);
                        acc[0] += p[0];
                        acc[1] += p[1];
                        acc[2] += p[2];
                    }
                }
                let n = ((x1 - x0) * (y1 - y0)) as f64;
                *out.pixel_mut(ox, oy) = [acc[0] / n, acc[1] / n, acc[2] / n];
            }
        }
        out
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        write!(w, "P6\n{} {}\n255\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 3);
        for p in &self.data {
            for c in 0..3 {
                let v = (p[c].clamp(0.0, 1.0) * 255.0).round() as u8;
                bytes.push(v);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_ppm(path: &Path) -> Result<ImageRgb> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let magic = read_token(&mut r)?;
        if magic != "P6" {
            return Err(Error::Ingestion(format!(
                "{}: expected P6 magic, got {magic:?}",
                path.display()
            )));
        }
        let width: usize = parse_dim(&read_token(&mut r)?, path)?;
        let height: usize = parse_dim(&read_token(&mut r)?, path)?;
        let maxval: usize = parse_dim(&read_token(&mut r)?, path)?;
        if maxval != 255 {
            return Err(Error::Ingestion(format!(
                "{}: only maxval 255 supported, got {maxval}",
                path.display()
            )));
        }
        let mut bytes = vec![0u8; width * height * 3];
        r.read_exact(&mut bytes)?;
        let data = bytes
            .chunks_exact(3)
            .map(|c| {
                [
                    c[0] as f64 / 255.0,
                    c[1] as f64 / 255.0,
                    c[2] as f64 / 255.0,
                ]
            })
            .collect();
        Ok(ImageRgb { width, height, data })
    }

    /// Write a PFM color file (`PF`, little-endian, rows bottom-up).
    pub fn write_pfm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        let mut w = BufWriter::new(file);
        write!(w, "PF\n{} {}\n-1.0\n", self.width, self.height)?;
        let mut bytes = Vec::with_capacity(self.data.len() * 12);
        for y in (0..self.height).rev() {
            for x in 0..self.width {
                let p = self.pixel(x, y);
                for c in 0..3 {
                    bytes.extend_from_slice(&(p[c] as f32).to_le_bytes());
                }
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }

    pub fn read_pfm(path: &Path) -> Result<ImageRgb> {
        let file = std::fs::File::open(path)?;
        let mut r = BufReader::new(file);
        let magic = read_token(&mut r)?;
        if magic != "PF" {
            return Err(Error::Ingestion(format!(
                "{}: expected PF magic, got {magic:?}",
                path.display()
            )));
        }
        let width: usize = parse_dim(&read_token(&mut r)?, path)?;
        let height: usize = parse_dim(&read_token(&mut r)?, path)?;
        let scale: f64 = read_token(&mut r)?
            .parse()
            .map_err(|_| Error::Ingestion(format!("{}: bad PFM scale", path.display())))?;
        if scale >= 0.0 {
            return Err(Error::Ingestion(format!(
                "{}: big-endian PFM not supported",
                path.display()
            )));
        }
        let mut bytes = vec![0u8; width * height * 12];
        r.read_exact(&mut bytes)?;
        let mut img = ImageRgb::new(width, height);
        let mut off = 0;
        for y in (0..height).rev() {
            for x in 0..width {
                let mut p = [0.0f64; 3];
                for c in &mut p {
                    let mut b = [0u8; 4];
                    b.copy_from_slice(&bytes[off..off + 4]);
                    *c = f32::from_le_bytes(b) as f64;
                    off += 4;
                }
                *img.pixel_mut(x, y) = p;
            }
        }
        Ok(img)
    }
}

fn parse_dim(tok: &str, path: &Path) -> Result<usize> {
    tok.parse()
        .map_err(|_| Error::Ingestion(format!("{}: bad header field {tok:?}", path.display())))
}

/// Read one whitespace-delimited header token, skipping `#` comments.
fn read_token<R: BufRead>(r: &mut R) -> Result<String> {
    let mut tok = String::new();
    let mut in_comment = false;
    loop {
        let mut byte = [0u8; 1];
        let n = r.read(&mut byte)?;
        if n == 0 {
            if tok.is_empty() {
                return Err(Error::Ingestion("unexpected end of header".into()));
            }
            return Ok(tok);
        }
        let c = byte[0] as char;
        if in_comment {
            if c == '\n' {
                in_comment = false;
            }
            continue;
        }
        if c == '#' {
            in_comment = true;
            continue;
        }
        if c.is_whitespace() {
            if !tok.is_empty() {
                return Ok(tok);
            }
        } else {
            tok.push(c);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip_is_bit_exact_at_f32() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pfm");
        let mut img = ImageRgb::new(7, 5);
        for (i, p) in img.data.iter_mut().enumerate() {
            *p = [
                (i as f64 * 0.013).sin().abs(),
                (i as f64 * 0.031).cos().abs(),
                i as f64 / 64.0,
            ];
        }
        img.write_pfm(&path).unwrap();
        let back = ImageRgb::read_pfm(&path).unwrap();
        assert_eq!(back.width, 7);
        assert_eq!(back.height, 5);
        for (a, b) in img.data.iter().zip(back.data.iter()) {
            for c in 0..3 {
                assert_eq!((a[c] as f32).to_bits(), (b[c] as f32).to_bits());
            }
        }
    }

    #[test]
    fn ppm_round_trip_quantizes_to_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.ppm");
        let img = ImageRgb::filled(4, 3, [0.5, 0.25, 1.0]);
        img.write_ppm(&path).unwrap();
        let back = ImageRgb::read_ppm(&path).unwrap();
        assert!((back.pixel(0, 0)[0] - 0.5).abs() < 1.0 / 255.0);
        assert!((back.pixel(3, 2)[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn downscale_averages_blocks() {
        let mut img = ImageRgb::new(4, 2);
        for (i, p) in img.data.iter_mut().enumerate() {
            *p = [i as f64, 0.0, 0.0];
        }
        let half = img.downscale(2);
        assert_eq!(half.width, 2);
        assert_eq!(half.height, 1);
        // pixels 0,1,4,5 average to 2.5
        assert_eq!(half.pixel(0, 0)[0], 2.5);
    }
}
