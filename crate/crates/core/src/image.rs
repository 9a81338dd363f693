//! Planar float images: row-major, channel-interleaved.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, T::zero())
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: T) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_rgb(width: usize, height: usize, rgb: [T; 3]) -> Self {
        let mut img = Self::new(width, height, 3);
        for px in img.data.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{} samples for a {width}x{height}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[T] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [T] {
        let i = self.index(x, y);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    pub fn same_shape(&self, other: &Image<T>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub(crate) fn check_same_shape(&self, other: &Image<T>) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::DimensionMismatch(format!(
                "{}x{}x{} vs {}x{}x{}",
                self.width, self.height, self.channels, other.width, other.height, other.channels
            )))
        }
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|v| U::lit(v.as_f64())).collect(),
        }
    }

    /// Loads an 8-bit or 16-bit PNG/JPEG as RGB in `[0,1]`.
    pub fn load(path: &Path) -> Result<Self> {
        let img = ::image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let rgb = img.to_rgb32f();
        let (w, h) = rgb.dimensions();
        let data = rgb.into_raw().into_iter().map(|v| T::lit(v as f64)).collect();
        Self::from_vec(w as usize, h as usize, 3, data)
    }

    /// Writes an 8-bit PNG (or JPEG, by extension), clamping to `[0,1]`.
    /// Single-channel images are written as grayscale.
    pub fn save(&self, path: &Path) -> Result<()> {
        let to_u8 = |v: &T| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8;
        let bytes: Vec<u8> = self.data.iter().map(to_u8).collect();
        let (w, h) = (self.width as u32, self.height as u32);
        let res = match self.channels {
            1 => ::image::GrayImage::from_raw(w, h, bytes).map(|i| i.save(path)),
            3 => ::image::RgbImage::from_raw(w, h, bytes).map(|i| i.save(path)),
            c => {
                return Err(Error::DimensionMismatch(format!(
                    "cannot encode {c}-channel image"
                )))
            }
        };
        match res {
            Some(Ok(())) => Ok(()),
            Some(Err(e)) => Err(Error::Image {
                path: path.to_path_buf(),
                message: e.to_string(),
            }),
            None => Err(Error::DimensionMismatch("buffer size".into())),
        }
    }

    /// Writes the raw float samples as a little-endian PFM (`Pf` grayscale
    /// or `PF` colour). PFM stores rows bottom-to-top.
    pub fn save_pfm(&self, path: &Path) -> Result<()> {
        let tag = match self.channels {
            1 => "Pf",
            3 => "PF",
            c => {
                return Err(Error::DimensionMismatch(format!(
                    "cannot encode {c}-channel pfm"
                )))
            }
        };
        let mut out = Vec::with_capacity(self.data.len() * 4 + 32);
        write!(out, "{tag}\n{} {}\n-1.0\n", self.width, self.height)
            .expect("write to Vec");
        let row = self.width * self.channels;
        for y in (0..self.height).rev() {
            for v in &self.data[y * row..(y + 1) * row] {
                out.extend_from_slice(&v.as_f32().to_le_bytes());
            }
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn min_max(&self) -> (T, T) {
        self.data
            .iter()
            .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}

/// Reads a PFM written by [`Image::save_pfm`] (either endianness).
pub fn load_pfm(path: &Path) -> Result<Image<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |m: &str| Error::Image {
        path: path.to_path_buf(),
        message: m.to_string(),
    };
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(bad("truncated header"));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let channels = match fields[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        _ => return Err(bad("not a PFM file")),
    };
    let w: usize = fields[1].parse().map_err(|_| bad("width"))?;
    let h: usize = fields[2].parse().map_err(|_| bad("height"))?;
    let scale: f32 = fields[3].parse().map_err(|_| bad("scale"))?;
    let n = w * h * channels;
    if bytes.len() < pos + 4 * n {
        return Err(bad("truncated payload"));
    }
    let row = w * channels;
    let mut data = vec![0f32; n];
    for (k, chunk) in bytes[pos..pos + 4 * n].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if scale < 0.0 {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (file_row, col) = (k / row, k % row);
        data[(h - 1 - file_row) * row + col] = v;
    }
    Image::from_vec(w, h, channels, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pfm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.pfm");
        let img = Image::from_vec(3, 2, 1, vec![0.0f32, 1.5, 2.0, -3.0, 4.25, 1e-3]).unwrap();
        img.save_pfm(&path).unwrap();
        assert_eq!(load_pfm(&path).unwrap(), img);
    }

    #[test]
    fn png_round_trip_is_8bit() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.png");
        let img = Image::from_rgb(4, 3, [1.0f32, 0.0, 128.0 / 255.0]);
        img.save(&path).unwrap();
        let back: Image<f32> = Image::load(&path).unwrap();
        for (a, b) in img.data.iter().zip(&back.data) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
