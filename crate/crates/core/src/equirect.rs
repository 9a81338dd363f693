//! Equirectangular image model and reprojection to pinhole views.
//!
//! Convention: +Z forward, +Y up, +X right. Longitude grows to the right
//! across the image, latitude grows upward. Pixel centres sit at
//! half-integer offsets, so pixel `(u, v)` covers `[u, u+1) × [v, v+1)` and
//! is sampled at `(u + 0.5, v + 0.5)`.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{mat3_mul, mat3_tvec, mat3_vec, Mat3, Vec3};

#[derive(Clone, Debug)]
pub struct EquirectFrame {
    pub pixels: Image<f32>,
    pub timestamp: Option<f64>,
}

impl EquirectFrame {
    pub fn new(pixels: Image<f32>, timestamp: Option<f64>) -> Result<Self> {
        if pixels.channels != 3 {
            return Err(Error::domain("equirect frames are RGB"));
        }
        if pixels.width != 2 * pixels.height || pixels.height == 0 {
            return Err(Error::domain(format!(
                "equirect frame must be 2:1, got {}x{}",
                pixels.width, pixels.height
            )));
        }
        if let Some(bad) = pixels
            .data
            .iter()
            .find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0)
        {
            return Err(Error::domain(format!("sample {bad} outside [0,1]")));
        }
        Ok(Self { pixels, timestamp })
    }

    pub fn width(&self) -> usize {
        self.pixels.width
    }

    pub fn height(&self) -> usize {
        self.pixels.height
    }

    /// Bilinear lookup at a continuous pixel position (integer = pixel
    /// centre), wrapping horizontally and clamping vertically.
    pub fn sample(&self, u: f64, v: f64) -> [f32; 3] {
        let (w, h) = (self.width() as i64, self.height() as i64);
        let x0 = u.floor();
        let y0 = v.floor();
        let tx = (u - x0) as f32;
        let ty = (v - y0) as f32;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let xa = x0.rem_euclid(w) as usize;
        let xb = (x0 + 1).rem_euclid(w) as usize;
        let ya = y0.clamp(0, h - 1) as usize;
        let yb = (y0 + 1).clamp(0, h - 1) as usize;
        let p00 = self.pixels.pixel(xa, ya);
        let p10 = self.pixels.pixel(xb, ya);
        let p01 = self.pixels.pixel(xa, yb);
        let p11 = self.pixels.pixel(xb, yb);
        let mut out = [0f32; 3];
        for c in 0..3 {
            let top = p00[c] + (p10[c] - p00[c]) * tx;
            let bottom = p01[c] + (p11[c] - p01[c]) * tx;
            out[c] = top + (bottom - top) * ty;
        }
        out
    }

    /// Samples along a unit direction.
    pub fn sample_direction(&self, dir: Vec3<f64>) -> [f32; 3] {
        let (u, v) = direction_to_pixel(dir, self.width(), self.height());
        self.sample(u, v)
    }
}

/// A reprojected pinhole view together with its camera model.
#[derive(Clone, Debug)]
pub struct PerspectiveView {
    pub width: usize,
    pub height: usize,
    pub focal_x: f64,
    pub focal_y: f64,
    pub principal_x: f64,
    pub principal_y: f64,
    /// Radians; rotation about +Y, positive turns right.
    pub yaw: f64,
    /// Radians; rotation about +X, positive looks up.
    pub pitch: f64,
    /// Radians; rotation about the viewing axis.
    pub roll: f64,
    pub pixels: Image<f32>,
}

impl PerspectiveView {
    /// Rotation taking view-frame rays (+Y up) into the equirect frame.
    pub fn rotation(&self) -> Mat3<f64> {
        view_rotation(self.yaw, self.pitch, self.roll)
    }

    /// Unit ray through the centre of output pixel `(i, j)`, in the equirect frame.
    pub fn pixel_ray(&self, i: usize, j: usize) -> Vec3<f64> {
        let x = (i as f64 + 0.5 - self.principal_x) / self.focal_x;
        let y = -(j as f64 + 0.5 - self.principal_y) / self.focal_y;
        let d = mat3_vec(&self.rotation(), [x, y, 1.0]);
        let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        [d[0] / n, d[1] / n, d[2] / n]
    }

    /// Whether a direction falls inside this view's image rectangle.
    pub fn contains_direction(&self, dir: Vec3<f64>) -> bool {
        let d = mat3_tvec(&self.rotation(), dir);
        if d[2] <= 0.0 {
            return false;
        }
        let px = self.principal_x + self.focal_x * d[0] / d[2];
        let py = self.principal_y - self.focal_y * d[1] / d[2];
        let slack = 1e-9;
        px >= -slack
            && px <= self.width as f64 + slack
            && py >= -slack
            && py <= self.height as f64 + slack
    }
}

pub fn view_rotation(yaw: f64, pitch: f64, roll: f64) -> Mat3<f64> {
    let (sy, cy) = yaw.sin_cos();
    let (sp, cp) = pitch.sin_cos();
    let (sr, cr) = roll.sin_cos();
    let r_yaw = [[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]];
    let r_pitch = [[1.0, 0.0, 0.0], [0.0, cp, sp], [0.0, -sp, cp]];
    let r_roll = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mat3_mul(&mat3_mul(&r_yaw, &r_pitch), &r_roll)
}

fn check_pixel(u: f64, v: f64, width: usize, height: usize) -> Result<()> {
    if !(0.0..width as f64).contains(&u) || !(0.0..height as f64).contains(&v) {
        return Err(Error::domain(format!(
            "pixel ({u}, {v}) outside {width}x{height}"
        )));
    }
    Ok(())
}

/// Unit direction through the centre of pixel `(u, v)`.
pub fn pixel_to_direction(u: f64, v: f64, width: usize, height: usize) -> Result<Vec3<f64>> {
    check_pixel(u, v, width, height)?;
    let lon = 2.0 * PI * ((u + 0.5) / width as f64) - PI;
    let lat = FRAC_PI_2 - PI * ((v + 0.5) / height as f64);
    let (sl, cl) = lat.sin_cos();
    let (st, ct) = lon.sin_cos();
    Ok([cl * st, sl, cl * ct])
}

/// Inverse of [`pixel_to_direction`]. `u` is the principal value in
/// `[-0.5, width - 0.5]`; both ends name the rear seam.
pub fn direction_to_pixel(dir: Vec3<f64>, width: usize, height: usize) -> (f64, f64) {
    let lon = dir[0].atan2(dir[2]);
    let lat = dir[1].clamp(-1.0, 1.0).asin();
    let u = (lon + PI) / (2.0 * PI) * width as f64 - 0.5;
    let v = (FRAC_PI_2 - lat) / PI * height as f64 - 0.5;
    (u, v)
}

/// Renders a pinhole view of the sphere looking along `(yaw, pitch)`.
pub fn reproject(
    frame: &EquirectFrame,
    yaw: f64,
    pitch: f64,
    fov: f64,
    out_width: usize,
    out_height: usize,
) -> Result<PerspectiveView> {
    if !(fov > 0.0 && fov < PI) {
        return Err(Error::domain(format!("field of view {fov} rad outside (0, π)")));
    }
    if out_width == 0 || out_height == 0 {
        return Err(Error::domain("empty output view"));
    }
    let focal = out_width as f64 / (2.0 * (fov / 2.0).tan());
    let mut view = PerspectiveView {
        width: out_width,
        height: out_height,
        focal_x: focal,
        focal_y: focal,
        principal_x: out_width as f64 / 2.0,
        principal_y: out_height as f64 / 2.0,
        yaw,
        pitch,
        roll: 0.0,
        pixels: Image::new(out_width, out_height, 3),
    };
    let shape = view.clone_geometry();
    view.pixels
        .data
        .par_chunks_mut(out_width * 3)
        .enumerate()
        .for_each(|(j, row)| {
            for (i, px) in row.chunks_exact_mut(3).enumerate() {
                px.copy_from_slice(&frame.sample_direction(shape.pixel_ray(i, j)));
            }
        });
    Ok(view)
}

impl PerspectiveView {
    fn clone_geometry(&self) -> PerspectiveView {
        PerspectiveView {
            pixels: Image::new(0, 0, 3),
            ..*self
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CubeFace {
    Front,
    Right,
    Back,
    Left,
    Up,
    Down,
}

impl CubeFace {
    pub const ALL: [CubeFace; 6] = [
        CubeFace::Front,
        CubeFace::Right,
        CubeFace::Back,
        CubeFace::Left,
        CubeFace::Up,
        CubeFace::Down,
    ];

    /// `(yaw, pitch)` in radians.
    pub fn orientation(self) -> (f64, f64) {
        match self {
            CubeFace::Front => (0.0, 0.0),
            CubeFace::Right => (FRAC_PI_2, 0.0),
            CubeFace::Back => (PI, 0.0),
            CubeFace::Left => (-FRAC_PI_2, 0.0),
            CubeFace::Up => (0.0, FRAC_PI_2),
            CubeFace::Down => (0.0, -FRAC_PI_2),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CubeFace::Front => "front",
            CubeFace::Right => "right",
            CubeFace::Back => "back",
            CubeFace::Left => "left",
            CubeFace::Up => "up",
            CubeFace::Down => "down",
        }
    }
}

/// Six 90° faces, in [`CubeFace::ALL`] order.
pub fn cubemap(frame: &EquirectFrame, face_size: usize) -> Result<Vec<PerspectiveView>> {
    if face_size < 2 {
        return Err(Error::domain(format!("face size {face_size} < 2")));
    }
    CubeFace::ALL
        .iter()
        .map(|face| {
            let (yaw, pitch) = face.orientation();
            reproject(frame, yaw, pitch, FRAC_PI_2, face_size, face_size)
        })
        .collect()
}

/// Indices `0, stride, 2·stride, …` below `timestamps.len()`.
pub fn select_frames(timestamps: &[f64], stride: usize) -> Vec<usize> {
    debug_assert!(timestamps.windows(2).all(|w| w[0] < w[1]));
    (0..timestamps.len()).step_by(stride.max(1)).collect()
}

/// One entry of a frame manifest: `index, timestamp_seconds`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ManifestEntry {
    pub index: usize,
    pub timestamp: f64,
}

pub fn parse_frame_manifest(text: &str, file: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| Error::Parse {
            file: file.to_string(),
            line: n + 1,
            message,
        };
        let mut parts = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty());
        let (Some(index), Some(ts), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(err(format!("expected `index, timestamp_seconds`, got `{line}`")));
        };
        let index = index
            .parse()
            .map_err(|_| err(format!("bad frame index `{index}`")))?;
        let timestamp: f64 = ts
            .parse()
            .map_err(|_| err(format!("bad timestamp `{ts}`")))?;
        if let Some(prev) = out.last().map(|e: &ManifestEntry| e.timestamp) {
            if timestamp <= prev {
                return Err(err("timestamps must be strictly increasing".into()));
            }
        }
        out.push(ManifestEntry { index, timestamp });
    }
    Ok(out)
}

pub fn read_frame_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_frame_manifest(&text, &path.display().to_string())
}
