//! Tile-based differentiable rasterizer.
//!
//! Gaussians are projected to screen-space ellipses with the local affine
//! (EWA) approximation, binned into 16×16 tiles, sorted by `(tile, depth,
//! index)` and alpha-composited front to back. The backward pass re-walks
//! each pixel's contributor list and chains analytic derivatives back to
//! the raw parameters.

mod backward;
mod forward;
mod project;

pub use backward::{backward, CloudGradients};
pub use forward::render;
pub use project::{project, Projection};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{mat3_tvec, scale3, Mat3, Real, Vec3};
use crate::model::ShDegree;
use crate::sfm::{SfmImage, SfmScene};

pub const TILE_SIZE: usize = 16;
/// Added to the projected covariance diagonal, px².
pub const COV2D_DILATION: f64 = 0.3;
pub const ALPHA_MAX: f64 = 0.99;
/// A Gaussian only covers pixels within this Mahalanobis distance of its
/// mean; the same radius (in standard deviations) bounds its tile footprint.
pub const CUTOFF_SIGMA: f64 = 3.0;
pub const MIN_COV2D_DET: f64 = 1e-12;
/// Fraction of the image size by which the Jacobian's evaluation point may
/// lie outside the viewport before it is clamped.
pub const JACOBIAN_GUARD_BAND: f64 = 0.15;

#[derive(Clone, Debug, PartialEq)]
pub struct RenderCamera<T> {
    pub focal_x: T,
    pub focal_y: T,
    pub principal_x: T,
    pub principal_y: T,
    pub width: usize,
    pub height: usize,
    /// World-to-camera rotation.
    pub rotation: Mat3<T>,
    /// World-to-camera translation.
    pub translation: Vec3<T>,
    pub near_clip: T,
}

impl<T: Real> RenderCamera<T> {
    pub const DEFAULT_NEAR_CLIP: f64 = 0.01;

    pub fn validate(&self) -> Result<()> {
        if !(self.focal_x > T::zero() && self.focal_y > T::zero()) {
            return Err(Error::domain("camera focal lengths must be positive"));
        }
        if !(self.near_clip > T::zero()) {
            return Err(Error::domain("near clip must be positive"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::domain("camera has an empty viewport"));
        }
        Ok(())
    }

    /// Camera centre in world space.
    pub fn center(&self) -> Vec3<T> {
        scale3(mat3_tvec(&self.rotation, self.translation), -T::one())
    }

    /// Camera for an SfM image, with intrinsics rescaled to `width × height`
    /// (pass the camera's native size to keep them unchanged).
    pub fn from_sfm(scene: &SfmScene, image: &SfmImage, width: usize, height: usize) -> Self {
        let k = &scene.camera_of(image).intrinsics;
        let sx = width as f64 / k.width as f64;
        let sy = height as f64 / k.height as f64;
        let r = image.rotation_matrix();
        RenderCamera {
            focal_x: T::lit(k.focal_x * sx),
            focal_y: T::lit(k.focal_y * sy),
            principal_x: T::lit(k.principal_x * sx),
            principal_y: T::lit(k.principal_y * sy),
            width,
            height,
            rotation: r.map(|row| row.map(T::lit)),
            translation: image.translation.map(T::lit),
            near_clip: T::lit(Self::DEFAULT_NEAR_CLIP),
        }
    }

    pub fn cast<U: Real>(&self) -> RenderCamera<U> {
        let c = |v: T| U::lit(v.as_f64());
        RenderCamera {
            focal_x: c(self.focal_x),
            focal_y: c(self.focal_y),
            principal_x: c(self.principal_x),
            principal_y: c(self.principal_y),
            width: self.width,
            height: self.height,
            rotation: self.rotation.map(|row| row.map(c)),
            translation: self.translation.map(c),
            near_clip: c(self.near_clip),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum RenderMode {
    #[default]
    Color,
    Depth,
    Accumulation,
}

impl std::str::FromStr for RenderMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "color" => Ok(RenderMode::Color),
            "depth" => Ok(RenderMode::Depth),
            "accum" | "accumulation" => Ok(RenderMode::Accumulation),
            other => Err(Error::domain(format!("unknown render mode `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderConfig<T> {
    pub tile_size: usize,
    pub background: [T; 3],
    pub mode: RenderMode,
    pub alpha_floor: T,
    pub transmittance_floor: T,
    pub sh_degree: ShDegree,
    /// Process tiles on the rayon pool. Results are identical either way.
    pub parallel: bool,
}

impl<T: Real> Default for RenderConfig<T> {
    fn default() -> Self {
        Self {
            tile_size: TILE_SIZE,
            background: [T::zero(); 3],
            mode: RenderMode::Color,
            alpha_floor: T::lit(1.0 / 255.0),
            transmittance_floor: T::lit(1e-4),
            sh_degree: ShDegree::MAX,
            parallel: true,
        }
    }
}

impl<T: Real> RenderConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let unit = |v: T| v > T::zero() && v < T::one();
        if !unit(self.alpha_floor) || !unit(self.transmittance_floor) {
            return Err(Error::domain("render floors must lie in (0, 1)"));
        }
        if self.tile_size == 0 {
            return Err(Error::domain("tile size must be positive"));
        }
        Ok(())
    }
}

/// Colour, depth and accumulation planes from one rasterization pass.
#[derive(Clone, Debug)]
pub struct RenderOutput<T> {
    /// `H×W×3`, clamped to `[0,1]`.
    pub color: Image<T>,
    /// `H×W`, accumulation-normalized camera-space z; 0 where nothing was hit.
    pub depth: Image<T>,
    /// `H×W`, `1 − T_final`.
    pub accumulation: Image<T>,
    /// Per Gaussian: whether it touched any tile.
    pub visible: Vec<bool>,
    pub(crate) cache: forward::RenderCache<T>,
}

impl<T: Real> RenderOutput<T> {
    /// The plane selected by `mode`.
    pub fn plane(&self, mode: RenderMode) -> &Image<T> {
        match mode {
            RenderMode::Color => &self.color,
            RenderMode::Depth => &self.depth,
            RenderMode::Accumulation => &self.accumulation,
        }
    }

    pub fn projections(&self) -> &[Projection<T>] {
        &self.cache.projections
    }

    /// Per-Gaussian activated opacity used for compositing.
    pub fn opacities(&self) -> &[T] {
        &self.cache.opacities
    }

    /// Per-Gaussian view-dependent colour used for compositing.
    pub fn gaussian_colors(&self) -> Vec<[T; 3]> {
        (0..self.cache.colors_raw.len()).map(|g| self.cache.color(g)).collect()
    }

    /// Unclamped colour before the `[0,1]` output clamp.
    pub fn raw_color(&self) -> &Image<T> {
        &self.cache.raw_color
    }
}
