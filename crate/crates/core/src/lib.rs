//! Reconstruction of Gaussian splat scenes from 360° walk-through captures.
//!
//! The pipeline runs capture planning, equirectangular frame extraction,
//! ingestion of structure-from-motion text files, splat initialization,
//! differentiable tile-based rasterization with analytic gradients,
//! optimization with adaptive density control, and export to PLY or a
//! compressed container.

pub mod capture;
pub mod equirect;
pub mod error;
pub mod image;
pub mod init;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod raster;
pub mod sfm;
pub mod sh;
pub mod synthetic;

pub use error::{Error, Result};
pub use image::Image;
pub use math::Real;
pub use model::{GaussianCloud, ShDegree};
pub use raster::{
    CloudGradients, RenderCamera, RenderConfig, RenderMode, RenderOutput,
};
pub use sfm::SfmScene;
