//! Photometric loss, Adam updates, adaptive density control and the
//! training loop.

mod adam;
mod config;
mod densify;
mod loss;
pub mod ssim;
mod train;

pub use adam::{Adam, LearningRates, BETA1, BETA2, EPSILON};
pub use config::TrainConfig;
pub use densify::{densify_and_prune, reset_opacity, DensifyReport, OPACITY_RESET_CEILING, SPLIT_SCALE_DIVISOR};
pub use loss::{loss, LossValue};
pub use ssim::ssim;
pub use train::{
    log_to_csv, scene_extent, train, train_cloud, LogEntry, TrainResult, TrainState, TrainView,
};
