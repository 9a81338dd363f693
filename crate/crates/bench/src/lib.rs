//! Shared fixtures for the benchmarks.

use splatwalk_core::optim::TrainView;
use splatwalk_core::synthetic::{synthetic_scene, SyntheticConfig};
use splatwalk_core::GaussianCloud;

/// A random cloud of `gaussians` splats and one `size × size` view of it.
pub fn fixture(gaussians: usize, size: usize) -> (GaussianCloud<f32>, TrainView<f32>) {
    let cfg = SyntheticConfig {
        gaussians,
        train_views: 1,
        heldout_views: 0,
        size,
        scale_range: (0.02, 0.08),
        ..Default::default()
    };
    let scene = synthetic_scene(&cfg).expect("synthetic scene");
    (scene.truth.cast(), scene.train[0].cast())
}
