use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::Adam;
use super::config::TrainConfig;
use super::densify::{densify_and_prune, reset_opacity};
use super::loss::loss;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::init::init_gaussians;
use crate::math::Real;
use crate::metrics::psnr_from_mse;
use crate::model::{GaussianCloud, ShDegree};
use crate::raster::{backward, render, RenderCamera, RenderConfig};
use crate::sfm::SfmScene;

/// A posed ground-truth image.
#[derive(Clone, Debug)]
pub struct TrainView<T> {
    pub camera: RenderCamera<T>,
    pub image: Image<T>,
    pub name: String,
}

impl<T: Real> TrainView<T> {
    pub fn cast<U: Real>(&self) -> TrainView<U> {
        TrainView {
            camera: self.camera.cast(),
            image: self.image.cast(),
            name: self.name.clone(),
        }
    }
}

/// Everything the loop mutates between iterations.
#[derive(Clone, Debug)]
pub struct TrainState<T> {
    pub cloud: GaussianCloud<T>,
    pub adam: Adam<T>,
    /// Completed iterations.
    pub iteration: u64,
    /// Sum of NDC screen-space gradient norms since the last densification.
    pub grad_accum: Vec<f64>,
    pub grad_count: Vec<u32>,
    /// Sum of position gradients, used to orient clones.
    pub pos_grad_accum: Vec<[f64; 3]>,
    pub scene_extent: f64,
}

impl<T: Real> TrainState<T> {
    pub fn new(cloud: GaussianCloud<T>, scene_extent: f64) -> Self {
        let n = cloud.len();
        Self {
            adam: Adam::new(n),
            cloud,
            iteration: 0,
            grad_accum: vec![0.0; n],
            grad_count: vec![0; n],
            pos_grad_accum: vec![[0.0; 3]; n],
            scene_extent,
        }
    }

    pub fn reset_accumulators(&mut self) {
        let n = self.cloud.len();
        self.grad_accum = vec![0.0; n];
        self.grad_count = vec![0; n];
        self.pos_grad_accum = vec![[0.0; 3]; n];
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub iteration: u64,
    pub loss: f64,
    pub l1: f64,
    pub dssim: f64,
    /// PSNR of the view trained on at this iteration.
    pub psnr: f64,
    pub gaussian_count: usize,
}

impl LogEntry {
    pub const CSV_HEADER: &'static str = "iteration,loss,l1,dssim,psnr_train,gaussian_count";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{:?},{:?},{:?},{:?},{}",
            self.iteration, self.loss, self.l1, self.dssim, self.psnr, self.gaussian_count
        )
    }
}

pub fn log_to_csv(log: &[LogEntry]) -> String {
    let mut s = String::with_capacity(64 * (log.len() + 1));
    s.push_str(LogEntry::CSV_HEADER);
    s.push('\n');
    for e in log {
        s.push_str(&e.csv_row());
        s.push('\n');
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainResult<T> {
    pub cloud: GaussianCloud<T>,
    pub log: Vec<LogEntry>,
    pub scene_extent: f64,
}

/// Largest distance of a camera centre from the centroid of all centres.
/// Falls back to 1 when the cameras coincide.
pub fn scene_extent<T: Real>(cameras: &[RenderCamera<T>]) -> f64 {
    if cameras.is_empty() {
        return 1.0;
    }
    let centers: Vec<[f64; 3]> = cameras
        .iter()
        .map(|c| c.center().map(|v| v.as_f64()))
        .collect();
    let n = centers.len() as f64;
    let mut mean = [0.0; 3];
    for c in &centers {
        for k in 0..3 {
            mean[k] += c[k] / n;
        }
    }
    let r = centers
        .iter()
        .map(|c| ((c[0] - mean[0]).powi(2) + (c[1] - mean[1]).powi(2) + (c[2] - mean[2]).powi(2)).sqrt())
        .fold(0.0, f64::max);
    if r > 1e-9 {
        r
    } else {
        log::warn!("camera centres coincide; using unit scene extent");
        1.0
    }
}

/// Initializes from the scene's points and trains.
pub fn train<T: Real>(
    scene: &SfmScene,
    views: &[TrainView<T>],
    config: &TrainConfig,
) -> Result<TrainResult<T>> {
    config.validate()?;
    let cloud = init_gaussians(scene, &config.init)?;
    train_cloud(cloud, views, config)
}

/// Trains an existing cloud against `views`.
pub fn train_cloud<T: Real>(
    cloud: GaussianCloud<T>,
    views: &[TrainView<T>],
    config: &TrainConfig,
) -> Result<TrainResult<T>> {
    config.validate()?;
    if views.len() < 2 {
        return Err(Error::domain(format!(
            "training needs at least 2 views, got {}",
            views.len()
        )));
    }
    cloud.check_consistent()?;
    for v in views {
        v.camera.validate()?;
        if v.image.width != v.camera.width || v.image.height != v.camera.height || v.image.channels != 3 {
            return Err(Error::DimensionMismatch(format!(
                "view {}: image {}x{}x{} for a {}x{} camera",
                v.name, v.image.width, v.image.height, v.image.channels, v.camera.width, v.camera.height
            )));
        }
    }

    let cameras: Vec<_> = views.iter().map(|v| v.camera.clone()).collect();
    let extent = scene_extent(&cameras);
    let max_degree = ShDegree::new(config.max_sh_degree)?;
    let mut cloud = cloud;
    cloud.sh_degree = max_degree;
    let mut state = TrainState::new(cloud, extent);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = Vec::new();
    let lambda = T::lit(config.loss_lambda);
    let densify_until = config.densify_until() as u64;
    let mut log = Vec::with_capacity(config.iterations);
    log::info!(
        "training {} gaussians on {} views for {} iterations (extent {:.4})",
        state.cloud.len(),
        views.len(),
        config.iterations,
        extent
    );

    for it in 1..=config.iterations as u64 {
        if order.is_empty() {
            order = (0..views.len()).collect();
            order.shuffle(&mut rng);
            order.reverse();
        }
        let view = &views[order.pop().expect("refilled above")];

        let scheduled = ((it - 1) / config.sh_degree_interval as u64).min(3) as u32;
        let render_config = RenderConfig {
            background: config.background.map(T::lit),
            sh_degree: ShDegree::new(scheduled)?.min(max_degree),
            parallel: config.parallel,
            ..RenderConfig::default()
        };

        let out = render(&state.cloud, &view.camera, &render_config)?;
        let lv = loss(&out.color, &view.image, lambda)?;
        if !lv.total.is_finite() {
            return Err(Error::NonFiniteLoss { iteration: it as usize });
        }
        let grads = backward(&state.cloud, &view.camera, &render_config, &out, &lv.grad)?;

        if it <= densify_until {
            for i in 0..state.cloud.len() {
                if grads.visible[i] {
                    state.grad_accum[i] += grads.screen_grad_norms[i].as_f64();
                    state.grad_count[i] += 1;
                    let g = grads.params.positions[i];
                    for k in 0..3 {
                        state.pos_grad_accum[i][k] += g[k].as_f64();
                    }
                }
            }
        }

        let lr = config.learning_rates(it as usize, extent);
        state.adam.step(&mut state.cloud, &grads.params, &lr, it)?;
        state.iteration = it;

        if it < densify_until {
            if it > config.densify_from as u64 && it % config.densify_interval as u64 == 0 {
                let r = densify_and_prune(&mut state, config, &mut rng);
                log::debug!("iteration {it}: {r:?}");
            }
            if it % config.opacity_reset_interval as u64 == 0 {
                reset_opacity(&mut state);
            }
        }

        let m = crate::metrics::mse(&out.color, &view.image)?;
        let entry = LogEntry {
            iteration: it,
            loss: lv.total.as_f64(),
            l1: lv.l1.as_f64(),
            dssim: lv.dssim.as_f64(),
            psnr: psnr_from_mse(m),
            gaussian_count: state.cloud.len(),
        };
        if it % 100 == 0 || it == 1 {
            log::info!(
                "iter {:>6}  loss {:.5}  psnr {:.2}  gaussians {}",
                it,
                entry.loss,
                entry.psnr,
                entry.gaussian_count
            );
        }
        log.push(entry);
    }

    Ok(TrainResult {
        cloud: state.cloud,
        log,
        scene_extent: extent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mat3_identity;

    fn camera(tx: f64) -> RenderCamera<f64> {
        RenderCamera {
            focal_x: 10.0,
            focal_y: 10.0,
            principal_x: 4.0,
            principal_y: 4.0,
            width: 8,
            height: 8,
            rotation: mat3_identity(),
            translation: [tx, 0.0, 0.0],
            near_clip: 0.01,
        }
    }

    #[test]
    fn extent_is_bounding_radius() {
        let cams = [camera(-1.0), camera(3.0)];
        assert!((scene_extent(&cams) - 2.0).abs() < 1e-12);
        assert_eq!(scene_extent(&[camera(0.0), camera(0.0)]), 1.0);
    }

    #[test]
    fn rejects_single_view() {
        let view = TrainView {
            camera: camera(0.0),
            image: Image::new(8, 8, 3),
            name: "a".into(),
        };
        let err = train_cloud(GaussianCloud::<f64>::zeros(0), &[view], &TrainConfig::default());
        assert!(err.is_err());
    }

    #[test]
    fn csv_header_and_row() {
        let e = LogEntry {
            iteration: 3,
            loss: 0.5,
            l1: 0.25,
            dssim: 1.0,
            psnr: 20.0,
            gaussian_count: 7,
        };
        let csv = log_to_csv(&[e]);
        assert_eq!(csv, "iteration,loss,l1,dssim,psnr_train,gaussian_count\n3,0.5,0.25,1.0,20.0,7\n");
    }
}
