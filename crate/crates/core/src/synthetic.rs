//! Seeded synthetic scenes: random Gaussians viewed by a ring of cameras,
//! with ground truth rendered by this crate's own rasterizer.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::init::{dc_to_rgb, rgb_to_dc};
use crate::math::{cross3, logit, mat_to_quat, norm3, scale3, sub3, Mat3, Vec3};
use crate::model::{GaussianCloud, Splat, SH_REST_LEN};
use crate::optim::TrainView;
use crate::raster::{render, RenderCamera, RenderConfig};
use crate::sfm::{PinholeIntrinsics, SfmCamera, SfmImage, SfmPoint, SfmScene};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub gaussians: usize,
    pub train_views: usize,
    pub heldout_views: usize,
    pub size: usize,
    /// Horizontal field of view, degrees.
    pub fov_deg: f64,
    pub ring_radius: f64,
    /// Training cameras alternate between `±elevation_deg`.
    pub elevation_deg: f64,
    /// Half-width of the cube holding the Gaussian means.
    pub half_extent: f64,
    pub scale_range: (f64, f64),
    pub opacity_range: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            gaussians: 20,
            train_views: 12,
            heldout_views: 4,
            size: 64,
            fov_deg: 50.0,
            ring_radius: 4.0,
            elevation_deg: 20.0,
            half_extent: 1.0,
            scale_range: (0.12, 0.3),
            opacity_range: (0.6, 0.95),
            seed: 42,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticScene {
    pub truth: GaussianCloud<f64>,
    pub train: Vec<TrainView<f64>>,
    pub heldout: Vec<TrainView<f64>>,
    /// Training cameras and one point per Gaussian (mean and colour).
    pub sfm: SfmScene,
}

/// World-to-camera rotation looking from `eye` at the origin, z up.
pub fn look_at(eye: Vec3<f64>) -> Mat3<f64> {
    let f = scale3(sub3([0.0; 3], eye), 1.0 / norm3(eye));
    let r = cross3(f, [0.0, 0.0, 1.0]);
    let r = scale3(r, 1.0 / norm3(r));
    let d = cross3(f, r);
    [r, d, f]
}

fn ring_camera(azimuth: f64, elevation: f64, cfg: &SyntheticConfig) -> RenderCamera<f64> {
    let (ca, sa) = (azimuth.cos(), azimuth.sin());
    let (ce, se) = (elevation.cos(), elevation.sin());
    let eye = [cfg.ring_radius * ce * ca, cfg.ring_radius * ce * sa, cfg.ring_radius * se];
    let rotation = look_at(eye);
    let t = crate::math::mat3_vec(&rotation, eye);
    let focal = cfg.size as f64 * 0.5 / (cfg.fov_deg.to_radians() * 0.5).tan();
    RenderCamera {
        focal_x: focal,
        focal_y: focal,
        principal_x: cfg.size as f64 * 0.5,
        principal_y: cfg.size as f64 * 0.5,
        width: cfg.size,
        height: cfg.size,
        rotation,
        translation: scale3(t, -1.0),
        near_clip: RenderCamera::<f64>::DEFAULT_NEAR_CLIP,
    }
}

pub fn random_cloud(cfg: &SyntheticConfig, rng: &mut impl Rng) -> GaussianCloud<f64> {
    let mut cloud = GaussianCloud::with_capacity(cfg.gaussians);
    let (s0, s1) = (cfg.scale_range.0.ln(), cfg.scale_range.1.ln());
    for _ in 0..cfg.gaussians {
        let position = std::array::from_fn(|_| rng.random_range(-cfg.half_extent..=cfg.half_extent));
        let log_scale = std::array::from_fn(|_| rng.random_range(s0..=s1));
        let rotation = std::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        let opacity = rng.random_range(cfg.opacity_range.0..=cfg.opacity_range.1);
        let rgb: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9) * 255.0);
        cloud.push(Splat {
            position,
            log_scale,
            rotation,
            raw_opacity: logit(opacity),
            sh_dc: rgb_to_dc(rgb),
            sh_rest: [0.0; SH_REST_LEN],
        });
    }
    cloud
}

fn views(
    truth: &GaussianCloud<f64>,
    cameras: Vec<RenderCamera<f64>>,
    prefix: &str,
) -> Result<Vec<TrainView<f64>>> {
    let config = RenderConfig::default();
    cameras
        .into_iter()
        .enumerate()
        .map(|(i, camera)| {
            let image = render(truth, &camera, &config)?.color;
            Ok(TrainView {
                camera,
                image,
                name: format!("{prefix}_{i:03}"),
            })
        })
        .collect()
}

/// Builds the scene. Held-out cameras sit between training azimuths at
/// zero elevation.
pub fn synthetic_scene(cfg: &SyntheticConfig) -> Result<SyntheticScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let truth = random_cloud(cfg, &mut rng);
    let tau = std::f64::consts::TAU;
    let elev = cfg.elevation_deg.to_radians();
    let train_cams: Vec<_> = (0..cfg.train_views)
        .map(|i| {
            let e = if i % 2 == 0 { elev } else { -elev };
            ring_camera(tau * i as f64 / cfg.train_views as f64, e, cfg)
        })
        .collect();
    let held_cams: Vec<_> = (0..cfg.heldout_views)
        .map(|i| {
            let a = tau * (i as f64 + 0.5) / cfg.heldout_views.max(1) as f64
                + 0.5 * tau / cfg.train_views.max(1) as f64;
            ring_camera(a, 0.0, cfg)
        })
        .collect();

    let mut cameras = BTreeMap::new();
    let f = train_cams.first().map_or(1.0, |c| c.focal_x);
    cameras.insert(
        1,
        SfmCamera {
            intrinsics: PinholeIntrinsics {
                focal_x: f,
                focal_y: f,
                principal_x: cfg.size as f64 * 0.5,
                principal_y: cfg.size as f64 * 0.5,
                width: cfg.size as u32,
                height: cfg.size as u32,
            },
            simple: false,
        },
    );
    let train = views(&truth, train_cams, "train")?;
    let images = train
        .iter()
        .enumerate()
        .map(|(i, v)| SfmImage {
            id: i as u32 + 1,
            camera_id: 1,
            rotation: mat_to_quat(&v.camera.rotation),
            translation: v.camera.translation,
            name: format!("{}.png", v.name),
        })
        .collect();
    let points = (0..truth.len())
        .map(|i| SfmPoint {
            id: i as u64 + 1,
            position: truth.positions[i],
            color: dc_to_rgb(truth.sh_dc[i]).map(|c| c.round().clamp(0.0, 255.0) as u8),
            error: 0.0,
            observations: cfg.train_views,
        })
        .collect();
    Ok(SyntheticScene {
        heldout: views(&truth, held_cams, "heldout")?,
        train,
        truth,
        sfm: SfmScene {
            cameras,
            images,
            points,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ring_cameras_face_origin() {
        let cfg = SyntheticConfig::default();
        let cam = ring_camera(0.3, 0.2, &cfg);
        let origin = crate::math::add3(crate::math::mat3_vec(&cam.rotation, [0.0; 3]), cam.translation);
        assert!(origin[0].abs() < 1e-12 && origin[1].abs() < 1e-12);
        assert!((origin[2] - 4.0).abs() < 1e-12);
        assert!((norm3(cam.center()) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn scene_is_seeded_and_consistent() {
        let cfg = SyntheticConfig::default();
        let a = synthetic_scene(&cfg).unwrap();
        let b = synthetic_scene(&cfg).unwrap();
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.train.len(), 12);
        assert_eq!(a.heldout.len(), 4);
        assert_eq!(a.sfm.points.len(), 20);
        a.sfm.validate().unwrap();
        // SfM poses reproduce the render cameras.
        for (img, v) in a.sfm.images.iter().zip(&a.train) {
            let cam = RenderCamera::<f64>::from_sfm(&a.sfm, img, 64, 64);
            for i in 0..3 {
                for j in 0..3 {
                    assert!((cam.rotation[i][j] - v.camera.rotation[i][j]).abs() < 1e-12);
                }
            }
        }
        let lit = a.train[0].image.data.iter().filter(|&&v| v > 0.05).count();
        assert!(lit > 200, "ground truth mostly empty: {lit}");
    }
}
