#![allow(dead_code)]

pub mod gradcheck;
pub mod oracle;

use rand::Rng;
use rand_distr::StandardNormal;
use splatwalk_core::math::{logit, mat3_identity};
use splatwalk_core::model::{Splat, SH_REST_LEN};
use splatwalk_core::{GaussianCloud, Real, RenderCamera};

/// Pinhole at the origin looking down +z.
pub fn camera<T: Real>(width: usize, height: usize, focal: f64) -> RenderCamera<T> {
    RenderCamera {
        focal_x: T::lit(focal),
        focal_y: T::lit(focal),
        principal_x: T::lit(width as f64 / 2.0),
        principal_y: T::lit(height as f64 / 2.0),
        width,
        height,
        rotation: mat3_identity(),
        translation: [T::zero(); 3],
        near_clip: T::lit(0.01),
    }
}

pub struct CloudSpec {
    pub xy: f64,
    pub depth: (f64, f64),
    pub log_scale: (f64, f64),
    pub opacity: (f64, f64),
    pub sh_rest: f64,
}

impl Default for CloudSpec {
    fn default() -> Self {
        Self {
            xy: 1.5,
            depth: (2.0, 6.0),
            log_scale: (-3.0, -0.5),
            opacity: (0.05, 0.999),
            sh_rest: 0.3,
        }
    }
}

pub fn random_cloud<T: Real>(rng: &mut impl Rng, n: usize, spec: &CloudSpec) -> GaussianCloud<T> {
    let mut c = GaussianCloud::with_capacity(n);
    for _ in 0..n {
        let z = rng.random_range(spec.depth.0..spec.depth.1);
        let position = [
            rng.random_range(-spec.xy..spec.xy),
            rng.random_range(-spec.xy..spec.xy),
            z,
        ];
        let log_scale: [f64; 3] =
            std::array::from_fn(|_| rng.random_range(spec.log_scale.0..spec.log_scale.1));
        let rotation: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        let opacity: f64 = rng.random_range(spec.opacity.0..spec.opacity.1);
        let sh_dc: [f64; 3] = std::array::from_fn(|_| rng.random_range(-1.5..1.5));
        let sh_rest: [f64; SH_REST_LEN] =
            std::array::from_fn(|_| rng.random_range(-spec.sh_rest..=spec.sh_rest));
        c.push(Splat {
            position: position.map(T::lit),
            log_scale: log_scale.map(T::lit),
            rotation: rotation.map(T::lit),
            raw_opacity: T::lit(logit(opacity)),
            sh_dc: sh_dc.map(T::lit),
            sh_rest: sh_rest.map(T::lit),
        });
    }
    c
}
