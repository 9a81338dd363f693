use rayon::prelude::*;

use super::{RenderCamera, COV2D_DILATION, CUTOFF_SIGMA, JACOBIAN_GUARD_BAND, MIN_COV2D_DET};
use crate::math::{mat3_vec, sym2_eigenvalues, Mat2, Mat3, Real, Vec3};
use crate::model::{covariance, GaussianCloud};

/// A Gaussian splatted onto the image plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Projection<T> {
    /// Pixel coordinates; pixel `(i, j)` is centred at `(i + 0.5, j + 0.5)`.
    pub mean2d: [T; 2],
    /// Screen-space covariance including the dilation term, px².
    pub cov2d: Mat2<T>,
    /// Inverse of `cov2d`.
    pub conic: Mat2<T>,
    /// Camera-space z.
    pub depth: T,
    /// `ceil(3·√λmax)` in pixels.
    pub radius: usize,
    pub visible: bool,
    /// Camera-space mean.
    pub(crate) cam: Vec3<T>,
}

impl<T: Real> Projection<T> {
    fn culled(cam: Vec3<T>) -> Self {
        let z = T::zero();
        Projection {
            mean2d: [z; 2],
            cov2d: [[z; 2]; 2],
            conic: [[z; 2]; 2],
            depth: cam[2],
            radius: 0,
            visible: false,
            cam,
        }
    }

    /// Inclusive pixel bounding box `(x0, y0, x1, y1)` of pixel centres
    /// within `radius` of the mean, or `None` when it misses the viewport.
    pub fn pixel_bounds(&self, width: usize, height: usize) -> Option<[usize; 4]> {
        let r = T::lit(self.radius as f64);
        let half = T::lit(0.5);
        let lo_x = (self.mean2d[0] - r - half).ceil();
        let hi_x = (self.mean2d[0] + r - half).floor();
        let lo_y = (self.mean2d[1] - r - half).ceil();
        let hi_y = (self.mean2d[1] + r - half).floor();
        let (w, h) = (T::lit(width as f64), T::lit(height as f64));
        if hi_x < T::zero() || hi_y < T::zero() || lo_x >= w || lo_y >= h || lo_x > hi_x || lo_y > hi_y {
            return None;
        }
        let clamp = |v: T, max: usize| v.max(T::zero()).min(T::lit(max as f64 - 1.0)).as_f64() as usize;
        Some([clamp(lo_x, width), clamp(lo_y, height), clamp(hi_x, width), clamp(hi_y, height)])
    }
}

/// Camera-space point used for the Jacobian: `x/z` and `y/z` clamped to the
/// viewport widened by [`JACOBIAN_GUARD_BAND`] on each side. Also returns
/// `∂x_c/∂z` (and for y) where clamping applied, `None` otherwise.
pub(crate) fn jacobian_point<T: Real>(cam: Vec3<T>, camera: &RenderCamera<T>) -> (Vec3<T>, [Option<T>; 2]) {
    let [x, y, z] = cam;
    let g = T::lit(JACOBIAN_GUARD_BAND);
    let w = T::lit(camera.width as f64);
    let h = T::lit(camera.height as f64);
    let clamp = |v: T, lo: T, hi: T| {
        let t = v / z;
        if t < lo {
            (lo * z, Some(lo))
        } else if t > hi {
            (hi * z, Some(hi))
        } else {
            (v, None)
        }
    };
    let (xc, dx) = clamp(
        x,
        -(camera.principal_x + g * w) / camera.focal_x,
        (w - camera.principal_x + g * w) / camera.focal_x,
    );
    let (yc, dy) = clamp(
        y,
        -(camera.principal_y + g * h) / camera.focal_y,
        (h - camera.principal_y + g * h) / camera.focal_y,
    );
    ([xc, yc, z], [dx, dy])
}

/// Perspective Jacobian of `(fx·x/z, fy·y/z)` at a camera-space point.
pub(crate) fn jacobian<T: Real>(cam: Vec3<T>, fx: T, fy: T) -> [[T; 3]; 2] {
    let [x, y, z] = cam;
    let iz = T::one() / z;
    let iz2 = iz * iz;
    [
        [fx * iz, T::zero(), -fx * x * iz2],
        [T::zero(), fy * iz, -fy * y * iz2],
    ]
}

/// `T = J W`, the 2×3 linear map from world offsets to pixel offsets.
pub(crate) fn screen_map<T: Real>(j: &[[T; 3]; 2], w: &Mat3<T>) -> [[T; 3]; 2] {
    let mut t = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            t[r][c] = j[r][0] * w[0][c] + j[r][1] * w[1][c] + j[r][2] * w[2][c];
        }
    }
    t
}

/// `T Σ Tᵀ`
pub(crate) fn project_cov<T: Real>(t: &[[T; 3]; 2], sigma: &Mat3<T>) -> Mat2<T> {
    let mut ts = [[T::zero(); 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            ts[r][c] = t[r][0] * sigma[0][c] + t[r][1] * sigma[1][c] + t[r][2] * sigma[2][c];
        }
    }
    let mut out = [[T::zero(); 2]; 2];
    for r in 0..2 {
        for c in 0..2 {
            out[r][c] = ts[r][0] * t[c][0] + ts[r][1] * t[c][1] + ts[r][2] * t[c][2];
        }
    }
    out
}

pub(crate) fn project_one<T: Real>(
    cloud: &GaussianCloud<T>,
    i: usize,
    camera: &RenderCamera<T>,
) -> Projection<T> {
    let w = &camera.rotation;
    let p = cloud.positions[i];
    let mut cam = mat3_vec(w, p);
    for a in 0..3 {
        cam[a] += camera.translation[a];
    }
    if !(cam[2] > camera.near_clip) {
        return Projection::culled(cam);
    }
    let Ok(sigma) = covariance(cloud.log_scales[i], cloud.rotations[i]) else {
        return Projection::culled(cam);
    };
    let j = jacobian(jacobian_point(cam, camera).0, camera.focal_x, camera.focal_y);
    let t = screen_map(&j, w);
    let mut cov2d = project_cov(&t, &sigma);
    let dil = T::lit(COV2D_DILATION);
    cov2d[0][0] += dil;
    cov2d[1][1] += dil;
    // Exact symmetry for the conic.
    cov2d[1][0] = cov2d[0][1];
    let det = cov2d[0][0] * cov2d[1][1] - cov2d[0][1] * cov2d[1][0];
    if !(det >= T::lit(MIN_COV2D_DET)) || !det.is_finite() {
        return Projection::culled(cam);
    }
    let inv = T::one() / det;
    let conic = [
        [cov2d[1][1] * inv, -cov2d[0][1] * inv],
        [-cov2d[1][0] * inv, cov2d[0][0] * inv],
    ];
    let (lambda_max, _) = sym2_eigenvalues(&cov2d);
    let radius = (T::lit(CUTOFF_SIGMA) * lambda_max.sqrt()).ceil();
    let mean2d = [
        camera.focal_x * cam[0] / cam[2] + camera.principal_x,
        camera.focal_y * cam[1] / cam[2] + camera.principal_y,
    ];
    if !(radius.is_finite() && mean2d[0].is_finite() && mean2d[1].is_finite()) {
        return Projection::culled(cam);
    }
    let mut proj = Projection {
        mean2d,
        cov2d,
        conic,
        depth: cam[2],
        radius: radius.as_f64() as usize,
        visible: true,
        cam,
    };
    proj.visible = proj.radius > 0 && proj.pixel_bounds(camera.width, camera.height).is_some();
    proj
}

/// Projects every Gaussian. Culled ones stay in place with `visible = false`.
pub fn project<T: Real>(cloud: &GaussianCloud<T>, camera: &RenderCamera<T>) -> Vec<Projection<T>> {
    project_with(cloud, camera, true)
}

pub(crate) fn project_with<T: Real>(
    cloud: &GaussianCloud<T>,
    camera: &RenderCamera<T>,
    parallel: bool,
) -> Vec<Projection<T>> {
    if parallel {
        (0..cloud.len())
            .into_par_iter()
            .map(|i| project_one(cloud, i, camera))
            .collect()
    } else {
        (0..cloud.len()).map(|i| project_one(cloud, i, camera)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mat3_identity;
    use crate::model::Splat;

    fn camera(f: f64, size: usize) -> RenderCamera<f64> {
        RenderCamera {
            focal_x: f,
            focal_y: f,
            principal_x: size as f64 / 2.0,
            principal_y: size as f64 / 2.0,
            width: size,
            height: size,
            rotation: mat3_identity(),
            translation: [0.0; 3],
            near_clip: 0.01,
        }
    }

    fn one(pos: [f64; 3]) -> GaussianCloud<f64> {
        let mut c = GaussianCloud::with_capacity(1);
        c.push(Splat {
            position: pos,
            log_scale: [0.0; 3],
            rotation: [1.0, 0.0, 0.0, 0.0],
            raw_opacity: 0.0,
            sh_dc: [0.0; 3],
            sh_rest: [0.0; 45],
        });
        c
    }

    #[test]
    fn on_axis_projection() {
        let p = project(&one([0.0, 0.0, 2.0]), &camera(100.0, 64))[0];
        assert!(p.visible);
        assert_eq!(p.mean2d, [32.0, 32.0]);
        assert_eq!(p.depth, 2.0);
        assert!((p.cov2d[0][0] - 2500.3).abs() < 1e-9);
        assert!((p.cov2d[1][1] - 2500.3).abs() < 1e-9);
        assert!(p.cov2d[0][1].abs() < 1e-12);
        assert_eq!(p.radius, (3.0 * 2500.3f64.sqrt()).ceil() as usize);
    }

    #[test]
    fn behind_camera_is_culled() {
        let p = project(&one([0.0, 0.0, -2.0]), &camera(100.0, 64))[0];
        assert!(!p.visible);
        let p = project(&one([0.0, 0.0, 0.005]), &camera(100.0, 64))[0];
        assert!(!p.visible);
    }

    #[test]
    fn far_off_screen_is_invisible() {
        let p = project(&one([1000.0, 0.0, 2.0]), &camera(100.0, 64))[0];
        assert!(!p.visible);
    }

    #[test]
    fn translation_invariance() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let mut cam = camera(80.0, 48);
        cam.rotation = crate::math::quat_to_mat([h, 0.0, h, 0.0]);
        cam.translation = [0.3, -0.2, 3.0];
        let mut cloud = one([0.2, 0.1, -0.4]);
        cloud.log_scales[0] = [-0.5, 0.1, -1.0];
        cloud.rotations[0] = [0.8, 0.2, -0.1, 0.4];
        let base = project(&cloud, &cam)[0];

        let offset = [5.0, -7.0, 2.5];
        let mut shifted = cloud.clone();
        for a in 0..3 {
            shifted.positions[0][a] += offset[a];
        }
        // A camera moved by the same offset: t' = t − R·offset.
        let mut cam2 = cam.clone();
        let ro = mat3_vec(&cam.rotation, offset);
        for a in 0..3 {
            cam2.translation[a] -= ro[a];
        }
        let moved = project(&shifted, &cam2)[0];
        assert!((base.mean2d[0] - moved.mean2d[0]).abs() < 1e-6);
        assert!((base.mean2d[1] - moved.mean2d[1]).abs() < 1e-6);
        assert!((base.depth - moved.depth).abs() < 1e-6);
        for r in 0..2 {
            for c in 0..2 {
                assert!((base.cov2d[r][c] - moved.cov2d[r][c]).abs() < 1e-6);
            }
        }
        assert_eq!(base.radius, moved.radius);
        assert_eq!(base.visible, moved.visible);
    }
}
