use rayon::prelude::*;

use super::forward::{gaussian_power, pixel_alpha, RenderCache};
use super::project::{jacobian, jacobian_point, screen_map};
use super::{RenderCamera, RenderConfig, RenderOutput};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::{mat3_tvec, quat_norm, quat_to_mat, quat_to_mat_vjp, Mat2, Mat3, Real};
use crate::model::{covariance, GaussianCloud, SH_REST_LEN};
use crate::sh::eval_sh_backward;

/// Gradients of a scalar loss with respect to every learnable array.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudGradients<T> {
    /// Same shape as the cloud.
    pub params: GaussianCloud<T>,
    /// Norm of the gradient with respect to the projected mean, expressed in
    /// normalized device units (pixel gradient × half the image extent).
    pub screen_grad_norms: Vec<T>,
    /// Gaussians that touched at least one tile in the forward pass.
    pub visible: Vec<bool>,
}

/// Accumulated gradients with respect to the screen-space quantities of one
/// Gaussian.
#[derive(Clone, Copy, Debug)]
struct ScreenGrad<T> {
    mean: [T; 2],
    /// `∂L/∂K` for the conic `K`, entries (0,0), (0,1)=(1,0), (1,1).
    conic: [T; 3],
    opacity: T,
    color: [T; 3],
}

impl<T: Real> ScreenGrad<T> {
    fn zero() -> Self {
        let z = T::zero();
        ScreenGrad {
            mean: [z; 2],
            conic: [z; 3],
            opacity: z,
            color: [z; 3],
        }
    }

    fn add(&mut self, o: &ScreenGrad<T>) {
        for k in 0..2 {
            self.mean[k] += o.mean[k];
        }
        for k in 0..3 {
            self.conic[k] += o.conic[k];
            self.color[k] += o.color[k];
        }
        self.opacity += o.opacity;
    }
}

struct Contribution<T> {
    local: usize,
    alpha: T,
    t_before: T,
    free: bool,
    gauss: T,
    dx: T,
    dy: T,
}

fn tile_gradients<T: Real>(
    cache: &RenderCache<T>,
    config: &RenderConfig<T>,
    tile: usize,
    d_image: &Image<T>,
) -> Vec<ScreenGrad<T>> {
    let list = cache.tile_list(tile);
    let mut acc = vec![ScreenGrad::zero(); list.len()];
    if list.is_empty() {
        return acc;
    }
    let (x0, x1, y0, y1) = cache.tile_rect(tile);
    let half = T::lit(0.5);
    let mut contribs: Vec<Contribution<T>> = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let raw = cache.raw_color.pixel(x, y);
            let mut g = [T::zero(); 3];
            for ch in 0..3 {
                // The output clamp to [0,1] blocks gradients outside the range.
                if raw[ch] >= T::zero() && raw[ch] <= T::one() {
                    g[ch] = d_image.pixel(x, y)[ch];
                }
            }
            if g.iter().all(|v| *v == T::zero()) {
                continue;
            }
            let (px, py) = (T::lit(x as f64) + half, T::lit(y as f64) + half);
            contribs.clear();
            let mut t = T::one();
            for (local, &gid) in list.iter().enumerate() {
                let gid = gid as usize;
                let p = &cache.projections[gid];
                let (power, dx, dy) = gaussian_power(p, px, py);
                let Some((alpha, free)) =
                    pixel_alpha(power, cache.opacities[gid], config.alpha_floor)
                else {
                    continue;
                };
                let t_next = t * (T::one() - alpha);
                if t_next < config.transmittance_floor {
                    break;
                }
                contribs.push(Contribution {
                    local,
                    alpha,
                    t_before: t,
                    free,
                    gauss: power.exp(),
                    dx,
                    dy,
                });
                t = t_next;
            }
            // Colour seen behind the current contributor.
            let mut behind = config.background;
            for c in contribs.iter().rev() {
                let gid = list[c.local] as usize;
                let col = cache.color(gid);
                let w = c.alpha * c.t_before;
                let a = &mut acc[c.local];
                let mut d_alpha = T::zero();
                for ch in 0..3 {
                    a.color[ch] += g[ch] * w;
                    d_alpha += g[ch] * c.t_before * (col[ch] - behind[ch]);
                    behind[ch] = col[ch] * c.alpha + (T::one() - c.alpha) * behind[ch];
                }
                if c.free {
                    let k = &cache.projections[gid].conic;
                    a.opacity += d_alpha * c.gauss;
                    let d_power = d_alpha * c.alpha;
                    let m = -half * d_power;
                    a.conic[0] += m * c.dx * c.dx;
                    a.conic[1] += m * c.dx * c.dy;
                    a.conic[2] += m * c.dy * c.dy;
                    a.mean[0] += d_power * (k[0][0] * c.dx + k[0][1] * c.dy);
                    a.mean[1] += d_power * (k[1][0] * c.dx + k[1][1] * c.dy);
                }
            }
        }
    }
    acc
}

fn mat2_mul<T: Real>(a: &Mat2<T>, b: &Mat2<T>) -> Mat2<T> {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

struct ParamGrad<T> {
    position: [T; 3],
    log_scale: [T; 3],
    rotation: [T; 4],
    raw_opacity: T,
    dc: [T; 3],
    rest: [T; SH_REST_LEN],
    screen_norm: T,
}

fn chain_gaussian<T: Real>(
    cloud: &GaussianCloud<T>,
    camera: &RenderCamera<T>,
    config: &RenderConfig<T>,
    cache: &RenderCache<T>,
    i: usize,
    sg: &ScreenGrad<T>,
) -> ParamGrad<T> {
    let z0 = T::zero();
    let mut out = ParamGrad {
        position: [z0; 3],
        log_scale: [z0; 3],
        rotation: [z0; 4],
        raw_opacity: z0,
        dc: [z0; 3],
        rest: [z0; SH_REST_LEN],
        screen_norm: z0,
    };
    let proj = &cache.projections[i];
    if !proj.visible {
        return out;
    }
    let two = T::lit(2.0);
    let (fx, fy) = (camera.focal_x, camera.focal_y);
    let w = &camera.rotation;
    let [x, y, z] = proj.cam;
    let iz = T::one() / z;
    let iz2 = iz * iz;
    let iz3 = iz2 * iz;

    // Conic -> 2D covariance: G_cov = -K G_K K.
    let k = &proj.conic;
    let gk = [[sg.conic[0], sg.conic[1]], [sg.conic[1], sg.conic[2]]];
    let kg = mat2_mul(&mat2_mul(k, &gk), k);
    let g_cov = kg.map(|r| r.map(|v| -v));

    // 2D covariance -> Σ and the screen map T = J W.
    let sigma = covariance(cloud.log_scales[i], cloud.rotations[i]).expect("visible implies valid");
    let (jp, clamped) = jacobian_point(proj.cam, camera);
    let (xc, yc) = (jp[0], jp[1]);
    let jac = jacobian(jp, fx, fy);
    let t = screen_map(&jac, w);
    let mut g_sigma = [[z0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut s = z0;
            for r in 0..2 {
                for c in 0..2 {
                    s += t[r][a] * g_cov[r][c] * t[c][b];
                }
            }
            g_sigma[a][b] = s;
        }
    }
    // G_T = 2 G_cov T Σ
    let mut g_t = [[z0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            let mut s = z0;
            for m in 0..2 {
                for n in 0..3 {
                    s += g_cov[r][m] * t[m][n] * sigma[n][c];
                }
            }
            g_t[r][c] = two * s;
        }
    }
    // G_J = G_T Wᵀ
    let mut g_j = [[z0; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            g_j[r][c] = g_t[r][0] * w[c][0] + g_t[r][1] * w[c][1] + g_t[r][2] * w[c][2];
        }
    }

    let gm = sg.mean;
    let mut d_cam = [z0; 3];
    // Mean path.
    d_cam[0] += gm[0] * fx * iz;
    d_cam[1] += gm[1] * fy * iz;
    d_cam[2] += -gm[0] * fx * x * iz2 - gm[1] * fy * y * iz2;
    // Jacobian path through the (possibly clamped) evaluation point.
    let d_xc = -g_j[0][2] * fx * iz2;
    let d_yc = -g_j[1][2] * fy * iz2;
    d_cam[2] += -g_j[0][0] * fx * iz2 + g_j[0][2] * two * fx * xc * iz3 - g_j[1][1] * fy * iz2
        + g_j[1][2] * two * fy * yc * iz3;
    match clamped[0] {
        None => d_cam[0] += d_xc,
        Some(slope) => d_cam[2] += d_xc * slope,
    }
    match clamped[1] {
        None => d_cam[1] += d_yc,
        Some(slope) => d_cam[2] += d_yc * slope,
    }
    out.position = mat3_tvec(w, d_cam);

    // Colour -> SH coefficients and view direction.
    let raw = cache.colors_raw[i];
    let d_color: [T; 3] = std::array::from_fn(|ch| if raw[ch] < z0 { z0 } else { sg.color[ch] });
    let d_dir = eval_sh_backward(
        &cloud.sh_rest[i],
        config.sh_degree,
        cache.view_dirs[i],
        d_color,
        &mut out.dc,
        &mut out.rest,
    );
    let dist = cache.view_dists[i];
    if dist > z0 {
        let dir = cache.view_dirs[i];
        let radial = dir[0] * d_dir[0] + dir[1] * d_dir[1] + dir[2] * d_dir[2];
        for a in 0..3 {
            out.position[a] += (d_dir[a] - dir[a] * radial) / dist;
        }
    }

    // Σ = M Mᵀ, M = R diag(s).
    let q = cloud.rotations[i];
    let qn = quat_norm(q);
    let qhat = q.map(|c| c / qn);
    let r = quat_to_mat(qhat);
    let s = cloud.log_scales[i].map(|v| v.exp());
    let mut g_m: Mat3<T> = [[z0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let mut acc = z0;
            for c in 0..3 {
                acc += (g_sigma[a][c] + g_sigma[c][a]) * r[c][b] * s[b];
            }
            g_m[a][b] = acc;
        }
    }
    let mut g_r: Mat3<T> = [[z0; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            g_r[a][b] = g_m[a][b] * s[b];
            out.log_scale[b] += g_m[a][b] * r[a][b] * s[b];
        }
    }
    let g_qhat = quat_to_mat_vjp(qhat, &g_r);
    let dot = (0..4).map(|k| qhat[k] * g_qhat[k]).fold(z0, |a, b| a + b);
    for k in 0..4 {
        out.rotation[k] = (g_qhat[k] - qhat[k] * dot) / qn;
    }

    let o = cache.opacities[i];
    out.raw_opacity = sg.opacity * o * (T::one() - o);

    let half_w = T::lit(camera.width as f64 * 0.5);
    let half_h = T::lit(camera.height as f64 * 0.5);
    out.screen_norm = ((gm[0] * half_w).powi(2) + (gm[1] * half_h).powi(2)).sqrt();
    out
}

/// Analytic gradients of a scalar loss given `∂L/∂color` for the rendered
/// colour plane.
pub fn backward<T: Real>(
    cloud: &GaussianCloud<T>,
    camera: &RenderCamera<T>,
    config: &RenderConfig<T>,
    output: &RenderOutput<T>,
    d_color: &Image<T>,
) -> Result<CloudGradients<T>> {
    let cache = &output.cache;
    if d_color.width != cache.width || d_color.height != cache.height || d_color.channels != 3 {
        return Err(Error::DimensionMismatch(format!(
            "loss gradient {}x{}x{} for a {}x{} render",
            d_color.width, d_color.height, d_color.channels, cache.width, cache.height
        )));
    }
    if cache.projections.len() != cloud.len() {
        return Err(Error::ShapeMismatch(format!(
            "render of {} gaussians, cloud has {}",
            cache.projections.len(),
            cloud.len()
        )));
    }
    let tiles = cache.tiles_x * cache.tiles_y;
    let per_tile: Vec<Vec<ScreenGrad<T>>> = if config.parallel {
        (0..tiles)
            .into_par_iter()
            .map(|t| tile_gradients(cache, config, t, d_color))
            .collect()
    } else {
        (0..tiles)
            .map(|t| tile_gradients(cache, config, t, d_color))
            .collect()
    };
    // Deterministic reduction: tile order, then depth order within a tile.
    let mut screen = vec![ScreenGrad::zero(); cloud.len()];
    for (tile, grads) in per_tile.iter().enumerate() {
        for (g, local) in cache.tile_list(tile).iter().zip(grads) {
            screen[*g as usize].add(local);
        }
    }

    let chain = |i: usize| chain_gaussian(cloud, camera, config, cache, i, &screen[i]);
    let per_gaussian: Vec<ParamGrad<T>> = if config.parallel {
        (0..cloud.len()).into_par_iter().map(chain).collect()
    } else {
        (0..cloud.len()).map(chain).collect()
    };

    let mut params = GaussianCloud::zeros(cloud.len());
    params.sh_degree = cloud.sh_degree;
    let mut screen_grad_norms = Vec::with_capacity(cloud.len());
    for (i, g) in per_gaussian.into_iter().enumerate() {
        let finite = g.position.iter().all(|v| v.is_finite())
            && g.log_scale.iter().all(|v| v.is_finite())
            && g.rotation.iter().all(|v| v.is_finite())
            && g.raw_opacity.is_finite()
            && g.dc.iter().all(|v| v.is_finite())
            && g.rest.iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NonFiniteGradient { index: i });
        }
        params.positions[i] = g.position;
        params.log_scales[i] = g.log_scale;
        params.rotations[i] = g.rotation;
        params.raw_opacities[i] = g.raw_opacity;
        params.sh_dc[i] = g.dc;
        params.sh_rest[i] = g.rest;
        screen_grad_norms.push(g.screen_norm);
    }
    Ok(CloudGradients {
        params,
        screen_grad_norms,
        visible: output.visible.clone(),
    })
}
