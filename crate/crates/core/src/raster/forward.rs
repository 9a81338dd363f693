use rayon::prelude::*;

use super::project::project_with;
use super::{
    Projection, RenderCamera, RenderConfig, RenderOutput, ALPHA_MAX, CUTOFF_SIGMA,
};
use crate::error::Result;
use crate::image::Image;
use crate::math::{norm3, sub3, Real, Vec3};
use crate::model::{activate_opacity, GaussianCloud};
use crate::sh::eval_sh_unclamped;

/// Everything the backward pass needs from the forward pass.
#[derive(Clone, Debug)]
pub(crate) struct RenderCache<T> {
    pub projections: Vec<Projection<T>>,
    pub opacities: Vec<T>,
    /// SH colour before the `≥ 0` clamp.
    pub colors_raw: Vec<[T; 3]>,
    /// Unit direction from the camera centre to each mean.
    pub view_dirs: Vec<Vec3<T>>,
    pub view_dists: Vec<T>,
    pub tiles_x: usize,
    pub tiles_y: usize,
    pub tile_size: usize,
    /// `tile_ranges[t]` indexes into `sorted`.
    pub tile_ranges: Vec<(usize, usize)>,
    pub sorted: Vec<u32>,
    pub raw_color: Image<T>,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> RenderCache<T> {
    pub fn tile_list(&self, tile: usize) -> &[u32] {
        let (a, b) = self.tile_ranges[tile];
        &self.sorted[a..b]
    }

    /// Pixel rectangle `[x0, x1) × [y0, y1)` of a tile.
    pub fn tile_rect(&self, tile: usize) -> (usize, usize, usize, usize) {
        let (tx, ty) = (tile % self.tiles_x, tile / self.tiles_x);
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (
            x0,
            (x0 + self.tile_size).min(self.width),
            y0,
            (y0 + self.tile_size).min(self.height),
        )
    }

    #[inline]
    pub fn color(&self, g: usize) -> [T; 3] {
        self.colors_raw[g].map(|c| c.max(T::zero()))
    }
}

/// Exponent of the screen-space Gaussian at a pixel centre, `-½ dᵀ Σ⁻¹ d`,
/// together with the offset `d = pixel − mean`.
#[inline]
pub(crate) fn gaussian_power<T: Real>(p: &Projection<T>, px: T, py: T) -> (T, T, T) {
    let dx = px - p.mean2d[0];
    let dy = py - p.mean2d[1];
    let a = p.conic[0][0];
    let b = p.conic[0][1];
    let c = p.conic[1][1];
    let power = -T::lit(0.5) * (a * dx * dx + c * dy * dy) - b * dx * dy;
    (power, dx, dy)
}

/// One compositing step. Returns `(alpha, unclamped)` or `None` if the
/// Gaussian does not contribute at this pixel.
#[inline]
pub(crate) fn pixel_alpha<T: Real>(power: T, opacity: T, alpha_floor: T) -> Option<(T, bool)> {
    let cutoff = -T::lit(0.5 * CUTOFF_SIGMA * CUTOFF_SIGMA);
    if power < cutoff {
        return None;
    }
    let raw = opacity * power.exp();
    let max = T::lit(ALPHA_MAX);
    let (alpha, free) = if raw > max { (max, false) } else { (raw, true) };
    if alpha < alpha_floor {
        return None;
    }
    Some((alpha, free))
}

struct TileBlock<T> {
    raw: Vec<T>,
    depth: Vec<T>,
    acc: Vec<T>,
}

fn composite_tile<T: Real>(
    cache: &RenderCache<T>,
    config: &RenderConfig<T>,
    tile: usize,
) -> TileBlock<T> {
    let (x0, x1, y0, y1) = cache.tile_rect(tile);
    let list = cache.tile_list(tile);
    let n = (x1 - x0) * (y1 - y0);
    let mut block = TileBlock {
        raw: Vec::with_capacity(n * 3),
        depth: Vec::with_capacity(n),
        acc: Vec::with_capacity(n),
    };
    let half = T::lit(0.5);
    for y in y0..y1 {
        for x in x0..x1 {
            let (px, py) = (T::lit(x as f64) + half, T::lit(y as f64) + half);
            let mut t = T::one();
            let mut c = [T::zero(); 3];
            let mut d = T::zero();
            for &g in list {
                let g = g as usize;
                let p = &cache.projections[g];
                let (power, _, _) = gaussian_power(p, px, py);
                let Some((alpha, _)) = pixel_alpha(power, cache.opacities[g], config.alpha_floor)
                else {
                    continue;
                };
                let t_next = t * (T::one() - alpha);
                if t_next < config.transmittance_floor {
                    break;
                }
                let w = alpha * t;
                let col = cache.color(g);
                for ch in 0..3 {
                    c[ch] += col[ch] * w;
                }
                d += p.depth * w;
                t = t_next;
            }
            for ch in 0..3 {
                block.raw.push(c[ch] + t * config.background[ch]);
            }
            let acc = T::one() - t;
            block.acc.push(acc);
            block.depth.push(if acc > T::zero() { d / acc } else { T::zero() });
        }
    }
    block
}

pub(crate) fn build_cache<T: Real>(
    cloud: &GaussianCloud<T>,
    camera: &RenderCamera<T>,
    config: &RenderConfig<T>,
) -> RenderCache<T> {
    let (w, h) = (camera.width, camera.height);
    let ts = config.tile_size;
    let projections = project_with(cloud, camera, config.parallel);
    let center = camera.center();
    let n = cloud.len();
    let mut opacities = Vec::with_capacity(n);
    let mut colors_raw = Vec::with_capacity(n);
    let mut view_dirs = Vec::with_capacity(n);
    let mut view_dists = Vec::with_capacity(n);
    for i in 0..n {
        opacities.push(activate_opacity(cloud.raw_opacities[i]));
        let v = sub3(cloud.positions[i], center);
        let dist = norm3(v);
        let dir = if dist > T::zero() {
            v.map(|c| c / dist)
        } else {
            [T::zero(), T::zero(), T::one()]
        };
        colors_raw.push(eval_sh_unclamped(
            &cloud.sh_dc[i],
            &cloud.sh_rest[i],
            config.sh_degree,
            dir,
        ));
        view_dirs.push(dir);
        view_dists.push(dist);
    }

    let tiles_x = w.div_ceil(ts);
    let tiles_y = h.div_ceil(ts);
    let mut keys: Vec<(u32, T, u32)> = Vec::new();
    for (g, p) in projections.iter().enumerate() {
        if !p.visible {
            continue;
        }
        let Some([x0, y0, x1, y1]) = p.pixel_bounds(w, h) else {
            continue;
        };
        for ty in y0 / ts..=y1 / ts {
            for tx in x0 / ts..=x1 / ts {
                keys.push(((ty * tiles_x + tx) as u32, p.depth, g as u32));
            }
        }
    }
    // Keys are unique, so the order is canonical regardless of input order.
    keys.sort_unstable_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).expect("finite depth"))
            .then(a.2.cmp(&b.2))
    });
    let mut tile_ranges = vec![(0usize, 0usize); tiles_x * tiles_y];
    let mut start = 0;
    while start < keys.len() {
        let tile = keys[start].0;
        let mut end = start;
        while end < keys.len() && keys[end].0 == tile {
            end += 1;
        }
        tile_ranges[tile as usize] = (start, end);
        start = end;
    }
    let sorted = keys.into_iter().map(|k| k.2).collect();
    RenderCache {
        projections,
        opacities,
        colors_raw,
        view_dirs,
        view_dists,
        tiles_x,
        tiles_y,
        tile_size: ts,
        tile_ranges,
        sorted,
        raw_color: Image::new(0, 0, 3),
        width: w,
        height: h,
    }
}

/// Rasterizes the cloud from `camera`. All three planes are always
/// produced; `config.mode` only selects which one [`RenderOutput::plane`]
/// and the CLI treat as primary.
pub fn render<T: Real>(
    cloud: &GaussianCloud<T>,
    camera: &RenderCamera<T>,
    config: &RenderConfig<T>,
) -> Result<RenderOutput<T>> {
    camera.validate()?;
    config.validate()?;
    cloud.check_consistent()?;
    let mut cache = build_cache(cloud, camera, config);
    let (w, h) = (camera.width, camera.height);
    let tiles = cache.tiles_x * cache.tiles_y;
    let blocks: Vec<TileBlock<T>> = if config.parallel {
        (0..tiles)
            .into_par_iter()
            .map(|t| composite_tile(&cache, config, t))
            .collect()
    } else {
        (0..tiles).map(|t| composite_tile(&cache, config, t)).collect()
    };

    let mut raw = Image::new(w, h, 3);
    let mut depth = Image::new(w, h, 1);
    let mut accumulation = Image::new(w, h, 1);
    for (tile, block) in blocks.iter().enumerate() {
        let (x0, x1, y0, y1) = cache.tile_rect(tile);
        let tw = x1 - x0;
        for y in y0..y1 {
            let row = (y - y0) * tw;
            let dst = raw.index(x0, y);
            raw.data[dst..dst + 3 * tw].copy_from_slice(&block.raw[3 * row..3 * (row + tw)]);
            let dst = y * w + x0;
            depth.data[dst..dst + tw].copy_from_slice(&block.depth[row..row + tw]);
            accumulation.data[dst..dst + tw].copy_from_slice(&block.acc[row..row + tw]);
        }
    }
    let mut color = raw.clone();
    for v in color.data.iter_mut() {
        *v = v.max(T::zero()).min(T::one());
    }
    let visible = cache.projections.iter().map(|p| p.visible).collect();
    cache.raw_color = raw;
    Ok(RenderOutput {
        color,
        depth,
        accumulation,
        visible,
        cache,
    })
}
