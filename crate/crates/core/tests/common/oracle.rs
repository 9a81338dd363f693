use splatwalk_core::raster::{ALPHA_MAX, CUTOFF_SIGMA};
use splatwalk_core::{Image, RenderCamera, RenderConfig, RenderOutput};

/// Brute-force front-to-back compositing: every pixel walks all visible
/// Gaussians in (depth, index) order with no tiling.
pub fn oracle(out: &RenderOutput<f64>, camera: &RenderCamera<f64>, cfg: &RenderConfig<f64>) -> Image<f64> {
    let projections = out.projections();
    let opacities = out.opacities();
    let colors = out.gaussian_colors();
    let mut order: Vec<usize> = (0..projections.len()).filter(|&g| projections[g].visible).collect();
    order.sort_by(|&a, &b| {
        projections[a]
            .depth
            .partial_cmp(&projections[b].depth)
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut img = Image::new(camera.width, camera.height, 3);
    for y in 0..camera.height {
        for x in 0..camera.width {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut t = 1.0;
            let mut c = [0.0; 3];
            for &g in &order {
                let p = &projections[g];
                let dx = px - p.mean2d[0];
                let dy = py - p.mean2d[1];
                let power = -0.5 * (p.conic[0][0] * dx * dx + p.conic[1][1] * dy * dy)
                    - p.conic[0][1] * dx * dy;
                if power < -0.5 * CUTOFF_SIGMA * CUTOFF_SIGMA {
                    continue;
                }
                let alpha = (opacities[g] * power.exp()).min(ALPHA_MAX);
                if alpha < cfg.alpha_floor {
                    continue;
                }
                let t_next = t * (1.0 - alpha);
                if t_next < cfg.transmittance_floor {
                    break;
                }
                for ch in 0..3 {
                    c[ch] += colors[g][ch] * (alpha * t);
                }
                t = t_next;
            }
            let px = img.pixel_mut(x, y);
            for ch in 0..3 {
                px[ch] = (c[ch] + t * cfg.background[ch]).clamp(0.0, 1.0);
            }
        }
    }
    img
}
