use super::{camera, random_cloud, CloudSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use splatwalk_core::optim::loss;
use splatwalk_core::raster::{backward, render};
use splatwalk_core::{GaussianCloud, Image, Real, RenderCamera, RenderConfig};

pub const LAMBDA: f64 = 0.2;

/// Five large, well-separated Gaussians over a 16×16 image, chosen so no
/// pixel sits near the alpha floor, the cutoff, the 0.99 clamp or a depth
/// swap under small perturbations.
pub fn scene(seed: u64) -> (GaussianCloud<f64>, Image<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = CloudSpec {
        xy: 0.3,
        depth: (3.0, 3.1),
        log_scale: (0.4, 0.8),
        opacity: (0.3, 0.7),
        sh_rest: 0.05,
    };
    let mut cloud: GaussianCloud<f64> = random_cloud(&mut rng, 5, &spec);
    for (i, p) in cloud.positions.iter_mut().enumerate() {
        p[2] = 3.0 + 0.7 * i as f64;
    }
    for dc in &mut cloud.sh_dc {
        *dc = std::array::from_fn(|_| rng.random_range(-0.6..0.6));
    }
    // Target offset from the render by at least 0.05 per sample, so the L1
    // kink stays far from every probe.
    let mut target = render(&cloud, &cam(), &cfg()).unwrap().color;
    for v in &mut target.data {
        let d = rng.random_range(0.05..0.3);
        *v = if (*v + d <= 1.0 && rng.random()) || *v - d < 0.0 { *v + d } else { *v - d };
    }
    (cloud, target)
}

pub fn cam<T: Real>() -> RenderCamera<T> {
    camera(16, 16, 16.0)
}

pub fn cfg<T: Real>() -> RenderConfig<T> {
    RenderConfig {
        parallel: false,
        ..RenderConfig::default()
    }
}

pub fn loss_at(cloud: &GaussianCloud<f64>, target: &Image<f64>) -> f64 {
    let out = render(cloud, &cam(), &cfg()).unwrap();
    loss(&out.color, target, LAMBDA).unwrap().total
}

pub fn analytic<T: Real>(cloud: &GaussianCloud<T>, target: &Image<T>) -> GaussianCloud<T> {
    let out = render(cloud, &cam(), &cfg()).unwrap();
    let l = loss(&out.color, target, T::lit(LAMBDA)).unwrap();
    backward(cloud, &cam(), &cfg(), &out, &l.grad).unwrap().params
}

/// Five-point central differences in 64-bit for every learnable scalar.
pub fn numeric(cloud: &GaussianCloud<f64>, target: &Image<f64>, eps: f64) -> GaussianCloud<f64> {
    let mut grad = GaussianCloud::zeros(cloud.len());
    let mut probe = cloud.clone();
    for a in 0..6 {
        for k in 0..cloud.flat()[a].len() {
            let x = cloud.flat()[a][k];
            let mut at = |h: f64| {
                probe.flat_mut()[a][k] = x + h;
                loss_at(&probe, target)
            };
            let d = 8.0 * (at(eps) - at(-eps)) - (at(2.0 * eps) - at(-2.0 * eps));
            probe.flat_mut()[a][k] = x;
            grad.flat_mut()[a][k] = d / (12.0 * eps);
        }
    }
    grad
}

/// Largest `|a − n| / max(|a|, |n|, floor)` with `floor` 1e-3 of the
/// largest gradient magnitude.
pub fn max_relative_error<T: Real>(a: &GaussianCloud<T>, n: &GaussianCloud<f64>) -> (f64, String) {
    let scale = n.flat().iter().flat_map(|s| s.iter()).fold(0.0f64, |m, v| m.max(v.abs()));
    let floor = 1e-3 * scale;
    let names = ["position", "log_scale", "rotation", "opacity", "sh_dc", "sh_rest"];
    let mut worst = (0.0, String::new());
    for (arr, (sa, sn)) in a.flat().iter().zip(n.flat()).enumerate() {
        for (k, (x, y)) in sa.iter().zip(sn).enumerate() {
            let x = x.as_f64();
            let e = (x - y).abs() / x.abs().max(y.abs()).max(floor);
            if e > worst.0 {
                worst = (e, format!("{}[{k}]: analytic {x:e}, numeric {y:e}", names[arr]));
            }
        }
    }
    worst
}
