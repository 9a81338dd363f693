use rand::Rng;
use rand_distr::StandardNormal;

use super::config::TrainConfig;
use super::train::TrainState;
use crate::math::{logit, mat3_vec, sigmoid, Real};
use crate::model::{rotation_matrix, GaussianCloud};

/// Activated opacity ceiling applied by [`reset_opacity`].
pub const OPACITY_RESET_CEILING: f64 = 0.01;
/// Scale divisor for the two children of a split.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DensifyReport {
    pub before: usize,
    pub cloned: usize,
    pub split: usize,
    pub pruned: usize,
    pub after: usize,
}

/// Clones small and splits large high-gradient Gaussians, then prunes
/// transparent ones. Output order is survivors, clones, split children.
/// Accumulators are reset and new optimizer moments start at zero.
pub fn densify_and_prune<T: Real, R: Rng>(
    state: &mut TrainState<T>,
    config: &TrainConfig,
    rng: &mut R,
) -> DensifyReport {
    let cloud = &state.cloud;
    let n = cloud.len();
    let split_threshold = config.percent_dense * state.scene_extent;
    let mut report = DensifyReport {
        before: n,
        ..DensifyReport::default()
    };

    let mut keep = vec![true; n];
    let mut clones: GaussianCloud<T> = GaussianCloud::with_capacity(0);
    let mut children: GaussianCloud<T> = GaussianCloud::with_capacity(0);
    for i in 0..n {
        let count = state.grad_count[i];
        if count == 0 || state.grad_accum[i] / count as f64 <= config.densify_grad_threshold {
            continue;
        }
        let scale = cloud.scale(i).map(|s| s.as_f64());
        let max_scale = scale.iter().cloned().fold(0.0, f64::max);
        let mut s = cloud.splat(i);
        if max_scale <= split_threshold {
            let g = state.pos_grad_accum[i];
            let gn = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
            if gn > 0.0 {
                let step = 0.5 * max_scale / gn;
                for k in 0..3 {
                    s.position[k] -= T::lit(step * g[k]);
                }
            }
            clones.push(s);
            report.cloned += 1;
        } else {
            let r = match rotation_matrix(s.rotation) {
                Ok(r) => r.map(|row| row.map(|v| v.as_f64())),
                Err(_) => continue,
            };
            let parent = s.position;
            for _ in 0..2 {
                let z: [f64; 3] =
                    std::array::from_fn(|k| rng.sample::<f64, _>(StandardNormal) * scale[k]);
                let offset = mat3_vec(&r, z);
                s.position = std::array::from_fn(|k| parent[k] + T::lit(offset[k]));
                s.log_scale = scale.map(|v| T::lit((v / SPLIT_SCALE_DIVISOR).ln()));
                children.push(s);
            }
            keep[i] = false;
            report.split += 1;
        }
    }

    let prune = T::lit(config.prune_opacity);
    let survivors: Vec<usize> = (0..n)
        .filter(|&i| keep[i] && cloud.opacity(i) >= prune)
        .collect();
    let mut next = select(cloud, &survivors);
    let mut added = 0;
    for extra in [&clones, &children] {
        for j in 0..extra.len() {
            if extra.opacity(j) >= prune {
                next.push(extra.splat(j));
                added += 1;
            }
        }
    }
    report.pruned = n - report.split - survivors.len() + (clones.len() + children.len() - added);
    report.after = next.len();

    let grow = |m: &GaussianCloud<T>| {
        let mut m = select(m, &survivors);
        let zero = GaussianCloud::<T>::zeros(1).splat(0);
        for _ in 0..added {
            m.push(zero);
        }
        m
    };
    state.adam.first = grow(&state.adam.first);
    state.adam.second = grow(&state.adam.second);
    state.cloud = next;
    state.reset_accumulators();
    report
}

fn select<T: Real>(cloud: &GaussianCloud<T>, indices: &[usize]) -> GaussianCloud<T> {
    let mut out = GaussianCloud::with_capacity(indices.len());
    out.sh_degree = cloud.sh_degree;
    for &i in indices {
        out.push(cloud.splat(i));
    }
    out
}

/// Clamps every activated opacity to at most [`OPACITY_RESET_CEILING`] and
/// clears the opacity moments.
pub fn reset_opacity<T: Real>(state: &mut TrainState<T>) {
    let ceiling = T::lit(OPACITY_RESET_CEILING);
    let target = logit(ceiling);
    for raw in &mut state.cloud.raw_opacities {
        if sigmoid(*raw) > ceiling {
            *raw = target;
            // Rounding can leave the logit a hair above the ceiling.
            while sigmoid(*raw) > ceiling {
                *raw = *raw - T::epsilon().max(raw.abs() * T::epsilon());
            }
        }
    }
    state.adam.first.raw_opacities.fill(T::zero());
    state.adam.second.raw_opacities.fill(T::zero());
}
