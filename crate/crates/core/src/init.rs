//! Conversion of a sparse SfM point cloud into initial Gaussians.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{logit, Real};
use crate::model::{GaussianCloud, Splat, SH_REST_LEN};
use crate::sfm::SfmScene;
use crate::sh::SH_C0;

#[derive(Clone, Debug, PartialEq)]
pub struct InitConfig {
    pub knn_count: usize,
    pub initial_opacity: f64,
    /// Metres; lower bound on the initial isotropic scale.
    pub min_scale_floor: f64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            knn_count: 3,
            initial_opacity: 0.1,
            min_scale_floor: 1e-7,
        }
    }
}

impl InitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.knn_count < 1 {
            return Err(Error::domain("knn_count must be at least 1"));
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return Err(Error::domain(format!(
                "initial opacity {} outside (0, 1)",
                self.initial_opacity
            )));
        }
        if !(self.min_scale_floor > 0.0) {
            return Err(Error::domain("min_scale_floor must be positive"));
        }
        Ok(())
    }
}

/// Degree-0 SH coefficients reproducing an 8-bit colour.
pub fn rgb_to_dc(color: [f64; 3]) -> [f64; 3] {
    color.map(|c| (c / 255.0 - 0.5) / SH_C0)
}

/// Inverse of [`rgb_to_dc`], in 0–255 units (not rounded).
pub fn dc_to_rgb(dc: [f64; 3]) -> [f64; 3] {
    dc.map(|d| (d * SH_C0 + 0.5) * 255.0)
}

/// Above this many points the neighbour search switches to a uniform grid.
pub const BRUTE_FORCE_LIMIT: usize = 200_000;

/// Mean distance from each point to its `k` nearest other points.
pub fn mean_knn_distances(points: &[[f64; 3]], k: usize) -> Vec<f64> {
    if points.len() > BRUTE_FORCE_LIMIT {
        knn_grid(points, k)
    } else {
        knn_brute_force(points, k)
    }
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

/// Inserts `d` into the ascending `best` list of at most `k` entries.
fn push_best(best: &mut Vec<f64>, k: usize, d: f64) {
    if best.len() == k && d >= best[k - 1] {
        return;
    }
    let at = best.partition_point(|&b| b <= d);
    best.insert(at, d);
    best.truncate(k);
}

fn mean_sqrt(best: &[f64]) -> f64 {
    best.iter().map(|d| d.sqrt()).sum::<f64>() / best.len() as f64
}

pub(crate) fn knn_brute_force(points: &[[f64; 3]], k: usize) -> Vec<f64> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = Vec::with_capacity(k + 1);
            for (j, q) in points.iter().enumerate() {
                if i != j {
                    push_best(&mut best, k, dist2(p, q));
                }
            }
            mean_sqrt(&best)
        })
        .collect()
}

pub(crate) fn knn_grid(points: &[[f64; 3]], k: usize) -> Vec<f64> {
    let n = points.len();
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in points {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    let extent: Vec<f64> = (0..3).map(|a| (hi[a] - lo[a]).max(1e-12)).collect();
    // About k points per occupied cell for a uniformly filled box.
    let volume: f64 = extent.iter().product();
    let cell = (volume * (k.max(1) as f64) / n as f64).cbrt().max(1e-9);
    let dims: Vec<i64> = extent
        .iter()
        .map(|e| ((e / cell).floor() as i64 + 1).clamp(1, 1 << 20))
        .collect();
    let coord = |p: &[f64; 3]| -> [i64; 3] {
        let mut c = [0i64; 3];
        for a in 0..3 {
            c[a] = (((p[a] - lo[a]) / cell).floor() as i64).clamp(0, dims[a] - 1);
        }
        c
    };
    let mut cells: std::collections::HashMap<[i64; 3], Vec<usize>> = Default::default();
    for (i, p) in points.iter().enumerate() {
        cells.entry(coord(p)).or_default().push(i);
    }
    let max_ring = dims.iter().copied().max().unwrap_or(1);
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let c = coord(p);
            let mut best = Vec::with_capacity(k + 1);
            let mut ring = 0i64;
            loop {
                // Visit the shell of cells at Chebyshev distance `ring`.
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        for dz in -ring..=ring {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                                continue;
                            }
                            let key = [c[0] + dx, c[1] + dy, c[2] + dz];
                            if let Some(members) = cells.get(&key) {
                                for &j in members {
                                    if j != i {
                                        push_best(&mut best, k, dist2(p, &points[j]));
                                    }
                                }
                            }
                        }
                    }
                }
                // Every unvisited point is at least `ring * cell` away.
                let covered = ring as f64 * cell;
                if (best.len() == k && best[k - 1] <= covered * covered) || ring > max_ring {
                    break;
                }
                ring += 1;
            }
            mean_sqrt(&best)
        })
        .collect()
}

/// One Gaussian per SfM point: isotropic scale from neighbour spacing,
/// identity rotation, uniform opacity and degree-0 colour.
pub fn init_gaussians<T: Real>(scene: &SfmScene, config: &InitConfig) -> Result<GaussianCloud<T>> {
    config.validate()?;
    if scene.points.is_empty() {
        return Err(Error::domain("cannot initialize from an empty point cloud"));
    }
    let positions: Vec<[f64; 3]> = scene.points.iter().map(|p| p.position).collect();
    let scales = if positions.len() < config.knn_count + 1 {
        log::warn!(
            "only {} points for knn_count {}; using the minimum scale floor",
            positions.len(),
            config.knn_count
        );
        vec![config.min_scale_floor; positions.len()]
    } else {
        mean_knn_distances(&positions, config.knn_count)
    };
    let raw_opacity = T::lit(logit(config.initial_opacity));
    let mut cloud = GaussianCloud::with_capacity(positions.len());
    for (p, s) in scene.points.iter().zip(scales) {
        let log_scale = T::lit(s.max(config.min_scale_floor).ln());
        let color = p.color.map(f64::from);
        cloud.push(Splat {
            position: p.position.map(T::lit),
            log_scale: [log_scale; 3],
            rotation: [T::one(), T::zero(), T::zero(), T::zero()],
            raw_opacity,
            sh_dc: rgb_to_dc(color).map(T::lit),
            sh_rest: [T::zero(); SH_REST_LEN],
        });
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sfm::SfmPoint;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scene(points: &[[f64; 3]]) -> SfmScene {
        SfmScene {
            points: points
                .iter()
                .enumerate()
                .map(|(i, &position)| SfmPoint {
                    id: i as u64,
                    position,
                    color: [(i * 40 % 256) as u8, 128, 7],
                    error: 0.0,
                    observations: 2,
                })
                .collect(),
            ..Default::default()
        }
    }

    #[test]
    fn rgb_to_dc_examples() {
        let g = rgb_to_dc([128.0; 3]);
        assert!((g[0] - 0.00696).abs() < 1e-5);
        assert_eq!(rgb_to_dc([127.5; 3]), [0.0; 3]);
        let r = rgb_to_dc([255.0, 0.0, 0.0]);
        assert!((r[0] - 1.77245).abs() < 1e-5 && (r[1] + 1.77245).abs() < 1e-5);
    }

    #[test]
    fn rgb_round_trip() {
        for c in 0..=255 {
            let back = dc_to_rgb(rgb_to_dc([c as f64; 3]));
            assert!((back[0] - c as f64).abs() < 1e-6);
        }
    }

    #[test]
    fn single_point_uses_floor() {
        let cfg = InitConfig::default();
        let cloud: GaussianCloud<f64> = init_gaussians(&scene(&[[1.0, 2.0, 3.0]]), &cfg).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(cloud.positions[0], [1.0, 2.0, 3.0]);
        assert_eq!(cloud.log_scales[0], [(1e-7f64).ln(); 3]);
    }

    #[test]
    fn unit_square_scales() {
        let pts = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]];
        let cloud: GaussianCloud<f64> = init_gaussians(&scene(&pts), &InitConfig::default()).unwrap();
        for s in &cloud.log_scales {
            assert!((s[0] - 0.129335).abs() < 1e-6);
            assert_eq!(s[0], s[1]);
            assert_eq!(s[1], s[2]);
        }
        let mean = (2.0 + 2f64.sqrt()) / 3.0;
        assert!((mean - 1.13807).abs() < 1e-5);
        assert!((cloud.log_scales[0][0] - mean.ln()).abs() < 1e-12);
    }

    #[test]
    fn fixed_initial_state() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts: Vec<[f64; 3]> = (0..50)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let cloud: GaussianCloud<f32> = init_gaussians(&scene(&pts), &InitConfig::default()).unwrap();
        assert_eq!(cloud.len(), 50);
        let raw = logit(0.1f64) as f32;
        assert!(cloud.rotations.iter().all(|q| *q == [1.0, 0.0, 0.0, 0.0]));
        assert!(cloud.raw_opacities.iter().all(|&o| o == raw));
        assert!(cloud.sh_rest.iter().all(|r| r.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn permutation_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pts: Vec<[f64; 3]> = (0..40)
            .map(|_| [rng.random(), rng.random(), rng.random()])
            .collect();
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rng);
        let base = scene(&pts);
        let mut shuffled = base.clone();
        shuffled.points = perm.iter().map(|&i| base.points[i].clone()).collect();
        let a: GaussianCloud<f64> = init_gaussians(&base, &InitConfig::default()).unwrap();
        let b: GaussianCloud<f64> = init_gaussians(&shuffled, &InitConfig::default()).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            assert_eq!(b.splat(k), a.splat(i));
        }
    }

    #[test]
    fn grid_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mut pts: Vec<[f64; 3]> = (0..2000)
            .map(|_| [rng.random_range(-5.0..5.0), rng.random_range(-1.0..1.0), rng.random::<f64>() * 0.1])
            .collect();
        // Clustered duplicates and an outlier.
        pts.push(pts[0]);
        pts.push([100.0, 100.0, 100.0]);
        for k in [1, 3, 8] {
            let a = knn_brute_force(&pts, k);
            let b = knn_grid(&pts, k);
            for (x, y) in a.iter().zip(&b) {
                assert!((x - y).abs() <= 1e-12 * x.max(1.0), "k={k}: {x} vs {y}");
            }
        }
    }

    #[test]
    fn rejects_empty_scene() {
        assert!(init_gaussians::<f32>(&SfmScene::default(), &InitConfig::default()).is_err());
    }
}
