mod common;

use common::gradcheck::{analytic, cam, cfg, max_relative_error, numeric, scene};
use splatwalk_core::raster::render;

#[test]
fn gradients_match_finite_differences_f64() {
    for seed in 0..3 {
        let (cloud, target) = scene(seed);
        let n = numeric(&cloud, &target, 1e-4);
        let (err, at) = max_relative_error(&analytic(&cloud, &target), &n);
        println!("seed {seed} f64 max relative error {err:e} ({at})");
        assert!(err < 1e-5, "seed {seed}: {err:e} at {at}");
    }
}

#[test]
fn gradients_match_finite_differences_f32() {
    for seed in 0..3 {
        let (cloud, target) = scene(seed);
        let n = numeric(&cloud, &target, 1e-4);
        let (err, at) = max_relative_error(&analytic(&cloud.cast::<f32>(), &target.cast()), &n);
        println!("seed {seed} f32 max relative error {err:e} ({at})");
        assert!(err < 1e-3, "seed {seed}: {err:e} at {at}");
    }
}

#[test]
fn scenes_avoid_discontinuities() {
    for seed in 0..3 {
        let (cloud, target) = scene(seed);
        let out = render(&cloud, &cam(), &cfg()).unwrap();
        assert!(out.projections().iter().all(|p| p.visible));
        assert!(out.raw_color().data.iter().all(|&v| v > 0.0 && v < 1.0));
        // Keep the L1 kink out of reach of the stencil.
        let gap = out
            .color
            .data
            .iter()
            .zip(&target.data)
            .map(|(r, t)| (r - t).abs())
            .fold(f64::INFINITY, f64::min);
        assert!(gap > 1e-2, "seed {seed}: pixel within {gap:e} of target");
    }
}
