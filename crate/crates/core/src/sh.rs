//! Real spherical harmonics up to degree 3 for view-dependent colour.
//!
//! Basis ordering and signs follow the convention used by the common splat
//! PLY interchange, so coefficients read from third-party files evaluate to
//! the same colours.

use crate::error::Result;
use crate::math::{Real, Vec3};
use crate::model::{ShDegree, SH_REST_LEN, SH_REST_PER_CHANNEL};

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

/// Basis values for the first `degree.coefficients()` functions; the rest
/// are left at zero.
pub fn basis<T: Real>(degree: ShDegree, dir: Vec3<T>) -> [T; 16] {
    let mut b = [T::zero(); 16];
    let c = T::lit;
    let [x, y, z] = dir;
    b[0] = c(SH_C0);
    if degree.get() < 1 {
        return b;
    }
    b[1] = -c(SH_C1) * y;
    b[2] = c(SH_C1) * z;
    b[3] = -c(SH_C1) * x;
    if degree.get() < 2 {
        return b;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    b[4] = c(SH_C2[0]) * xy;
    b[5] = c(SH_C2[1]) * yz;
    b[6] = c(SH_C2[2]) * (c(2.0) * zz - xx - yy);
    b[7] = c(SH_C2[3]) * xz;
    b[8] = c(SH_C2[4]) * (xx - yy);
    if degree.get() < 3 {
        return b;
    }
    b[9] = c(SH_C3[0]) * y * (c(3.0) * xx - yy);
    b[10] = c(SH_C3[1]) * xy * z;
    b[11] = c(SH_C3[2]) * y * (c(4.0) * zz - xx - yy);
    b[12] = c(SH_C3[3]) * z * (c(2.0) * zz - c(3.0) * xx - c(3.0) * yy);
    b[13] = c(SH_C3[4]) * x * (c(4.0) * zz - xx - yy);
    b[14] = c(SH_C3[5]) * z * (xx - yy);
    b[15] = c(SH_C3[6]) * x * (xx - c(3.0) * yy);
    b
}

/// Partial derivatives of each basis polynomial with respect to the
/// (unnormalized) direction components.
pub fn basis_gradient<T: Real>(degree: ShDegree, dir: Vec3<T>) -> [Vec3<T>; 16] {
    let z0 = T::zero();
    let mut g = [[z0; 3]; 16];
    let c = T::lit;
    let [x, y, z] = dir;
    if degree.get() < 1 {
        return g;
    }
    g[1] = [z0, -c(SH_C1), z0];
    g[2] = [z0, z0, c(SH_C1)];
    g[3] = [-c(SH_C1), z0, z0];
    if degree.get() < 2 {
        return g;
    }
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let k = SH_C2.map(c);
    g[4] = [k[0] * y, k[0] * x, z0];
    g[5] = [z0, k[1] * z, k[1] * y];
    g[6] = [-c(2.0) * k[2] * x, -c(2.0) * k[2] * y, c(4.0) * k[2] * z];
    g[7] = [k[3] * z, z0, k[3] * x];
    g[8] = [c(2.0) * k[4] * x, -c(2.0) * k[4] * y, z0];
    if degree.get() < 3 {
        return g;
    }
    let k = SH_C3.map(c);
    g[9] = [c(6.0) * k[0] * xy, k[0] * (c(3.0) * xx - c(3.0) * yy), z0];
    g[10] = [k[1] * yz, k[1] * xz, k[1] * xy];
    g[11] = [
        -c(2.0) * k[2] * xy,
        k[2] * (c(4.0) * zz - xx - c(3.0) * yy),
        c(8.0) * k[2] * yz,
    ];
    g[12] = [
        -c(6.0) * k[3] * xz,
        -c(6.0) * k[3] * yz,
        k[3] * (c(6.0) * zz - c(3.0) * xx - c(3.0) * yy),
    ];
    g[13] = [
        k[4] * (c(4.0) * zz - c(3.0) * xx - yy),
        -c(2.0) * k[4] * xy,
        c(8.0) * k[4] * xz,
    ];
    g[14] = [c(2.0) * k[5] * xz, -c(2.0) * k[5] * yz, k[5] * (xx - yy)];
    g[15] = [k[6] * (c(3.0) * xx - c(3.0) * yy), -c(6.0) * k[6] * xy, z0];
    g
}

/// Colour before the non-negativity clamp: `0.5 + Σ basisᵢ·coeffᵢ` per channel.
pub fn eval_sh_unclamped<T: Real>(
    dc: &[T; 3],
    rest: &[T; SH_REST_LEN],
    degree: ShDegree,
    dir: Vec3<T>,
) -> [T; 3] {
    let b = basis(degree, dir);
    let n = degree.rest_per_channel();
    let mut out = [T::zero(); 3];
    for ch in 0..3 {
        let coeffs = &rest[ch * SH_REST_PER_CHANNEL..ch * SH_REST_PER_CHANNEL + n];
        let mut acc = b[0] * dc[ch];
        for (k, &cf) in coeffs.iter().enumerate() {
            acc += b[k + 1] * cf;
        }
        out[ch] = acc + T::lit(0.5);
    }
    out
}

/// View-dependent colour, clamped below at zero.
pub fn eval_sh<T: Real>(
    dc: &[T; 3],
    rest: &[T; SH_REST_LEN],
    degree: ShDegree,
    dir: Vec3<T>,
) -> Result<[T; 3]> {
    Ok(eval_sh_unclamped(dc, rest, degree, dir).map(|v| v.max(T::zero())))
}

/// Gradients of a scalar loss given `dL/dcolor` for the *unclamped* colour.
/// Accumulates into `d_dc` / `d_rest` and returns `dL/ddir` (unnormalized
/// direction components).
pub fn eval_sh_backward<T: Real>(
    rest: &[T; SH_REST_LEN],
    degree: ShDegree,
    dir: Vec3<T>,
    d_color: [T; 3],
    d_dc: &mut [T; 3],
    d_rest: &mut [T; SH_REST_LEN],
) -> Vec3<T> {
    let b = basis(degree, dir);
    let n = degree.rest_per_channel();
    for ch in 0..3 {
        d_dc[ch] += b[0] * d_color[ch];
        for k in 0..n {
            d_rest[ch * SH_REST_PER_CHANNEL + k] += b[k + 1] * d_color[ch];
        }
    }
    if degree.get() == 0 {
        return [T::zero(); 3];
    }
    let g = basis_gradient(degree, dir);
    let mut d_dir = [T::zero(); 3];
    for ch in 0..3 {
        for k in 0..n {
            let w = rest[ch * SH_REST_PER_CHANNEL + k] * d_color[ch];
            for a in 0..3 {
                d_dir[a] += g[k + 1][a] * w;
            }
        }
    }
    d_dir
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit(rng: &mut impl Rng) -> [f64; 3] {
        loop {
            let v = [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0f64),
            ];
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if n > 0.1 {
                return v.map(|c| c / n);
            }
        }
    }

    #[test]
    fn zero_coefficients_give_half_grey() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let c = eval_sh(&[0.0; 3], &[0.0; SH_REST_LEN], ShDegree::MAX, unit(&mut rng)).unwrap();
            assert_eq!(c, [0.5; 3]);
        }
    }

    #[test]
    fn degree_zero_red() {
        let a = 0.5 / SH_C0;
        let c = eval_sh(&[a, -a, -a], &[0.0; SH_REST_LEN], ShDegree::ZERO, [0.0, 0.0, 1.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-12);
        assert_eq!(c[1], 0.0);
        assert_eq!(c[2], 0.0);
        // 1.77245 as quoted (5 digits) lands within 1e-5 of the exact value.
        let c = eval_sh(&[1.77245f64, -1.77245, -1.77245], &[0.0; SH_REST_LEN], ShDegree::ZERO, [1.0, 0.0, 0.0]).unwrap();
        assert!((c[0] - 1.0).abs() < 1e-5 && c[1] < 1e-5 && c[2] < 1e-5);
    }

    #[test]
    fn degree_zero_is_view_independent() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut rest = [0.0; SH_REST_LEN];
        for v in rest.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let dc = [0.3, -0.2, 0.9];
        let first = eval_sh(&dc, &rest, ShDegree::ZERO, unit(&mut rng)).unwrap();
        for _ in 0..50 {
            assert_eq!(eval_sh(&dc, &rest, ShDegree::ZERO, unit(&mut rng)).unwrap(), first);
        }
    }

    #[test]
    fn degree_one_is_odd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rest = [0.0; SH_REST_LEN];
        rest[1] = 0.4; // R, basis index 2 (z)
        rest[15] = -0.3; // G, basis index 1 (y)
        rest[30 + 2] = 0.2; // B, basis index 3 (x)
        for deg in 1..=3 {
            let d = unit(&mut rng);
            let a = eval_sh_unclamped(&[0.0; 3], &rest, ShDegree::new(deg).unwrap(), d);
            let b = eval_sh_unclamped(&[0.0; 3], &rest, ShDegree::new(deg).unwrap(), d.map(|c| -c));
            for ch in 0..3 {
                assert!(((a[ch] - 0.5) + (b[ch] - 0.5)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rest = [0.0; SH_REST_LEN];
        for v in rest.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
        let dc = [0.1, 0.2, -0.3];
        let dir = [0.3, -0.5, 0.7];
        let w = [0.7, -1.1, 0.4];
        let f = |dir: [f64; 3]| -> f64 {
            let c = eval_sh_unclamped(&dc, &rest, ShDegree::MAX, dir);
            c[0] * w[0] + c[1] * w[1] + c[2] * w[2]
        };
        let mut d_dc = [0.0; 3];
        let mut d_rest = [0.0; SH_REST_LEN];
        let d_dir = eval_sh_backward(&rest, ShDegree::MAX, dir, w, &mut d_dc, &mut d_rest);
        for a in 0..3 {
            let (mut p, mut m) = (dir, dir);
            p[a] += 1e-6;
            m[a] -= 1e-6;
            let num = (f(p) - f(m)) / 2e-6;
            assert!((num - d_dir[a]).abs() < 1e-7, "axis {a}: {num} vs {}", d_dir[a]);
        }
        assert!((d_dc[1] - SH_C0 * w[1]).abs() < 1e-15);
        let b = basis(ShDegree::MAX, dir);
        assert!((d_rest[15 + 4] - b[5] * w[1]).abs() < 1e-15);
    }
}
