//! Gaussian primitives stored column-wise as raw optimization parameters.

use crate::error::{Error, Result};
use crate::math::{
    mat3_mul, mat3_transpose, quat_norm, quat_to_mat, sigmoid, Mat3, Quat, Real, Vec3,
};

/// Residual (non-DC) SH coefficients per Gaussian at degree 3: 15 per
/// channel, stored channel-major (all of R, then G, then B).
pub const SH_REST_LEN: usize = 45;
pub const SH_REST_PER_CHANNEL: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ShDegree(u8);

impl ShDegree {
    pub const MAX: ShDegree = ShDegree(3);
    pub const ZERO: ShDegree = ShDegree(0);

    pub fn new(degree: u32) -> Result<Self> {
        if degree <= 3 {
            Ok(ShDegree(degree as u8))
        } else {
            Err(Error::domain(format!("SH degree {degree} outside 0..=3")))
        }
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    /// Basis functions per channel, `(degree + 1)²`.
    pub fn coefficients(self) -> usize {
        (self.get() + 1) * (self.get() + 1)
    }

    pub fn rest_per_channel(self) -> usize {
        self.coefficients() - 1
    }

    pub fn step_up(self) -> Self {
        ShDegree((self.0 + 1).min(3))
    }
}

impl Default for ShDegree {
    fn default() -> Self {
        ShDegree::MAX
    }
}

/// A set of anisotropic 3D Gaussians.
///
/// All parameters are stored pre-activation: scales in log space,
/// opacities as logits and rotations as unnormalized quaternions (`w, x,
/// y, z`). The same struct doubles as the container for gradients and
/// optimizer moments, which share its shape.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianCloud<T> {
    pub positions: Vec<[T; 3]>,
    pub log_scales: Vec<[T; 3]>,
    pub rotations: Vec<[T; 4]>,
    pub raw_opacities: Vec<T>,
    pub sh_dc: Vec<[T; 3]>,
    pub sh_rest: Vec<[T; SH_REST_LEN]>,
    /// Highest SH degree whose coefficients are meaningful.
    pub sh_degree: ShDegree,
}

impl<T: Real> Default for GaussianCloud<T> {
    fn default() -> Self {
        Self::with_capacity(0)
    }
}

/// One Gaussian's parameters, detached from the cloud.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Splat<T> {
    pub position: [T; 3],
    pub log_scale: [T; 3],
    pub rotation: [T; 4],
    pub raw_opacity: T,
    pub sh_dc: [T; 3],
    pub sh_rest: [T; SH_REST_LEN],
}

impl<T: Real> GaussianCloud<T> {
    pub fn with_capacity(n: usize) -> Self {
        Self {
            positions: Vec::with_capacity(n),
            log_scales: Vec::with_capacity(n),
            rotations: Vec::with_capacity(n),
            raw_opacities: Vec::with_capacity(n),
            sh_dc: Vec::with_capacity(n),
            sh_rest: Vec::with_capacity(n),
            sh_degree: ShDegree::MAX,
        }
    }

    /// A cloud of `n` all-zero entries (useful for gradients and moments).
    pub fn zeros(n: usize) -> Self {
        let z = T::zero();
        Self {
            positions: vec![[z; 3]; n],
            log_scales: vec![[z; 3]; n],
            rotations: vec![[z; 4]; n],
            raw_opacities: vec![z; n],
            sh_dc: vec![[z; 3]; n],
            sh_rest: vec![[z; SH_REST_LEN]; n],
            sh_degree: ShDegree::MAX,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, s: Splat<T>) {
        self.positions.push(s.position);
        self.log_scales.push(s.log_scale);
        self.rotations.push(s.rotation);
        self.raw_opacities.push(s.raw_opacity);
        self.sh_dc.push(s.sh_dc);
        self.sh_rest.push(s.sh_rest);
    }

    pub fn splat(&self, i: usize) -> Splat<T> {
        Splat {
            position: self.positions[i],
            log_scale: self.log_scales[i],
            rotation: self.rotations[i],
            raw_opacity: self.raw_opacities[i],
            sh_dc: self.sh_dc[i],
            sh_rest: self.sh_rest[i],
        }
    }

    /// Keeps entries whose mask bit is set, preserving order.
    pub fn retain_mask(&mut self, keep: &[bool]) {
        assert_eq!(keep.len(), self.len());
        fn filter<V>(v: &mut Vec<V>, keep: &[bool]) {
            let mut i = 0;
            v.retain(|_| {
                i += 1;
                keep[i - 1]
            });
        }
        filter(&mut self.positions, keep);
        filter(&mut self.log_scales, keep);
        filter(&mut self.rotations, keep);
        filter(&mut self.raw_opacities, keep);
        filter(&mut self.sh_dc, keep);
        filter(&mut self.sh_rest, keep);
    }

    pub fn check_consistent(&self) -> Result<()> {
        let n = self.len();
        let lens = [
            self.log_scales.len(),
            self.rotations.len(),
            self.raw_opacities.len(),
            self.sh_dc.len(),
            self.sh_rest.len(),
        ];
        if lens.iter().any(|&l| l != n) {
            return Err(Error::ShapeMismatch(format!(
                "array lengths {n} vs {lens:?}"
            )));
        }
        Ok(())
    }

    pub fn same_shape(&self, other: &GaussianCloud<T>) -> bool {
        self.check_consistent().is_ok() && other.check_consistent().is_ok() && self.len() == other.len()
    }

    pub fn is_finite(&self) -> bool {
        self.flat().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    /// The six parameter arrays as flat slices, in a fixed order: positions,
    /// log-scales, rotations, raw opacities, SH DC, SH rest.
    pub fn flat(&self) -> [&[T]; 6] {
        [
            self.positions.as_flattened(),
            self.log_scales.as_flattened(),
            self.rotations.as_flattened(),
            &self.raw_opacities,
            self.sh_dc.as_flattened(),
            self.sh_rest.as_flattened(),
        ]
    }

    pub fn flat_mut(&mut self) -> [&mut [T]; 6] {
        [
            self.positions.as_flattened_mut(),
            self.log_scales.as_flattened_mut(),
            self.rotations.as_flattened_mut(),
            &mut self.raw_opacities,
            self.sh_dc.as_flattened_mut(),
            self.sh_rest.as_flattened_mut(),
        ]
    }

    pub fn cast<U: Real>(&self) -> GaussianCloud<U> {
        fn c<T: Real, U: Real, const N: usize>(v: &[[T; N]]) -> Vec<[U; N]> {
            v.iter().map(|a| a.map(|x| U::lit(x.as_f64()))).collect()
        }
        GaussianCloud {
            positions: c(&self.positions),
            log_scales: c(&self.log_scales),
            rotations: c(&self.rotations),
            raw_opacities: self
                .raw_opacities
                .iter()
                .map(|x| U::lit(x.as_f64()))
                .collect(),
            sh_dc: c(&self.sh_dc),
            sh_rest: c(&self.sh_rest),
            sh_degree: self.sh_degree,
        }
    }

    pub fn opacity(&self, i: usize) -> T {
        activate_opacity(self.raw_opacities[i])
    }

    pub fn scale(&self, i: usize) -> [T; 3] {
        self.log_scales[i].map(|s| s.exp())
    }
}

/// Normalized rotation matrix of a stored quaternion.
pub fn rotation_matrix<T: Real>(rotation: Quat<T>) -> Result<Mat3<T>> {
    let n = quat_norm(rotation);
    if !(n > T::zero()) {
        return Err(Error::domain("zero-norm quaternion"));
    }
    Ok(quat_to_mat(rotation.map(|c| c / n)))
}

/// `Σ = R S Sᵀ Rᵀ` with `S = diag(exp(log_scale))`.
pub fn covariance<T: Real>(log_scale: Vec3<T>, rotation: Quat<T>) -> Result<Mat3<T>> {
    let r = rotation_matrix(rotation)?;
    let s = log_scale.map(|v| v.exp());
    let mut m = r;
    for row in m.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= s[j];
        }
    }
    let mut sigma = mat3_mul(&m, &mat3_transpose(&m));
    // Symmetrize exactly; the product is symmetric up to rounding only.
    for i in 0..3 {
        for j in 0..i {
            let avg = (sigma[i][j] + sigma[j][i]) * T::lit(0.5);
            sigma[i][j] = avg;
            sigma[j][i] = avg;
        }
    }
    Ok(sigma)
}

#[inline]
pub fn activate_opacity<T: Real>(raw: T) -> T {
    sigmoid(raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::mat3_det;
    use proptest::prelude::*;

    fn assert_mat(a: &Mat3<f64>, b: &Mat3<f64>, tol: f64) {
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() < tol, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn covariance_examples() {
        let id = [1.0, 0.0, 0.0, 0.0];
        assert_mat(
            &covariance([0.0, 0.0, 0.0], id).unwrap(),
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            1e-15,
        );
        let ln2 = 2f64.ln();
        assert_mat(
            &covariance([ln2, 0.0, 0.0], id).unwrap(),
            &[[4.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            1e-14,
        );
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_mat(
            &covariance([ln2, 0.0, 0.0], [h, 0.0, 0.0, h]).unwrap(),
            &[[1.0, 0.0, 0.0], [0.0, 4.0, 0.0], [0.0, 0.0, 1.0]],
            1e-14,
        );
        assert!(covariance([0.0; 3], [0.0f64; 4]).is_err());
    }

    #[test]
    fn opacity_activation() {
        assert_eq!(activate_opacity(0.0f64), 0.5);
        assert!((activate_opacity(-2.19722f64) - 0.1).abs() < 1e-6);
        let grid: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.1).collect();
        assert!(grid
            .windows(2)
            .all(|w| activate_opacity(w[0]) < activate_opacity(w[1])));
    }

    #[test]
    fn sh_degree_counts() {
        assert_eq!(ShDegree::new(3).unwrap().coefficients(), 16);
        assert_eq!(ShDegree::new(1).unwrap().rest_per_channel(), 3);
        assert!(ShDegree::new(4).is_err());
    }

    #[test]
    fn retain_mask_keeps_order() {
        let mut c = GaussianCloud::<f32>::zeros(4);
        for i in 0..4 {
            c.raw_opacities[i] = i as f32;
        }
        c.retain_mask(&[true, false, true, true]);
        assert_eq!(c.raw_opacities, vec![0.0, 2.0, 3.0]);
        assert_eq!(c.sh_rest.len(), 3);
    }

    /// Smallest eigenvalue of a symmetric 3×3 matrix (trigonometric method).
    fn sym3_min_eigenvalue(a: &Mat3<f64>) -> f64 {
        let p1 = a[0][1].powi(2) + a[0][2].powi(2) + a[1][2].powi(2);
        let q = (a[0][0] + a[1][1] + a[2][2]) / 3.0;
        let p2 = (a[0][0] - q).powi(2) + (a[1][1] - q).powi(2) + (a[2][2] - q).powi(2) + 2.0 * p1;
        let p = (p2 / 6.0).sqrt();
        if p == 0.0 {
            return q;
        }
        let mut b = *a;
        for (i, row) in b.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (*v - if i == j { q } else { 0.0 }) / p;
            }
        }
        let r = (mat3_det(&b) / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        q + 2.0 * p * (phi + 2.0 * std::f64::consts::PI / 3.0).cos()
    }

    fn quat() -> impl Strategy<Value = [f64; 4]> {
        prop::array::uniform4(-1.0f64..1.0).prop_filter("nonzero", |q| quat_norm(*q) > 1e-3)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn covariance_is_symmetric_psd(s in prop::array::uniform3(-3.0f64..1.0), q in quat()) {
            let c = covariance(s, q).unwrap();
            for i in 0..3 { for j in 0..3 { prop_assert_eq!(c[i][j], c[j][i]); } }
            prop_assert!(sym3_min_eigenvalue(&c) >= -1e-9);
            let det = mat3_det(&c);
            let want = (2.0 * (s[0] + s[1] + s[2])).exp();
            let big = c.iter().flatten().fold(0f64, |m, v| m.max(v.abs()));
            prop_assert!((det - want).abs() <= 1e-9 * want + 1e-14 * big.powi(3));
            let neg = covariance(s, q.map(|v| -v)).unwrap();
            for i in 0..3 { for j in 0..3 { prop_assert!((neg[i][j] - c[i][j]).abs() <= 1e-15); } }
        }
    }
}
