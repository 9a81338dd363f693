//! Scalar abstraction and the small fixed-size linear algebra the
//! rasterizer needs. Everything is generic so the same code path can run
//! in `f32` for training and `f64` for gradient verification.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for finite inputs.
    fn lit(x: f64) -> Self;

    fn as_f64(self) -> f64;

    fn as_f32(self) -> f32;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
    #[inline]
    fn as_f32(self) -> f32 {
        self as f32
    }
}

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];
pub type Mat2<T> = [[T; 2]; 2];
/// Quaternion in `w, x, y, z` order.
pub type Quat<T> = [T; 4];

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

#[inline]
pub fn logit<T: Real>(p: T) -> T {
    (p / (T::one() - p)).ln()
}

#[inline]
pub fn add3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

#[inline]
pub fn sub3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

#[inline]
pub fn scale3<T: Real>(a: Vec3<T>, s: T) -> Vec3<T> {
    [a[0] * s, a[1] * s, a[2] * s]
}

#[inline]
pub fn dot3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> T {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
pub fn norm3<T: Real>(a: Vec3<T>) -> T {
    dot3(a, a).sqrt()
}

#[inline]
pub fn cross3<T: Real>(a: Vec3<T>, b: Vec3<T>) -> Vec3<T> {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn mat3_identity<T: Real>() -> Mat3<T> {
    let (o, z) = (T::one(), T::zero());
    [[o, z, z], [z, o, z], [z, z, o]]
}

#[inline]
pub fn mat3_vec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [dot3(m[0], v), dot3(m[1], v), dot3(m[2], v)]
}

/// `mᵀ v`
#[inline]
pub fn mat3_tvec<T: Real>(m: &Mat3<T>, v: Vec3<T>) -> Vec3<T> {
    [
        m[0][0] * v[0] + m[1][0] * v[1] + m[2][0] * v[2],
        m[0][1] * v[0] + m[1][1] * v[1] + m[2][1] * v[2],
        m[0][2] * v[0] + m[1][2] * v[1] + m[2][2] * v[2],
    ]
}

pub fn mat3_mul<T: Real>(a: &Mat3<T>, b: &Mat3<T>) -> Mat3<T> {
    let mut out = [[T::zero(); 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j] + a[i][2] * b[2][j];
        }
    }
    out
}

pub fn mat3_transpose<T: Real>(m: &Mat3<T>) -> Mat3<T> {
    [
        [m[0][0], m[1][0], m[2][0]],
        [m[0][1], m[1][1], m[2][1]],
        [m[0][2], m[1][2], m[2][2]],
    ]
}

pub fn mat3_det<T: Real>(m: &Mat3<T>) -> T {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

pub fn quat_norm<T: Real>(q: Quat<T>) -> T {
    (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt()
}

/// Rotation matrix of a unit quaternion (`w, x, y, z`).
pub fn quat_to_mat<T: Real>(q: Quat<T>) -> Mat3<T> {
    let [w, x, y, z] = q;
    let one = T::one();
    let two = T::lit(2.0);
    [
        [
            one - two * (y * y + z * z),
            two * (x * y - w * z),
            two * (x * z + w * y),
        ],
        [
            two * (x * y + w * z),
            one - two * (x * x + z * z),
            two * (y * z - w * x),
        ],
        [
            two * (x * z - w * y),
            two * (y * z + w * x),
            one - two * (x * x + y * y),
        ],
    ]
}

/// Unit quaternion (`w, x, y, z`, `w ≥ 0`) of a rotation matrix.
pub fn mat_to_quat<T: Real>(m: &Mat3<T>) -> Quat<T> {
    let one = T::one();
    let quarter = T::lit(0.25);
    let tr = m[0][0] + m[1][1] + m[2][2];
    let q = if tr > T::zero() {
        let s = (tr + one).sqrt() * T::lit(2.0);
        [quarter * s, (m[2][1] - m[1][2]) / s, (m[0][2] - m[2][0]) / s, (m[1][0] - m[0][1]) / s]
    } else if m[0][0] > m[1][1] && m[0][0] > m[2][2] {
        let s = (one + m[0][0] - m[1][1] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[2][1] - m[1][2]) / s, quarter * s, (m[0][1] + m[1][0]) / s, (m[0][2] + m[2][0]) / s]
    } else if m[1][1] > m[2][2] {
        let s = (one + m[1][1] - m[0][0] - m[2][2]).sqrt() * T::lit(2.0);
        [(m[0][2] - m[2][0]) / s, (m[0][1] + m[1][0]) / s, quarter * s, (m[1][2] + m[2][1]) / s]
    } else {
        let s = (one + m[2][2] - m[0][0] - m[1][1]).sqrt() * T::lit(2.0);
        [(m[1][0] - m[0][1]) / s, (m[0][2] + m[2][0]) / s, (m[1][2] + m[2][1]) / s, quarter * s]
    };
    let n = quat_norm(q);
    let sign = if q[0] < T::zero() { -one } else { one };
    q.map(|c| sign * c / n)
}

/// Gradient of `Σᵢⱼ G[i][j]·R(q)[i][j]` with respect to the unit quaternion
/// components, where `R` is [`quat_to_mat`].
pub fn quat_to_mat_vjp<T: Real>(q: Quat<T>, g: &Mat3<T>) -> Quat<T> {
    let [w, x, y, z] = q;
    let two = T::lit(2.0);
    let gw = two
        * (-z * g[0][1] + y * g[0][2] + z * g[1][0] - x * g[1][2] - y * g[2][0] + x * g[2][1]);
    let gx = two
        * (y * g[0][1] + z * g[0][2] + y * g[1][0] - two * x * g[1][1] - w * g[1][2]
            + z * g[2][0]
            + w * g[2][1]
            - two * x * g[2][2]);
    let gy = two
        * (-two * y * g[0][0] + x * g[0][1] + w * g[0][2] + x * g[1][0] + z * g[1][2]
            - w * g[2][0]
            + z * g[2][1]
            - two * y * g[2][2]);
    let gz = two
        * (-two * z * g[0][0] - w * g[0][1] + x * g[0][2] + w * g[1][0] - two * z * g[1][1]
            + y * g[1][2]
            + x * g[2][0]
            + y * g[2][1]);
    [gw, gx, gy, gz]
}

/// Eigenvalues of a symmetric 2×2 matrix, larger first.
pub fn sym2_eigenvalues<T: Real>(m: &Mat2<T>) -> (T, T) {
    let half = T::lit(0.5);
    let mid = half * (m[0][0] + m[1][1]);
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    let disc = (mid * mid - det).max(T::zero()).sqrt();
    (mid + disc, mid - disc)
}
