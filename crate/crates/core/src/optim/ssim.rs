//! Structural similarity with an 11×11 Gaussian window (σ = 1.5).
//!
//! Near the border the window is truncated to the image and renormalized,
//! so constant images have exactly zero local variance everywhere.

use crate::error::Result;
use crate::image::Image;
use crate::math::Real;

pub const WINDOW: usize = 11;
pub const SIGMA: f64 = 1.5;
pub const K1: f64 = 0.01;
pub const K2: f64 = 0.03;

fn kernel<T: Real>() -> [T; WINDOW] {
    let r = (WINDOW / 2) as f64;
    let raw: [f64; WINDOW] =
        std::array::from_fn(|i| (-((i as f64 - r).powi(2)) / (2.0 * SIGMA * SIGMA)).exp());
    let sum: f64 = raw.iter().sum();
    raw.map(|v| T::lit(v / sum))
}

/// Separable truncated Gaussian blur of a single-channel plane. With
/// `normalize`, each output is divided by the in-bounds kernel mass.
fn blur<T: Real>(plane: &[T], w: usize, h: usize, normalize: bool) -> Vec<T> {
    let k = kernel::<T>();
    let r = (WINDOW / 2) as isize;
    let pass = |src: &[T], horizontal: bool| -> Vec<T> {
        let mut out = vec![T::zero(); w * h];
        let (len, other) = if horizontal { (w, h) } else { (h, w) };
        for o in 0..other {
            for p in 0..len {
                let mut acc = T::zero();
                let mut mass = T::zero();
                for (ki, &kv) in k.iter().enumerate() {
                    let q = p as isize + ki as isize - r;
                    if q < 0 || q >= len as isize {
                        continue;
                    }
                    let idx = if horizontal { o * w + q as usize } else { q as usize * w + o };
                    acc += kv * src[idx];
                    mass += kv;
                }
                let idx = if horizontal { o * w + p } else { p * w + o };
                out[idx] = if normalize { acc / mass } else { acc };
            }
        }
        out
    };
    let tmp = pass(plane, true);
    pass(&tmp, false)
}

/// In-bounds kernel mass product at each pixel.
fn window_mass<T: Real>(w: usize, h: usize) -> Vec<T> {
    let ones = vec![T::one(); w * h];
    blur(&ones, w, h, false)
}

fn channel<T: Real>(img: &Image<T>, c: usize) -> Vec<T> {
    img.data.iter().skip(c).step_by(img.channels).copied().collect()
}

struct Moments<T> {
    mx: Vec<T>,
    my: Vec<T>,
    sxx: Vec<T>,
    syy: Vec<T>,
    sxy: Vec<T>,
}

fn moments<T: Real>(x: &[T], y: &[T], w: usize, h: usize) -> Moments<T> {
    let mx = blur(x, w, h, true);
    let my = blur(y, w, h, true);
    let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
    let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
    let xy: Vec<T> = x.iter().zip(y).map(|(a, b)| *a * *b).collect();
    let exx = blur(&xx, w, h, true);
    let eyy = blur(&yy, w, h, true);
    let exy = blur(&xy, w, h, true);
    let n = w * h;
    Moments {
        sxx: (0..n).map(|i| exx[i] - mx[i] * mx[i]).collect(),
        syy: (0..n).map(|i| eyy[i] - my[i] * my[i]).collect(),
        sxy: (0..n).map(|i| exy[i] - mx[i] * my[i]).collect(),
        mx,
        my,
    }
}

fn constants<T: Real>() -> (T, T) {
    (T::lit(K1 * K1), T::lit(K2 * K2))
}

/// Mean SSIM over all pixels and channels.
pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<T> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width, a.height);
    let (c1, c2) = constants::<T>();
    let two = T::lit(2.0);
    let mut total = T::zero();
    for c in 0..a.channels {
        let m = moments(&channel(a, c), &channel(b, c), w, h);
        for i in 0..w * h {
            let num = (two * m.mx[i] * m.my[i] + c1) * (two * m.sxy[i] + c2);
            let den = (m.mx[i] * m.mx[i] + m.my[i] * m.my[i] + c1) * (m.sxx[i] + m.syy[i] + c2);
            total += num / den;
        }
    }
    Ok(total / T::lit((w * h * a.channels) as f64))
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<(T, Image<T>)> {
    a.check_same_shape(b)?;
    let (w, h) = (a.width, a.height);
    let n = w * h;
    let inv_total = T::one() / T::lit((n * a.channels) as f64);
    let (c1, c2) = constants::<T>();
    let two = T::lit(2.0);
    let mass = window_mass::<T>(w, h);
    let mut total = T::zero();
    let mut grad = Image::new(w, h, a.channels);
    for c in 0..a.channels {
        let x = channel(a, c);
        let y = channel(b, c);
        let m = moments(&x, &y, w, h);
        // Per-window partials of the SSIM map, pre-divided by the window
        // mass so the unnormalized blur applies the adjoint.
        let mut alpha = vec![T::zero(); n];
        let mut beta = vec![T::zero(); n];
        let mut beta_mx = vec![T::zero(); n];
        let mut gamma = vec![T::zero(); n];
        let mut gamma_my = vec![T::zero(); n];
        for i in 0..n {
            let a1 = two * m.mx[i] * m.my[i] + c1;
            let a2 = two * m.sxy[i] + c2;
            let b1 = m.mx[i] * m.mx[i] + m.my[i] * m.my[i] + c1;
            let b2 = m.sxx[i] + m.syy[i] + c2;
            let den = b1 * b2;
            total += a1 * a2 / den;
            let da = two * m.my[i] * a2 / den - two * m.mx[i] * a1 * a2 / (b1 * den);
            let db = -a1 * a2 / (den * b2);
            let dg = two * a1 / den;
            let s = inv_total / mass[i];
            alpha[i] = da * s;
            beta[i] = db * s;
            beta_mx[i] = db * m.mx[i] * s;
            gamma[i] = dg * s;
            gamma_my[i] = dg * m.my[i] * s;
        }
        let t_alpha = blur(&alpha, w, h, false);
        let t_beta = blur(&beta, w, h, false);
        let t_beta_mx = blur(&beta_mx, w, h, false);
        let t_gamma = blur(&gamma, w, h, false);
        let t_gamma_my = blur(&gamma_my, w, h, false);
        for i in 0..n {
            grad.data[i * a.channels + c] = t_alpha[i] + two * x[i] * t_beta[i]
                - two * t_beta_mx[i]
                + y[i] * t_gamma[i]
                - t_gamma_my[i];
        }
    }
    Ok((total * inv_total, grad))
}
