use super::ssim::ssim_with_grad;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::math::Real;

/// Photometric loss `(1−λ)·L1 + λ·(1 − SSIM)` and its gradient.
#[derive(Clone, Debug)]
pub struct LossValue<T> {
    pub total: T,
    pub l1: T,
    /// `1 − SSIM`
    pub dssim: T,
    /// `∂total/∂rendered`
    pub grad: Image<T>,
}

pub fn loss<T: Real>(rendered: &Image<T>, truth: &Image<T>, lambda: T) -> Result<LossValue<T>> {
    rendered.check_same_shape(truth)?;
    if !(lambda >= T::zero() && lambda <= T::one()) {
        return Err(Error::domain(format!("loss weight {lambda} outside [0,1]")));
    }
    let n = T::lit(rendered.data.len() as f64);
    let l1 = rendered
        .data
        .iter()
        .zip(&truth.data)
        .map(|(r, t)| (*r - *t).abs())
        .fold(T::zero(), |a, b| a + b)
        / n;
    let w1 = T::one() - lambda;
    let mut grad = Image::new(rendered.width, rendered.height, rendered.channels);
    for ((g, r), t) in grad.data.iter_mut().zip(&rendered.data).zip(&truth.data) {
        let d = *r - *t;
        let sign = if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        *g = w1 * sign / n;
    }
    let dssim = if lambda > T::zero() {
        let (s, sg) = ssim_with_grad(rendered, truth)?;
        for (g, d) in grad.data.iter_mut().zip(&sg.data) {
            *g -= lambda * *d;
        }
        T::one() - s
    } else {
        T::one() - super::ssim::ssim(rendered, truth)?
    };
    Ok(LossValue {
        total: w1 * l1 + lambda * dssim,
        l1,
        dssim,
        grad,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images_have_zero_loss() {
        let img = Image::from_rgb(12, 12, [0.2f64, 0.5, 0.9]);
        let l = loss(&img, &img, 0.2).unwrap();
        assert!(l.total.abs() < 1e-15);
        assert!(l.grad.data.iter().all(|g| g.abs() < 1e-15));
    }

    #[test]
    fn pure_l1_of_constant_offset() {
        let a = Image::<f64>::filled(6, 5, 3, 0.3);
        let b = Image::<f64>::filled(6, 5, 3, 0.4);
        let l = loss(&a, &b, 0.0).unwrap();
        assert!((l.total - 0.1).abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = Image::from_vec(8, 8, 3, (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
        let b = Image::from_vec(8, 8, 3, (0..192).map(|_| rng.random::<f64>()).collect()).unwrap();
        let lambda = 0.2;
        let l = loss(&a, &b, lambda).unwrap();
        let eps = 1e-6;
        let mut worst = 0f64;
        for i in 0..a.data.len() {
            let mut p = a.clone();
            let mut m = a.clone();
            p.data[i] += eps;
            m.data[i] -= eps;
            let num = (loss(&p, &b, lambda).unwrap().total - loss(&m, &b, lambda).unwrap().total)
                / (2.0 * eps);
            let an = l.grad.data[i];
            worst = worst.max((num - an).abs() / an.abs().max(num.abs()));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn mismatched_shapes() {
        let a = Image::<f64>::new(3, 3, 3);
        let b = Image::<f64>::new(3, 4, 3);
        assert!(loss(&a, &b, 0.2).is_err());
    }
}
