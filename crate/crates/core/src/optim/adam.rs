use crate::error::{Error, Result};
use crate::math::Real;
use crate::model::GaussianCloud;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-15;

/// Per-array step sizes, in the order of [`GaussianCloud::flat`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub log_scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

impl LearningRates {
    fn as_array(&self) -> [f64; 6] {
        [
            self.position,
            self.log_scale,
            self.rotation,
            self.opacity,
            self.sh_dc,
            self.sh_rest,
        ]
    }
}

/// First and second moment estimates, shaped like the cloud.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub first: GaussianCloud<T>,
    pub second: GaussianCloud<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(n: usize) -> Self {
        Self {
            first: GaussianCloud::zeros(n),
            second: GaussianCloud::zeros(n),
        }
    }

    pub fn len(&self) -> usize {
        self.first.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first.is_empty()
    }

    /// One bias-corrected update at 1-based step `iteration`.
    pub fn step(
        &mut self,
        params: &mut GaussianCloud<T>,
        grads: &GaussianCloud<T>,
        lr: &LearningRates,
        iteration: u64,
    ) -> Result<()> {
        if !params.same_shape(grads) || !params.same_shape(&self.first) {
            return Err(Error::ShapeMismatch(format!(
                "params {}, gradients {}, moments {}",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        if iteration == 0 {
            return Err(Error::domain("Adam steps are 1-based"));
        }
        let (b1, b2) = (T::lit(BETA1), T::lit(BETA2));
        let bc1 = T::one() - b1.powi(iteration as i32);
        let bc2_sqrt = (T::one() - b2.powi(iteration as i32)).sqrt();
        let eps = T::lit(EPSILON);
        let rates = lr.as_array();
        let p = params.flat_mut();
        let g = grads.flat();
        let m = self.first.flat_mut();
        let v = self.second.flat_mut();
        for (k, (((p, g), m), v)) in p.into_iter().zip(g).zip(m).zip(v).enumerate() {
            let step = T::lit(rates[k]) / bc1;
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = b1 * m[i] + (T::one() - b1) * gi;
                v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
                let denom = v[i].sqrt() / bc2_sqrt + eps;
                p[i] -= step * m[i] / denom;
            }
        }
        Ok(())
    }
}
