//! Image-quality metrics: MSE, PSNR, and SSIM for evaluation.

use crate::error::Result;
use crate::image::Image;
use crate::math::Real;
use crate::model::GaussianCloud;
use crate::optim::TrainView;
use crate::raster::{render, RenderConfig};

pub use crate::optim::ssim;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

pub fn mse<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    a.check_same_shape(b)?;
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.as_f64() - y.as_f64();
            d * d
        })
        .sum();
    Ok(sum / a.data.len() as f64)
}

/// PSNR in dB for a given MSE, dynamic range 1.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse > 0.0 {
        (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
    } else {
        PSNR_CAP_DB
    }
}

pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViewMetrics {
    pub name: String,
    pub mse: f64,
    pub psnr: f64,
    pub ssim: f64,
}

/// Means over views plus the per-view rows.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
    pub views: Vec<ViewMetrics>,
}

impl MetricReport {
    pub fn from_views(views: Vec<ViewMetrics>) -> Self {
        let n = views.len().max(1) as f64;
        let mean = |f: fn(&ViewMetrics) -> f64| views.iter().map(f).sum::<f64>() / n;
        Self {
            psnr: mean(|v| v.psnr),
            ssim: mean(|v| v.ssim),
            mse: mean(|v| v.mse),
            views,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("view,mse,psnr,ssim\n");
        for v in &self.views {
            s.push_str(&format!("{},{},{},{}\n", v.name, v.mse, v.psnr, v.ssim));
        }
        s.push_str(&format!("mean,{},{},{}\n", self.mse, self.psnr, self.ssim));
        s
    }
}

impl std::fmt::Display for MetricReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for v in &self.views {
            writeln!(
                f,
                "{:<24} psnr {:>7.3} dB  ssim {:.4}  mse {:.6e}",
                v.name, v.psnr, v.ssim, v.mse
            )?;
        }
        write!(
            f,
            "{:<24} psnr {:>7.3} dB  ssim {:.4}  mse {:.6e}",
            "mean", self.psnr, self.ssim, self.mse
        )
    }
}

/// Renders every view and compares it against its image.
pub fn evaluate<T: Real>(
    cloud: &GaussianCloud<T>,
    views: &[TrainView<T>],
    config: &RenderConfig<T>,
) -> Result<MetricReport> {
    let mut rows = Vec::with_capacity(views.len());
    for view in views {
        let out = render(cloud, &view.camera, config)?;
        let m = mse(&out.color, &view.image)?;
        rows.push(ViewMetrics {
            name: view.name.clone(),
            mse: m,
            psnr: psnr_from_mse(m),
            ssim: ssim(&out.color, &view.image)?.as_f64(),
        });
    }
    Ok(MetricReport::from_views(rows))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn closed_forms() {
        let a = Image::<f64>::filled(4, 3, 3, 0.0);
        let b = Image::<f64>::filled(4, 3, 3, 0.1);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a).unwrap(), 100.0);
        assert!((psnr_from_mse(0.01) - 20.0).abs() < 1e-12);
        assert_eq!(psnr_from_mse(1.0), 0.0);
    }

    #[test]
    fn shape_mismatch() {
        let a = Image::<f64>::new(4, 3, 3);
        let b = Image::<f64>::new(3, 4, 3);
        assert!(mse(&a, &b).is_err());
    }

    proptest! {
        #[test]
        fn mse_symmetric_nonnegative(v in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 12)) {
            let a = Image::from_vec(2, 2, 3, v.iter().map(|p| p.0).collect()).unwrap();
            let b = Image::from_vec(2, 2, 3, v.iter().map(|p| p.1).collect()).unwrap();
            let ab = mse(&a, &b).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert_eq!(ab, mse(&b, &a).unwrap());
        }

        #[test]
        fn psnr_decreasing(a in 1e-9f64..1.0, b in 1e-9f64..1.0) {
            prop_assume!(a < b);
            prop_assert!(psnr_from_mse(a) > psnr_from_mse(b));
        }
    }
}
