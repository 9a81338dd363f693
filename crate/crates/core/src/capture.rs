//! Acquisition planning for walk-through 360° capture.
//!
//! The overlap model is one-dimensional along the walking direction: two
//! consecutive extracted views overlap by `1 - spacing / footprint`, where
//! `spacing = speed / rate`. Ground sampling distance uses the nadir
//! small-angle model, `height × 2π / equirect_width`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

pub const DEFAULT_OVERLAP: f64 = 0.70;
pub const DEFAULT_FOOTPRINT_M: f64 = 4.0;
pub const DEFAULT_EQUIRECT_WIDTH: u32 = 5760;

#[derive(Clone, Debug, PartialEq)]
pub struct CapturePlan {
    /// m/s
    pub walking_speed: f64,
    /// m
    pub camera_height: f64,
    /// frames/s of the decoded source
    pub source_frame_rate: f64,
    pub equirect_width: u32,
    pub target_overlap: f64,
    /// Ground extent imaged by one extracted view along the walking direction, m.
    pub footprint_length: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanReport {
    pub min_extraction_rate: f64,
    /// Maximum distance walked between extracted views.
    pub max_spacing: f64,
    /// Maximum time between extracted views (infinite when stationary).
    pub max_interval: f64,
    pub stride: u32,
    pub effective_rate: f64,
    pub achieved_overlap: f64,
    /// Fastest walk the source frame rate can sustain at the target overlap.
    pub max_walking_speed: f64,
    /// Ground sampling distance, m/px.
    pub ground_sampling_distance: f64,
}

impl CapturePlan {
    pub fn validate(&self) -> Result<()> {
        let ok = self.walking_speed >= 0.0
            && self.camera_height > 0.0
            && self.equirect_width >= 2
            && self.equirect_width % 2 == 0
            && (0.0..1.0).contains(&self.target_overlap)
            && self.footprint_length > 0.0
            && self.source_frame_rate > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::domain(format!("invalid capture plan {self:?}")))
        }
    }

    pub fn report(&self) -> Result<PlanReport> {
        self.validate()?;
        let rate = min_extraction_rate(
            self.walking_speed,
            self.footprint_length,
            self.target_overlap,
        )?;
        let max_speed = max_walking_speed(
            self.source_frame_rate,
            self.footprint_length,
            self.target_overlap,
        )?;
        // A stationary operator can keep every decoded frame.
        let stride = if rate > 0.0 {
            frame_stride(self.source_frame_rate, rate)?
        } else {
            1
        };
        let effective_rate = self.source_frame_rate / stride as f64;
        let max_spacing = (1.0 - self.target_overlap) * self.footprint_length;
        let max_interval = if self.walking_speed > 0.0 {
            max_spacing / self.walking_speed
        } else {
            f64::INFINITY
        };
        let achieved_overlap = 1.0 - self.walking_speed / (effective_rate * self.footprint_length);
        Ok(PlanReport {
            min_extraction_rate: rate,
            max_spacing,
            max_interval,
            stride,
            effective_rate,
            achieved_overlap,
            max_walking_speed: max_speed,
            ground_sampling_distance: ground_sampling_distance(
                self.camera_height,
                self.equirect_width,
            )?,
        })
    }
}

fn check_overlap_footprint(footprint_length: f64, target_overlap: f64) -> Result<()> {
    if !(footprint_length > 0.0) {
        return Err(Error::domain(format!(
            "footprint length must be positive, got {footprint_length}"
        )));
    }
    if !(0.0..1.0).contains(&target_overlap) {
        return Err(Error::domain(format!(
            "target overlap must lie in [0, 1), got {target_overlap}"
        )));
    }
    Ok(())
}

/// Minimum frame extraction rate (frames/s) that keeps consecutive views
/// overlapping by at least `target_overlap`.
pub fn min_extraction_rate(
    walking_speed: f64,
    footprint_length: f64,
    target_overlap: f64,
) -> Result<f64> {
    check_overlap_footprint(footprint_length, target_overlap)?;
    if !(walking_speed >= 0.0) {
        return Err(Error::domain(format!(
            "walking speed must be non-negative, got {walking_speed}"
        )));
    }
    Ok(walking_speed / ((1.0 - target_overlap) * footprint_length))
}

/// Inverse of [`min_extraction_rate`]: the fastest walking speed a given
/// frame rate supports.
pub fn max_walking_speed(frame_rate: f64, footprint_length: f64, target_overlap: f64) -> Result<f64> {
    check_overlap_footprint(footprint_length, target_overlap)?;
    if !(frame_rate > 0.0) {
        return Err(Error::domain(format!(
            "frame rate must be positive, got {frame_rate}"
        )));
    }
    Ok(frame_rate * (1.0 - target_overlap) * footprint_length)
}

/// Keep every `stride`-th decoded frame; the resulting rate never drops
/// below `required_rate`.
pub fn frame_stride(source_frame_rate: f64, required_rate: f64) -> Result<u32> {
    if !(source_frame_rate > 0.0) || !(required_rate > 0.0) {
        return Err(Error::domain(format!(
            "frame rates must be positive (source {source_frame_rate}, required {required_rate})"
        )));
    }
    if required_rate > source_frame_rate {
        return Err(Error::domain(format!(
            "source too slow: {source_frame_rate} fps cannot supply {required_rate} fps"
        )));
    }
    let mut stride = (source_frame_rate / required_rate).floor().max(1.0) as u32;
    // Guard against the quotient rounding up across an integer.
    while stride > 1 && source_frame_rate / (stride as f64) < required_rate {
        stride -= 1;
    }
    Ok(stride)
}

/// Nadir ground sampling distance in metres per pixel.
pub fn ground_sampling_distance(camera_height: f64, equirect_width: u32) -> Result<f64> {
    if !(camera_height > 0.0) {
        return Err(Error::domain(format!(
            "camera height must be positive, got {camera_height}"
        )));
    }
    if equirect_width < 2 {
        return Err(Error::domain(format!(
            "equirect width must be at least 2, got {equirect_width}"
        )));
    }
    Ok(camera_height * (2.0 * PI / equirect_width as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn extraction_rate_examples() {
        assert_eq!(min_extraction_rate(0.0, 4.0, 0.7).unwrap(), 0.0);
        let r = min_extraction_rate(1.4, 4.0, 0.7).unwrap();
        assert!((r - 1.4 / 1.2).abs() < 1e-12);
        assert!((r - 1.1667).abs() < 1e-4);
        assert!((1.4 / r - 1.2).abs() < 1e-12);
        assert!((1.0 / r - 0.857).abs() < 1e-3);
        assert!((min_extraction_rate(1.4, 4.0, 0.0).unwrap() - 0.35).abs() < 1e-12);
    }

    #[test]
    fn extraction_rate_domain_errors() {
        assert!(min_extraction_rate(1.0, 4.0, 1.0).is_err());
        assert!(min_extraction_rate(1.0, 0.0, 0.5).is_err());
        assert!(min_extraction_rate(1.0, -1.0, 0.5).is_err());
        assert!(min_extraction_rate(-1.0, 4.0, 0.5).is_err());
    }

    #[test]
    fn stride_examples() {
        let r = min_extraction_rate(1.4, 4.0, 0.7).unwrap();
        assert_eq!(frame_stride(30.0, r).unwrap(), 25);
        assert_eq!(frame_stride(30.0, 1.1667).unwrap(), 25);
        assert_eq!(frame_stride(2.0, 2.0).unwrap(), 1);
        let err = frame_stride(30.0, 31.0).unwrap_err();
        assert!(err.to_string().contains("source too slow"));
    }

    #[test]
    fn gsd_examples() {
        let one = ground_sampling_distance(1.0, 5760).unwrap();
        assert!((one * 1e3 - 1.0908).abs() < 1e-4);
        let three = ground_sampling_distance(3.0, 5760).unwrap();
        assert!((three * 1e3 - 3.2725).abs() < 1e-4);
        assert!(ground_sampling_distance(0.0, 5760).is_err());
        assert!(ground_sampling_distance(-1.0, 5760).is_err());
    }

    #[test]
    fn gsd_exactly_one_mm_at_two_pi_thousand_pixels() {
        // Integer widths cannot equal 2π·1000; evaluate the closed form at
        // that hypothetical width directly.
        let width = 2.0 * PI * 1000.0;
        assert!((1.0 * (2.0 * PI / width) - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn timelapse_mode_speed_bound() {
        let v = max_walking_speed(2.0, 4.0, 0.7).unwrap();
        assert!((v - 2.4).abs() < 1e-12);
        let r = min_extraction_rate(v, 4.0, 0.7).unwrap();
        assert!((r - 2.0).abs() < 1e-12);
    }

    #[test]
    fn report_composes_stride() {
        let plan = CapturePlan {
            walking_speed: 1.4,
            camera_height: 1.0,
            source_frame_rate: 30.0,
            equirect_width: 5760,
            target_overlap: 0.7,
            footprint_length: 4.0,
        };
        let r = plan.report().unwrap();
        assert_eq!(r.stride, 25);
        assert!(r.effective_rate >= r.min_extraction_rate);
        assert!(r.achieved_overlap >= 0.7);
        assert!((r.max_walking_speed - 36.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn rate_monotone(v in 0.0f64..5.0, dv in 0.0f64..1.0, f in 0.5f64..10.0, df in 0.0f64..2.0,
                         o in 0.0f64..0.95, d_o in 0.0f64..0.04) {
            let base = min_extraction_rate(v, f, o).unwrap();
            prop_assert!(min_extraction_rate(v + dv, f, o).unwrap() >= base);
            prop_assert!(min_extraction_rate(v, f, o + d_o).unwrap() >= base);
            prop_assert!(min_extraction_rate(v, f + df, o).unwrap() <= base);
        }

        #[test]
        fn gsd_linear_in_height(h in 0.01f64..100.0, k in 0.01f64..100.0, half_w in 1u32..10_000) {
            let w = half_w * 2;
            let a = ground_sampling_distance(k * h, w).unwrap();
            let b = k * ground_sampling_distance(h, w).unwrap();
            prop_assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }

        #[test]
        fn stride_meets_rate(s in 0.1f64..240.0, frac in 0.001f64..1.0) {
            let r = s * frac;
            let k = frame_stride(s, r).unwrap();
            prop_assert!(k >= 1);
            prop_assert!(s / k as f64 >= r);
        }
    }
}
