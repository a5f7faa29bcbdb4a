//! Volumetric CRPS.
//!
//! The raters' class volumes define a Gaussian reference distribution
//! `N(mu, sigma^2)`; the model's soft volume `y` is the point being scored:
//!
//! ```text
//! CRPS = integral (F(x) - 1{x >= y})^2 dx
//!      = sigma * [ z (2 Phi(z) - 1) + 2 phi(z) - 1 / sqrt(pi) ],   z = (y - mu) / sigma
//! ```
//!
//! which degenerates to `|y - mu|` when `sigma = 0`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::{compensated_sum, normal_cdf, normal_pdf, std_dev, SigmaConvention};
use crate::volume::{LabelVolume, Organ, ProbabilityVolume};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeDistribution {
    /// Mean rater volume, cm³.
    pub mean: f64,
    /// Standard deviation of rater volumes, cm³.
    pub std: f64,
}

/// Soft class volume in cm³: the class channel summed over the grid, no thresholding.
pub fn predicted_volume(pred: &ProbabilityVolume, organ: Organ) -> f64 {
    let channel = pred.channel(organ.class_id() as usize);
    compensated_sum(channel.iter()) * pred.geometry().voxel_volume_cm3()
}

/// Mean and spread of the raters' class volumes.
pub fn rater_volume_distribution(
    raters: &[LabelVolume],
    organ: Organ,
    convention: SigmaConvention,
) -> Result<VolumeDistribution> {
    let Some(first) = raters.first() else {
        return Err(Error::Arity("volume distribution needs at least one rater".into()));
    };
    for (k, r) in raters.iter().enumerate().skip(1) {
        first.geometry().ensure_compatible(r.geometry(), &format!("rater {}", k + 1))?;
    }
    let volumes: Vec<f64> = raters
        .iter()
        .map(|r| r.class_count(organ) as f64 * r.geometry().voxel_volume_cm3())
        .collect();
    Ok(distribution_of(&volumes, convention))
}

pub fn distribution_of(volumes: &[f64], convention: SigmaConvention) -> VolumeDistribution {
    let mean = crate::numeric::mean(volumes).unwrap_or(0.0);
    VolumeDistribution { mean, std: std_dev(volumes, convention) }
}

/// Closed-form CRPS of the Gaussian `N(mean, std^2)` against the point `y`.
pub fn crps_gaussian(mean: f64, std: f64, y: f64) -> Result<f64> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::parameter(format!("CRPS standard deviation must be >= 0, got {std}")));
    }
    if !mean.is_finite() || !y.is_finite() {
        return Err(Error::parameter(format!("CRPS inputs must be finite (mean {mean}, y {y})")));
    }
    if std == 0.0 {
        return Ok((y - mean).abs());
    }
    let z = (y - mean) / std;
    let value = std
        * (z * (2.0 * normal_cdf(z) - 1.0) + 2.0 * normal_pdf(z) - 1.0 / std::f64::consts::PI.sqrt());
    Ok(value.max(0.0))
}
