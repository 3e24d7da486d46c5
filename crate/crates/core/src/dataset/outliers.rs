use super::PathLossDataset;
use crate::error::{Error, Result};

/// Default accelerometer outlier threshold, in standard deviations per axis.
pub const DEFAULT_ACCEL_THRESHOLD: f64 = 3.0;

#[derive(Clone, Debug, PartialEq)]
pub struct FilterOutcome {
    pub dataset: PathLossDataset,
    pub removed: usize,
}

/// Drops samples whose acceleration on any axis deviates from the dataset
/// mean by more than `threshold` population standard deviations.
///
/// Statistics are computed over samples that carry accelerometer fields;
/// samples without them always pass. Axes with zero spread never reject.
pub fn filter_outliers(ds: &PathLossDataset, threshold: f64) -> Result<FilterOutcome> {
    if !(threshold > 0.0) || !threshold.is_finite() {
        return Err(Error::invalid(format!(
            "outlier threshold must be positive, got {threshold}"
        )));
    }
    let readings: Vec<[f64; 3]> = ds
        .samples
        .iter()
        .filter_map(|s| s.accel.map(|a| a.axes()))
        .collect();
    if readings.is_empty() {
        return Ok(FilterOutcome {
            dataset: ds.clone(),
            removed: 0,
        });
    }
    let n = readings.len() as f64;
    let mut mean = [0.0; 3];
    let mut sd = [0.0; 3];
    for axis in 0..3 {
        mean[axis] = readings.iter().map(|r| r[axis]).sum::<f64>() / n;
        let var = readings
            .iter()
            .map(|r| (r[axis] - mean[axis]).powi(2))
            .sum::<f64>()
            / n;
        sd[axis] = var.sqrt();
    }
    let is_outlier = |r: [f64; 3]| {
        (0..3).any(|axis| sd[axis] > 0.0 && (r[axis] - mean[axis]).abs() > threshold * sd[axis])
    };
    let kept: Vec<_> = ds
        .samples
        .iter()
        .filter(|s| s.accel.is_none_or(|a| !is_outlier(a.axes())))
        .cloned()
        .collect();
    let removed = ds.len() - kept.len();
    Ok(FilterOutcome {
        dataset: PathLossDataset::new(kept),
        removed,
    })
}
