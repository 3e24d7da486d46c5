use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_len;

/// Observed range of one feature. Constant features pass through unscaled.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRange {
    pub min: f64,
    pub max: f64,
    pub constant: bool,
}

/// Per-feature affine map from the observed `[min, max]` onto `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingSpec {
    pub features: Vec<FeatureRange>,
}

impl ScalingSpec {
    /// Fits the map to the column ranges of `rows`.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let width = first.len();
        let mut features: Vec<FeatureRange> = first
            .iter()
            .map(|&v| FeatureRange {
                min: v,
                max: v,
                constant: false,
            })
            .collect();
        for row in rows {
            check_len(width, row.len())?;
            for (r, &v) in features.iter_mut().zip(row) {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite value {v} in scaler input")));
                }
                r.min = r.min.min(v);
                r.max = r.max.max(v);
            }
        }
        for r in &mut features {
            r.constant = !(r.max > r.min);
        }
        Ok(ScalingSpec { features })
    }

    pub fn width(&self) -> usize {
        self.features.len()
    }

    /// Indices of features flagged as constant (left unscaled).
    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.features.len())
            .filter(|&i| self.features[i].constant)
            .collect()
    }

    pub fn apply(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.width(), values.len())?;
        Ok(self
            .features
            .iter()
            .zip(values)
            .map(|(r, &v)| {
                if r.constant {
                    v
                } else {
                    2.0 * (v - r.min) / (r.max - r.min) - 1.0
                }
            })
            .collect())
    }

    pub fn invert(&self, values: &[f64]) -> Result<Vec<f64>> {
        check_len(self.width(), values.len())?;
        Ok(self
            .features
            .iter()
            .zip(values)
            .map(|(r, &s)| {
                if r.constant {
                    s
                } else {
                    (s + 1.0) * 0.5 * (r.max - r.min) + r.min
                }
            })
            .collect())
    }

    pub fn apply_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.apply(r)).collect()
    }

    pub fn invert_rows(&self, rows: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        rows.iter().map(|r| self.invert(r)).collect()
    }

    /// True when any scaled feature of `values` lies outside the fitted range.
    /// Such values are still mapped (linear extrapolation).
    pub fn is_extrapolation(&self, values: &[f64]) -> bool {
        self.features
            .iter()
            .zip(values)
            .any(|(r, &v)| !r.constant && (v < r.min || v > r.max))
    }
}
