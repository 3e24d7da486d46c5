use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_len, Regressor, Table};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean increase in RMSE after permuting the column.
    pub raw: f64,
    /// Standard deviation of the increase across repeats.
    pub raw_std: f64,
    /// `max(raw, 0)` divided by the sum of positive raws.
    pub normalized: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub baseline_rmse: f64,
    pub repeats: usize,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceReport {
    /// Feature names ordered by decreasing raw importance (stable).
    pub fn ranking(&self) -> Vec<&str> {
        let mut idx: Vec<usize> = (0..self.features.len()).collect();
        idx.sort_by(|&a, &b| self.features[b].raw.total_cmp(&self.features[a].raw));
        idx.iter().map(|&i| self.features[i].feature.as_str()).collect()
    }
}

fn pooled_rmse(model: &dyn Regressor, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let mut s = 0.0;
    let mut n = 0usize;
    for (x, t) in inputs.iter().zip(targets) {
        let y = model.predict(x)?;
        check_len(t.len(), y.len())?;
        for (a, b) in y.iter().zip(t) {
            s += (a - b).powi(2);
            n += 1;
        }
    }
    Ok((s / n as f64).sqrt())
}

/// Permutation importance of every input column of `data` for `model`.
///
/// Each column is shuffled `repeats` times, each shuffle drawn from its own
/// `(seed, feature, repeat)` stream.
pub fn permutation_importance(
    model: &dyn Regressor,
    data: &Table,
    names: &[String],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceReport> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if repeats == 0 {
        return Err(Error::invalid("repeats must be >= 1"));
    }
    let p = data.n_inputs();
    check_len(p, names.len())?;
    check_len(model.n_inputs(), p)?;
    let baseline = pooled_rmse(model, &data.inputs, &data.targets)?;
    let base = rng::derive_seed(seed, "permutation");

    let mut features = Vec::with_capacity(p);
    let mut inputs = data.inputs.clone();
    for (j, name) in names.iter().enumerate() {
        let original: Vec<f64> = data.inputs.iter().map(|x| x[j]).collect();
        let mut increases = Vec::with_capacity(repeats);
        for r in 0..repeats {
            let mut col = original.clone();
            col.shuffle(&mut rng::indexed(base, (j * repeats + r) as u64));
            for (row, v) in inputs.iter_mut().zip(&col) {
                row[j] = *v;
            }
            increases.push(pooled_rmse(model, &inputs, &data.targets)? - baseline);
        }
        for (row, v) in inputs.iter_mut().zip(&original) {
            row[j] = *v;
        }
        let mean = increases.iter().sum::<f64>() / repeats as f64;
        let var = increases.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
        features.push(FeatureImportance {
            feature: name.clone(),
            raw: mean,
            raw_std: var.sqrt(),
            normalized: 0.0,
        });
    }
    let positive: f64 = features.iter().map(|f| f.raw.max(0.0)).sum();
    if positive > 0.0 {
        for f in &mut features {
            f.normalized = f.raw.max(0.0) / positive;
        }
    }
    Ok(ImportanceReport {
        baseline_rmse: baseline,
        repeats,
        features,
    })
}

/// `feature,raw,normalized` CSV.
pub fn write_importance_csv(report: &ImportanceReport) -> String {
    let mut s = String::from("feature,raw,normalized\n");
    for f in &report.features {
        let _ = writeln!(s, "{},{},{}", f.feature, f.raw, f.normalized);
    }
    s
}
