use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::check_len;

/// Error statistics of one model on one evaluation set.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_id: String,
    pub dataset_id: String,
    pub split: String,
    pub n: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Pearson correlation of targets and outputs; absent for constant series.
    pub r: Option<f64>,
    pub r_squared: Option<f64>,
    /// `target - output` per sample, in evaluation order.
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl EvalReport {
    pub fn labeled(mut self, model_id: &str, dataset_id: &str, split: &str) -> Self {
        self.model_id = model_id.to_string();
        self.dataset_id = dataset_id.to_string();
        self.split = split.to_string();
        self
    }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// MAE, RMSE, Pearson r and R^2 of `outputs` against `targets`.
pub fn compute_metrics(targets: &[f64], outputs: &[f64]) -> Result<EvalReport> {
    check_len(targets.len(), outputs.len())?;
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = targets.len();
    let residuals: Vec<f64> = targets.iter().zip(outputs).map(|(t, o)| t - o).collect();
    let mae = residuals.iter().map(|r| r.abs()).sum::<f64>() / n as f64;
    let ss_res: f64 = residuals.iter().map(|r| r * r).sum();
    let rmse = (ss_res / n as f64).sqrt();

    let (mt, mo) = (mean(targets), mean(outputs));
    let stt: f64 = targets.iter().map(|t| (t - mt).powi(2)).sum();
    let soo: f64 = outputs.iter().map(|o| (o - mo).powi(2)).sum();
    let sto: f64 = targets.iter().zip(outputs).map(|(t, o)| (t - mt) * (o - mo)).sum();
    let r = (stt > 0.0 && soo > 0.0).then(|| (sto / (stt * soo).sqrt()).clamp(-1.0, 1.0));
    let r_squared = (stt > 0.0).then(|| 1.0 - ss_res / stt);
    Ok(EvalReport {
        n,
        rmse,
        mae,
        r,
        r_squared,
        residuals,
        ..EvalReport::default()
    })
}

/// Empirical CDF of residuals: one `(value, P[R <= value])` per distinct value.
pub fn residual_cdf(residuals: &[f64]) -> Result<Vec<(f64, f64)>> {
    if residuals.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("non-finite residual"));
    }
    let mut v = residuals.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, &r) in v.iter().enumerate() {
        let p = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == r => last.1 = p,
            _ => out.push((r, p)),
        }
    }
    Ok(out)
}

pub const CDF_HEADER: &str = "residual_db,cdf";

pub fn residual_cdf_csv(residuals: &[f64]) -> Result<String> {
    let mut s = format!("{CDF_HEADER}\n");
    for (r, p) in residual_cdf(residuals)? {
        let _ = writeln!(s, "{r},{p}");
    }
    Ok(s)
}

/// Writes the residual CDF of `report` as `residual_db,cdf` CSV.
pub fn export_residual_cdf(report: &EvalReport, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = residual_cdf_csv(&report.residuals)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a residual CDF CSV, checking sort order and monotonicity.
pub fn parse_residual_cdf(bytes: &[u8]) -> Result<Vec<(f64, f64)>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CDF_HEADER => {}
        other => {
            return Err(Error::HeaderMismatch {
                expected: CDF_HEADER.to_string(),
                found: other.unwrap_or("").to_string(),
            })
        }
    }
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let bad = || Error::invalid(format!("malformed CDF row {}", i + 1));
        let (a, b) = line.split_once(',').ok_or_else(bad)?;
        let r: f64 = a.parse().map_err(|_| bad())?;
        let p: f64 = b.parse().map_err(|_| bad())?;
        if !r.is_finite() || !(p > 0.0 && p <= 1.0) {
            return Err(bad());
        }
        if let Some(&(lr, lp)) = out.last() {
            if r <= lr || p < lp {
                return Err(Error::invalid(format!("CDF not increasing at row {}", i + 1)));
            }
        }
        out.push((r, p));
    }
    match out.last() {
        Some(&(_, 1.0)) => Ok(out),
        _ => Err(Error::invalid("CDF must end at 1")),
    }
}
