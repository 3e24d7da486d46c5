//! Classical distance-only path-loss models and their least-squares fits.
//!
//! All families are fitted and evaluated in dB with transmit power
//! normalized to 1, so `eval` returns path loss directly.

pub mod lm;

use std::collections::BTreeMap;
use std::f64::consts::{LN_2, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use lm::{CurveModel, LmConfig};

/// Photodiode active area used as the Lambertian aperture, m^2.
pub const DEFAULT_APERTURE_M2: f64 = 1e-6;
/// Clear-weather extinction coefficient, 1/m.
pub const CLEAR_WEATHER_EXTINCTION: f64 = 1.5e-5;
/// Jittered restarts added to the default two-term start.
pub const TWO_TERM_RESTARTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitFamily {
    Lambertian,
    Linear,
    #[serde(alias = "exp")]
    Exponential,
    #[serde(alias = "twoterm")]
    TwoTerm,
}

impl FitFamily {
    pub const ALL: [FitFamily; 4] = [
        FitFamily::Lambertian,
        FitFamily::Linear,
        FitFamily::Exponential,
        FitFamily::TwoTerm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitFamily::Lambertian => "lambertian",
            FitFamily::Linear => "linear",
            FitFamily::Exponential => "exponential",
            FitFamily::TwoTerm => "two_term",
        }
    }

    fn n_coefficients(self) -> usize {
        match self {
            FitFamily::TwoTerm => 4,
            _ => 2,
        }
    }
}

impl fmt::Display for FitFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lambertian" => Ok(FitFamily::Lambertian),
            "linear" => Ok(FitFamily::Linear),
            "exp" | "exponential" => Ok(FitFamily::Exponential),
            "twoterm" | "two_term" => Ok(FitFamily::TwoTerm),
            _ => Err(Error::invalid(format!("unknown fit family `{s}`"))),
        }
    }
}

/// Fitted coefficients of one model family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FitModel {
    /// `H = (n+1) A cos^n(irradiance) cos(incidence) / (2 pi d^gamma)`.
    Lambertian {
        n: f64,
        gamma: f64,
        aperture_m2: f64,
        irradiance_deg: f64,
        incidence_deg: f64,
    },
    /// `PL = alpha d + beta`.
    Linear { alpha: f64, beta: f64 },
    /// `Pr/Pt = A d^(-2B) exp(-c d)`.
    Exponential { a_geom: f64, b_decay: f64, c_ext: f64 },
    /// `PL = a1 exp(a2 d) + a3 exp(a4 d)`.
    TwoTerm { a: [f64; 4] },
}

fn db_loss(gain: f64) -> f64 {
    -10.0 * gain.log10()
}

impl FitModel {
    pub fn family(&self) -> FitFamily {
        match self {
            FitModel::Lambertian { .. } => FitFamily::Lambertian,
            FitModel::Linear { .. } => FitFamily::Linear,
            FitModel::Exponential { .. } => FitFamily::Exponential,
            FitModel::TwoTerm { .. } => FitFamily::TwoTerm,
        }
    }

    /// Named coefficients in a stable order.
    pub fn coefficients(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            FitModel::Lambertian {
                n,
                gamma,
                aperture_m2,
                irradiance_deg,
                incidence_deg,
            } => vec![
                ("n", n),
                ("gamma", gamma),
                ("aperture_m2", aperture_m2),
                ("irradiance_deg", irradiance_deg),
                ("incidence_deg", incidence_deg),
            ],
            FitModel::Linear { alpha, beta } => vec![("alpha", alpha), ("beta", beta)],
            FitModel::Exponential {
                a_geom,
                b_decay,
                c_ext,
            } => vec![("a_geom", a_geom), ("b_decay", b_decay), ("c_ext", c_ext)],
            FitModel::TwoTerm { a } => {
                vec![("a1", a[0]), ("a2", a[1]), ("a3", a[2]), ("a4", a[3])]
            }
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Rebuilds a model from a family and its named coefficients.
    pub fn from_coefficients(family: FitFamily, c: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str| {
            c.get(k)
                .copied()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::invalid(format!("missing or non-finite coefficient `{k}`")))
        };
        let model = match family {
            FitFamily::Lambertian => FitModel::Lambertian {
                n: get("n")?,
                gamma: get("gamma")?,
                aperture_m2: get("aperture_m2")?,
                irradiance_deg: get("irradiance_deg")?,
                incidence_deg: get("incidence_deg")?,
            },
            FitFamily::Linear => FitModel::Linear {
                alpha: get("alpha")?,
                beta: get("beta")?,
            },
            FitFamily::Exponential => FitModel::Exponential {
                a_geom: get("a_geom")?,
                b_decay: get("b_decay")?,
                c_ext: get("c_ext")?,
            },
            FitFamily::TwoTerm => FitModel::TwoTerm {
                a: [get("a1")?, get("a2")?, get("a3")?, get("a4")?],
            },
        };
        Ok(model)
    }
}

/// Path loss in dB predicted by `model` at `distance` meters.
pub fn eval_fit(model: &FitModel, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::invalid(format!("distance must be > 0, got {distance}")));
    }
    Ok(match *model {
        FitModel::Lambertian {
            n,
            gamma,
            aperture_m2,
            irradiance_deg,
            incidence_deg,
        } => {
            let gain = (n + 1.0) * aperture_m2 * irradiance_deg.to_radians().cos().powf(n)
                * incidence_deg.to_radians().cos()
                / (2.0 * PI * distance.powf(gamma));
            db_loss(gain)
        }
        FitModel::Linear { alpha, beta } => alpha * distance + beta,
        FitModel::Exponential {
            a_geom,
            b_decay,
            c_ext,
        } => db_loss(a_geom * distance.powf(-2.0 * b_decay) * (-c_ext * distance).exp()),
        FitModel::TwoTerm { a } => crate::synthgen::two_term(&a, distance),
    })
}

/// Lambertian order for a half-power semi-angle in degrees.
pub fn lambertian_order(half_power_angle_deg: f64) -> Result<f64> {
    if !(half_power_angle_deg > 0.0 && half_power_angle_deg < 90.0) {
        return Err(Error::invalid(format!(
            "half-power angle must lie in (0, 90) degrees, got {half_power_angle_deg}"
        )));
    }
    Ok(-LN_2 / half_power_angle_deg.to_radians().cos().ln())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    pub rmse: f64,
    /// Norm of residuals, `sqrt(sum r^2)`.
    pub nor: f64,
    /// Absent when the targets have zero variance.
    pub r_squared: Option<f64>,
}

/// Goodness of fit from paired targets and predictions.
pub fn goodness_of(targets: &[f64], predictions: &[f64]) -> Result<GoodnessOfFit> {
    crate::model::check_len(targets.len(), predictions.len())?;
    if targets.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = targets.len() as f64;
    let ss_res: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    let mean = targets.iter().sum::<f64>() / n;
    let ss_tot: f64 = targets.iter().map(|t| (t - mean).powi(2)).sum();
    Ok(GoodnessOfFit {
        rmse: (ss_res / n).sqrt(),
        nor: ss_res.sqrt(),
        r_squared: (ss_tot > 0.0).then(|| 1.0 - ss_res / ss_tot),
    })
}

/// Goodness of fit of `model` on `(distance, path_loss)` pairs.
pub fn goodness(model: &FitModel, distances: &[f64], targets: &[f64]) -> Result<GoodnessOfFit> {
    crate::model::check_len(distances.len(), targets.len())?;
    let pred = distances
        .iter()
        .map(|&d| eval_fit(model, d))
        .collect::<Result<Vec<_>>>()?;
    goodness_of(targets, &pred)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub model: FitModel,
    pub converged: bool,
    pub iterations: usize,
    pub sse: f64,
    /// Per-iteration SSE of the winning start (closed-form fits: one entry).
    pub sse_trace: Vec<f64>,
}

/// JSON view of a fitted baseline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSummary {
    pub family: FitFamily,
    pub coefficients: BTreeMap<String, f64>,
    pub rmse_db: f64,
    pub nor: f64,
    pub r_squared: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl FitSummary {
    pub fn new(fit: &FitResult, gof: &GoodnessOfFit) -> Self {
        FitSummary {
            family: fit.model.family(),
            coefficients: fit.model.coefficients(),
            rmse_db: gof.rmse,
            nor: gof.nor,
            r_squared: gof.r_squared,
            converged: fit.converged,
            iterations: fit.iterations,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn model(&self) -> Result<FitModel> {
        FitModel::from_coefficients(self.family, &self.coefficients)
    }
}

/// Ordinary least squares `y = slope x + intercept`.
fn simple_ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if !(sxx > 1e-12 * (1.0 + mx * mx) * n) {
        return Err(Error::Singular("regressor has no spread".into()));
    }
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

fn closed_form(model: FitModel, d: &[f64], y: &[f64]) -> Result<FitResult> {
    let pred = d.iter().map(|&x| eval_fit(&model, x)).collect::<Result<Vec<_>>>()?;
    let sse = y.iter().zip(&pred).map(|(a, b)| (a - b).powi(2)).sum();
    Ok(FitResult {
        model,
        converged: true,
        iterations: 1,
        sse,
        sse_trace: vec![sse],
    })
}

struct TwoTermCurve;

impl CurveModel for TwoTermCurve {
    fn n_params(&self) -> usize {
        4
    }

    fn eval(&self, p: &[f64], d: f64, g: &mut [f64]) -> f64 {
        let e1 = (p[1] * d).exp();
        let e2 = (p[3] * d).exp();
        g[0] = e1;
        g[1] = p[0] * d * e1;
        g[2] = e2;
        g[3] = p[2] * d * e2;
        p[0] * e1 + p[2] * e2
    }
}

/// Default two-term start for targets `y`.
pub fn two_term_init(y: &[f64]) -> [f64; 4] {
    let ymax = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    [ymax, 0.001, -ymax / 2.0, -0.05]
}

fn jittered_starts(p0: [f64; 4]) -> Vec<[f64; 4]> {
    let mut r = rng::substream(0, "two_term_jitter");
    let mut starts = vec![p0];
    for _ in 0..TWO_TERM_RESTARTS {
        let mut p = p0;
        for v in &mut p {
            *v *= r.random_range(0.5..1.5);
        }
        starts.push(p);
    }
    starts
}

/// Least-squares fit of `family` to `(distance, path_loss)` pairs in dB.
///
/// `init` seeds the two-term solver; closed-form families ignore it.
pub fn fit_model(
    family: FitFamily,
    distances: &[f64],
    targets: &[f64],
    init: Option<&[f64]>,
) -> Result<FitResult> {
    crate::model::check_len(distances.len(), targets.len())?;
    if distances.iter().chain(targets).any(|v| !v.is_finite()) {
        return Err(Error::invalid("fit data must be finite"));
    }
    if distances.iter().any(|&d| !(d > 0.0)) {
        return Err(Error::invalid("fit distances must be > 0"));
    }
    let mut distinct = distances.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let need = family.n_coefficients().max(4);
    if distinct.len() < need {
        return Err(Error::invalid(format!(
            "need at least {need} distinct distances, got {}",
            distinct.len()
        )));
    }

    match family {
        FitFamily::Linear => {
            let (alpha, beta) = simple_ols(distances, targets)?;
            closed_form(FitModel::Linear { alpha, beta }, distances, targets)
        }
        FitFamily::Lambertian => {
            let x: Vec<f64> = distances.iter().map(|d| 10.0 * d.log10()).collect();
            let (gamma, c0) = simple_ols(&x, targets)?;
            let n = 2.0 * PI * 10f64.powf(-c0 / 10.0) / DEFAULT_APERTURE_M2 - 1.0;
            let model = FitModel::Lambertian {
                n,
                gamma,
                aperture_m2: DEFAULT_APERTURE_M2,
                irradiance_deg: 0.0,
                incidence_deg: 0.0,
            };
            closed_form(model, distances, targets)
        }
        FitFamily::Exponential => {
            let c = CLEAR_WEATHER_EXTINCTION;
            let log_e = std::f64::consts::E.log10();
            let x: Vec<f64> = distances.iter().map(|d| 20.0 * d.log10()).collect();
            let y: Vec<f64> = distances
                .iter()
                .zip(targets)
                .map(|(d, pl)| pl - 10.0 * c * d * log_e)
                .collect();
            let (b_decay, c0) = simple_ols(&x, &y)?;
            let model = FitModel::Exponential {
                a_geom: 10f64.powf(-c0 / 10.0),
                b_decay,
                c_ext: c,
            };
            closed_form(model, distances, targets)
        }
        FitFamily::TwoTerm => {
            let p0 = match init {
                Some(p) if p.len() == 4 => [p[0], p[1], p[2], p[3]],
                Some(p) => {
                    return Err(Error::ShapeMismatch {
                        expected: 4,
                        actual: p.len(),
                    })
                }
                None => two_term_init(targets),
            };
            let cfg = LmConfig::default();
            let mut best: Option<lm::LmOutcome> = None;
            for start in jittered_starts(p0) {
                let Ok(out) = lm::minimize(&TwoTermCurve, distances, targets, &start, &cfg) else {
                    continue;
                };
                if best.as_ref().is_none_or(|b| out.sse < b.sse) {
                    best = Some(out);
                }
            }
            let best = best.ok_or_else(|| Error::invalid("no two-term start was finite"))?;
            Ok(FitResult {
                model: FitModel::TwoTerm {
                    a: [best.params[0], best.params[1], best.params[2], best.params[3]],
                },
                converged: best.converged,
                iterations: best.iterations,
                sse: best.sse,
                sse_trace: best.trace,
            })
        }
    }
}
