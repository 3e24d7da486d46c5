//! Synthetic DS1 (CFR) and DS2 (path loss) generators.
//!
//! Ground truth is a two-term exponential path-loss curve plus additive
//! feature offsets; measurement noise is Gaussian with a larger spread in
//! the near field. Every sample draws from its own counter-indexed stream,
//! so output is a pure function of the config.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    Accel, CfrDataset, CfrSample, PathLossDataset, PathLossSample, AMBIENT_RANGE_MV, CFR_POINTS,
    FREQ_GRID_KHZ, NLOS_ANGLE_DEG,
};
use crate::error::{Error, Result};
use crate::rng;

/// Distance support of generated path-loss samples, in meters.
pub const DS2_DISTANCE_RANGE: (f64, f64) = (0.5, 114.0);
/// Distance support of generated CFR samples, in meters.
pub const DS1_DISTANCE_RANGE: (f64, f64) = (2.0, 20.0);
/// Two-term coefficients fitted to the 1 MHz RSS campaign.
pub const DS2_TWO_TERM: [f64; 4] = [60.34, 0.0013, -47.57, -0.05405];

const GRAVITY: f64 = 9.81;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeneratorConfig {
    /// `(a1, a2, a3, a4)` of `a1*exp(a2*d) + a3*exp(a4*d)`, in dB.
    pub base_coeffs: [f64; 4],
    /// dB added across the full 33..475 mV ambient swing.
    pub ambient_gain: f64,
    pub turbulence_offset: f64,
    pub nlos_offset: f64,
    pub nearby_lane_offset: f64,
    pub noise_sigma_low: f64,
    pub noise_sigma_high: f64,
    /// Distance below which `noise_sigma_high` applies.
    pub variance_breakpoint: f64,
    /// LED 3-dB bandwidth in Hz.
    pub led_bandwidth_3db: f64,
    pub sample_count: usize,
    pub seed: u64,
    pub feature_effects_enabled: bool,
    /// Probability that a DS2 distance is drawn log-uniformly below the
    /// breakpoint; otherwise it is uniform between breakpoint and 114 m.
    pub near_fraction: f64,
    pub same_lane_rate: f64,
    pub nlos_rate: f64,
    pub turbulence_rate: f64,
    /// Offset in dB applied to CFR samples flagged as VNA-model measurements.
    pub vna_offset: f64,
    pub vna_rate: f64,
    /// Per-frequency noise of CFR samples, dB.
    pub cfr_noise_sigma: f64,
    /// Spread of the synthetic accelerometer channels, m/s^2.
    pub accel_sigma: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            base_coeffs: DS2_TWO_TERM,
            ambient_gain: 6.0,
            turbulence_offset: 2.0,
            nlos_offset: 4.0,
            nearby_lane_offset: 8.0,
            noise_sigma_low: 2.0,
            noise_sigma_high: 6.0,
            variance_breakpoint: 38.0,
            led_bandwidth_3db: 2.0e6,
            sample_count: 7686,
            seed: 0,
            feature_effects_enabled: true,
            near_fraction: 0.5,
            same_lane_rate: 0.75,
            nlos_rate: 0.5,
            turbulence_rate: 0.2,
            vna_offset: 1.5,
            vna_rate: 0.5,
            cfr_noise_sigma: 3.5,
            accel_sigma: 0.2,
        }
    }
}

impl GeneratorConfig {
    /// Noiseless, feature-free configuration: samples lie on the base curve.
    pub fn noiseless() -> Self {
        GeneratorConfig {
            noise_sigma_low: 0.0,
            noise_sigma_high: 0.0,
            cfr_noise_sigma: 0.0,
            feature_effects_enabled: false,
            ..GeneratorConfig::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: GeneratorConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = [
            ("noise_sigma_low", self.noise_sigma_low),
            ("noise_sigma_high", self.noise_sigma_high),
            ("cfr_noise_sigma", self.cfr_noise_sigma),
            ("accel_sigma", self.accel_sigma),
        ];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        let positive = [
            ("variance_breakpoint", self.variance_breakpoint),
            ("led_bandwidth_3db", self.led_bandwidth_3db),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        let rates = [
            ("near_fraction", self.near_fraction),
            ("same_lane_rate", self.same_lane_rate),
            ("nlos_rate", self.nlos_rate),
            ("turbulence_rate", self.turbulence_rate),
            ("vna_rate", self.vna_rate),
        ];
        for (name, v) in rates {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        let offsets = [
            self.ambient_gain,
            self.turbulence_offset,
            self.nlos_offset,
            self.nearby_lane_offset,
            self.vna_offset,
        ];
        if self.base_coeffs.iter().chain(&offsets).any(|v| !v.is_finite()) {
            return Err(Error::invalid("coefficients and offsets must be finite"));
        }
        if self.sample_count == 0 {
            return Err(Error::invalid("sample_count must be > 0"));
        }
        Ok(())
    }

    fn sigma_at(&self, distance: f64) -> f64 {
        if distance < self.variance_breakpoint {
            self.noise_sigma_high
        } else {
            self.noise_sigma_low
        }
    }
}

/// `a1*exp(a2*d) + a3*exp(a4*d)`.
pub fn two_term(c: &[f64; 4], d: f64) -> f64 {
    c[0] * (c[1] * d).exp() + c[2] * (c[3] * d).exp()
}

/// Noise-free path loss in dB for one operating point.
pub fn ground_truth_pl(
    cfg: &GeneratorConfig,
    distance: f64,
    ambient_mv: f64,
    angle_deg: f64,
    same_lane: bool,
    turbulence: bool,
) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::invalid(format!("distance must be > 0, got {distance}")));
    }
    let mut pl = two_term(&cfg.base_coeffs, distance);
    if cfg.feature_effects_enabled {
        let (lo, hi) = AMBIENT_RANGE_MV;
        pl += cfg.ambient_gain * (ambient_mv - lo) / (hi - lo);
        if turbulence {
            pl += cfg.turbulence_offset;
        }
        if (angle_deg - NLOS_ANGLE_DEG).abs() < 1e-9 {
            pl += cfg.nlos_offset;
        }
        if !same_lane {
            pl += cfg.nearby_lane_offset;
        }
    }
    Ok(pl)
}

/// Single-pole LED roll-off in dB relative to DC.
pub fn rolloff_db(freq_hz: f64, f3db_hz: f64) -> f64 {
    10.0 * (1.0 + (freq_hz / f3db_hz).powi(2)).log10()
}

fn normal(rng: &mut ChaCha8Rng, sigma: f64) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (lo.ln() + rng.random::<f64>() * (hi.ln() - lo.ln())).exp()
}

fn draw_ds2_distance(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> f64 {
    let (lo, hi) = DS2_DISTANCE_RANGE;
    let knee = cfg.variance_breakpoint.clamp(lo, hi);
    let near = rng.random::<f64>() < cfg.near_fraction;
    if near || knee >= hi {
        log_uniform(rng, lo, knee)
    } else {
        knee + rng.random::<f64>() * (hi - knee)
    }
}

/// Draws `sample_count` path-loss samples.
pub fn generate_ds2(cfg: &GeneratorConfig) -> Result<PathLossDataset> {
    cfg.validate()?;
    let base = rng::derive_seed(cfg.seed, "ds2");
    let (amb_lo, amb_hi) = AMBIENT_RANGE_MV;
    let samples = (0..cfg.sample_count)
        .map(|i| {
            let mut r = rng::indexed(base, i as u64);
            let distance = draw_ds2_distance(cfg, &mut r);
            let ambient = amb_lo + r.random::<f64>() * (amb_hi - amb_lo);
            let same_lane = r.random::<f64>() < cfg.same_lane_rate;
            let nlos = r.random::<f64>() < cfg.nlos_rate;
            let turbulence = r.random::<f64>() < cfg.turbulence_rate;
            let angle = if nlos { NLOS_ANGLE_DEG } else { 0.0 };
            let truth = ground_truth_pl(cfg, distance, ambient, angle, same_lane, turbulence)?;
            let path_loss = truth + normal(&mut r, cfg.sigma_at(distance));
            let accel = Accel {
                x: normal(&mut r, cfg.accel_sigma),
                y: normal(&mut r, cfg.accel_sigma),
                z: GRAVITY + normal(&mut r, cfg.accel_sigma),
            };
            Ok(PathLossSample {
                distance_m: distance,
                ambient_mv: ambient,
                rx_angle_deg: angle,
                same_lane,
                turbulence,
                variance_region: None,
                path_loss_db: path_loss,
                accel: Some(accel),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PathLossDataset::new(samples))
}

/// Draws `sample_count` CFR samples on the fixed frequency grid.
pub fn generate_ds1(cfg: &GeneratorConfig) -> Result<CfrDataset> {
    cfg.validate()?;
    let base = rng::derive_seed(cfg.seed, "ds1");
    let (lo, hi) = DS1_DISTANCE_RANGE;
    let (amb_lo, amb_hi) = AMBIENT_RANGE_MV;
    let rolloff: Vec<f64> = FREQ_GRID_KHZ
        .iter()
        .map(|&f| rolloff_db(f * 1e3, cfg.led_bandwidth_3db))
        .collect();
    let samples = (0..cfg.sample_count)
        .map(|i| {
            let mut r = rng::indexed(base, i as u64);
            let distance = lo + r.random::<f64>() * (hi - lo);
            let sunload = amb_lo + r.random::<f64>() * (amb_hi - amb_lo);
            let nlos = r.random::<f64>() < cfg.nlos_rate;
            let vna_model = r.random::<f64>() < cfg.vna_rate;
            let angle = if nlos { NLOS_ANGLE_DEG } else { 0.0 };
            let mut dc = ground_truth_pl(cfg, distance, sunload, angle, true, false)?;
            if vna_model && cfg.feature_effects_enabled {
                dc += cfg.vna_offset;
            }
            let mut cfr_db = [0.0; CFR_POINTS];
            for (k, v) in cfr_db.iter_mut().enumerate() {
                *v = dc + rolloff[k] + normal(&mut r, cfg.cfr_noise_sigma);
            }
            Ok(CfrSample {
                distance_m: distance,
                sunload_mv: sunload,
                rx_angle_deg: angle,
                vna_model,
                cfr_db,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CfrDataset::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    // Independent evaluation of the two-term curve at the table coefficients.
    const GOLDEN: [(f64, f64); 3] = [
        (10.0, 33.42206373365357),
        (50.0, 61.20339172371559),
        (114.0, 69.87869335013092),
    ];

    #[test]
    fn golden_two_term_values() {
        let cfg = GeneratorConfig::noiseless();
        for (d, want) in GOLDEN {
            let got = ground_truth_pl(&cfg, d, 100.0, 30.0, false, true).unwrap();
            assert!((got - want).abs() < 1e-6, "d={d}: {got} vs {want}");
        }
    }

    #[test]
    fn feature_terms_add_up() {
        let cfg = GeneratorConfig::default();
        let base = two_term(&cfg.base_coeffs, 20.0);
        let pl = ground_truth_pl(&cfg, 20.0, 475.0, 30.0, false, true).unwrap();
        assert!((pl - (base + 6.0 + 2.0 + 4.0 + 8.0)).abs() < 1e-12);
        let pl = ground_truth_pl(&cfg, 20.0, 33.0, 0.0, true, false).unwrap();
        assert_eq!(pl, base);
    }

    #[test]
    fn rejects_non_positive_distance() {
        let cfg = GeneratorConfig::default();
        assert!(ground_truth_pl(&cfg, 0.0, 100.0, 0.0, true, false).is_err());
        assert!(ground_truth_pl(&cfg, -1.0, 100.0, 0.0, true, false).is_err());
    }

    #[test]
    fn rolloff_reference_points() {
        assert!((rolloff_db(2e6, 2e6) - 3.010_299_956_639_812).abs() < 1e-12);
        assert!((rolloff_db(200e3, 2e6) - 1.01f64.log10() * 10.0).abs() < 1e-15);
        assert!((rolloff_db(200e3, 2e6) - 0.0432).abs() < 1e-4);
        assert_eq!(rolloff_db(0.0, 2e6), 0.0);
    }

    #[test]
    fn noiseless_ds2_lies_on_curve() {
        let cfg = GeneratorConfig {
            sample_count: 2000,
            ..GeneratorConfig::noiseless()
        };
        let ds = generate_ds2(&cfg).unwrap();
        let worst = ds
            .samples
            .iter()
            .map(|s| (s.path_loss_db - two_term(&cfg.base_coeffs, s.distance_m)).abs())
            .fold(0.0, f64::max);
        assert_eq!(worst, 0.0);
        assert!(ds.samples.iter().all(|s| s.distance_m >= 0.5 && s.distance_m <= 114.0));
    }

    #[test]
    fn default_ds2_mean_matches_campaign() {
        let ds = generate_ds2(&GeneratorConfig::default()).unwrap();
        assert_eq!(ds.len(), 7686);
        let mean = ds.targets().iter().sum::<f64>() / ds.len() as f64;
        assert!((mean - 50.81).abs() <= 5.0, "mean {mean}");
        assert!(ds.samples.iter().all(|s| (33.0..=475.0).contains(&s.ambient_mv)));
    }

    #[test]
    fn deterministic_in_seed() {
        let cfg = GeneratorConfig {
            sample_count: 300,
            seed: 11,
            ..GeneratorConfig::default()
        };
        assert_eq!(generate_ds2(&cfg).unwrap(), generate_ds2(&cfg).unwrap());
        assert_eq!(generate_ds1(&cfg).unwrap(), generate_ds1(&cfg).unwrap());
        let other = GeneratorConfig { seed: 12, ..cfg.clone() };
        assert_ne!(generate_ds2(&cfg).unwrap(), generate_ds2(&other).unwrap());
    }

    #[test]
    fn near_field_noise_is_wider() {
        let cfg = GeneratorConfig {
            sample_count: 6000,
            feature_effects_enabled: false,
            ..GeneratorConfig::default()
        };
        let ds = generate_ds2(&cfg).unwrap();
        let sd = |near: bool| {
            let r: Vec<f64> = ds
                .samples
                .iter()
                .filter(|s| (s.distance_m < 38.0) == near)
                .map(|s| s.path_loss_db - two_term(&cfg.base_coeffs, s.distance_m))
                .collect();
            assert!(r.len() >= 1000);
            let m = r.iter().sum::<f64>() / r.len() as f64;
            (r.iter().map(|v| (v - m).powi(2)).sum::<f64>() / r.len() as f64).sqrt()
        };
        let (hi, lo) = (sd(true), sd(false));
        assert!(hi > lo);
        assert!(hi / lo > 3.0 * 0.75 && hi / lo < 3.0 / 0.75, "ratio {}", hi / lo);
    }

    #[test]
    fn noiseless_cfr_is_monotone_in_frequency() {
        let cfg = GeneratorConfig {
            sample_count: 500,
            ..GeneratorConfig::noiseless()
        };
        let ds = generate_ds1(&cfg).unwrap();
        for s in &ds.samples {
            assert!(s.cfr_db.windows(2).all(|w| w[1] >= w[0]));
            assert!((2.0..=20.0).contains(&s.distance_m));
        }
    }

    #[test]
    fn default_cfr_band_spread_is_about_three_db() {
        let ds = generate_ds1(&GeneratorConfig::default()).unwrap();
        let n = ds.len() as f64;
        let spread = ds
            .samples
            .iter()
            .map(|s| s.cfr_db[CFR_POINTS - 1] - s.cfr_db[0])
            .sum::<f64>()
            / n;
        assert!((spread - 2.967).abs() < 0.4, "spread {spread}");
    }

    #[test]
    fn config_json_validation() {
        let cfg = GeneratorConfig::from_json(r#"{"seed": 5, "noise_sigma_high": 3.0}"#).unwrap();
        assert_eq!(cfg.seed, 5);
        assert_eq!(cfg.noise_sigma_low, 2.0);
        assert!(GeneratorConfig::from_json(r#"{"noise_sigma_low": -1}"#).is_err());
        assert!(GeneratorConfig::from_json(r#"{"bogus": 1}"#).is_err());
        assert!(GeneratorConfig::from_json(r#"{"sample_count": 0}"#).is_err());
        let text = serde_json::to_string(&GeneratorConfig::default()).unwrap();
        assert_eq!(GeneratorConfig::from_json(&text).unwrap(), GeneratorConfig::default());
    }
}
