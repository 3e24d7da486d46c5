//! Sample schemas, CSV ingestion, outlier filtering, feature scaling and splits.

mod csv_io;
mod outliers;
mod scaling;
mod split;

pub use csv_io::{
    ingest_csv, parse_cfr_csv, parse_pathloss_csv, write_cfr_csv, write_pathloss_csv,
    CfrIngest, Ingested, PathLossIngest, RejectedRow, Schema, DS1_HEADER, DS2_HEADER,
    DS2_REGION_HEADER,
};
pub use outliers::{filter_outliers, FilterOutcome, DEFAULT_ACCEL_THRESHOLD};
pub use scaling::{FeatureRange, ScalingSpec};
pub use split::{split, SplitIndices, SplitSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of frequency points in a channel frequency response.
pub const CFR_POINTS: usize = 19;

/// Frequency grid of the CFR vector: 200 kHz to 2 MHz in 100 kHz steps.
pub const FREQ_GRID_KHZ: [f64; CFR_POINTS] = [
    200.0, 300.0, 400.0, 500.0, 600.0, 700.0, 800.0, 900.0, 1000.0, 1100.0, 1200.0, 1300.0,
    1400.0, 1500.0, 1600.0, 1700.0, 1800.0, 1900.0, 2000.0,
];

/// Lower and upper bound of the ambient-light sensor voltage in mV.
pub const AMBIENT_RANGE_MV: (f64, f64) = (33.0, 475.0);

/// Receiver inclination for the directed non-line-of-sight configuration.
pub const NLOS_ANGLE_DEG: f64 = 30.0;

/// Raw three-axis acceleration recorded alongside an RSS measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Accel {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Accel {
    pub fn axes(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }
}

/// One RSS-based path-loss observation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossSample {
    pub distance_m: f64,
    pub ambient_mv: f64,
    pub rx_angle_deg: f64,
    pub same_lane: bool,
    pub turbulence: bool,
    /// Set by variance-region clustering; never read from raw measurements.
    pub variance_region: Option<bool>,
    pub path_loss_db: f64,
    pub accel: Option<Accel>,
}

impl PathLossSample {
    pub fn is_nlos(&self) -> bool {
        (self.rx_angle_deg - NLOS_ANGLE_DEG).abs() < 1e-9
    }
}

/// One frequency-domain observation: 19 path-loss magnitudes in dB.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfrSample {
    pub distance_m: f64,
    pub sunload_mv: f64,
    pub rx_angle_deg: f64,
    pub vna_model: bool,
    pub cfr_db: [f64; CFR_POINTS],
}

/// Predictor columns available for path-loss models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLossFeature {
    Distance,
    Ambient,
    RxAngle,
    SameLane,
    Turbulence,
    VarianceRegion,
}

impl PathLossFeature {
    pub const ALL: [PathLossFeature; 6] = [
        PathLossFeature::Distance,
        PathLossFeature::Ambient,
        PathLossFeature::RxAngle,
        PathLossFeature::SameLane,
        PathLossFeature::Turbulence,
        PathLossFeature::VarianceRegion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PathLossFeature::Distance => "distance",
            PathLossFeature::Ambient => "ambient_light",
            PathLossFeature::RxAngle => "rx_angle",
            PathLossFeature::SameLane => "same_lane",
            PathLossFeature::Turbulence => "turbulence",
            PathLossFeature::VarianceRegion => "variance_region",
        }
    }

    fn value(self, s: &PathLossSample) -> Result<f64> {
        let flag = |b: bool| if b { 1.0 } else { 0.0 };
        Ok(match self {
            PathLossFeature::Distance => s.distance_m,
            PathLossFeature::Ambient => s.ambient_mv,
            PathLossFeature::RxAngle => s.rx_angle_deg,
            PathLossFeature::SameLane => flag(s.same_lane),
            PathLossFeature::Turbulence => flag(s.turbulence),
            PathLossFeature::VarianceRegion => flag(s.variance_region.ok_or_else(|| {
                Error::invalid("variance_region requested before region labeling")
            })?),
        })
    }
}

/// Predictor columns available for CFR models.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfrFeature {
    Distance,
    SunLoad,
    RxAngle,
    VnaModel,
}

impl CfrFeature {
    pub fn name(self) -> &'static str {
        match self {
            CfrFeature::Distance => "distance",
            CfrFeature::SunLoad => "ambient_light",
            CfrFeature::RxAngle => "rx_angle",
            CfrFeature::VnaModel => "vna_model",
        }
    }

    /// Default CFR predictors; `with_vna` appends the VNA-model flag.
    pub fn default_set(with_vna: bool) -> Vec<CfrFeature> {
        let mut v = vec![CfrFeature::Distance, CfrFeature::SunLoad, CfrFeature::RxAngle];
        if with_vna {
            v.push(CfrFeature::VnaModel);
        }
        v
    }

    fn value(self, s: &CfrSample) -> f64 {
        match self {
            CfrFeature::Distance => s.distance_m,
            CfrFeature::SunLoad => s.sunload_mv,
            CfrFeature::RxAngle => s.rx_angle_deg,
            CfrFeature::VnaModel => f64::from(u8::from(s.vna_model)),
        }
    }
}

/// An immutable collection of path-loss samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PathLossDataset {
    pub samples: Vec<PathLossSample>,
}

impl PathLossDataset {
    pub fn new(samples: Vec<PathLossSample>) -> Self {
        PathLossDataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn regions_labeled(&self) -> bool {
        !self.samples.is_empty() && self.samples.iter().all(|s| s.variance_region.is_some())
    }

    pub fn feature_matrix(&self, features: &[PathLossFeature]) -> Result<Vec<Vec<f64>>> {
        self.samples
            .iter()
            .map(|s| features.iter().map(|f| f.value(s)).collect())
            .collect()
    }

    pub fn targets(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.path_loss_db).collect()
    }

    pub fn distances(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.distance_m).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> PathLossDataset {
        PathLossDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

/// An immutable collection of CFR samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CfrDataset {
    pub samples: Vec<CfrSample>,
}

impl CfrDataset {
    pub fn new(samples: Vec<CfrSample>) -> Self {
        CfrDataset { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_matrix(&self, features: &[CfrFeature]) -> Vec<Vec<f64>> {
        self.samples
            .iter()
            .map(|s| features.iter().map(|f| f.value(s)).collect())
            .collect()
    }

    pub fn targets(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| s.cfr_db.to_vec()).collect()
    }

    pub fn subset(&self, indices: &[usize]) -> CfrDataset {
        CfrDataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn freq_grid_has_nineteen_points_including_table_columns() {
        assert_eq!(FREQ_GRID_KHZ.len(), 19);
        for f in [200.0, 1000.0, 2000.0] {
            assert!(FREQ_GRID_KHZ.contains(&f));
        }
        assert!(FREQ_GRID_KHZ.windows(2).all(|w| (w[1] - w[0] - 100.0).abs() < 1e-12));
    }

    #[test]
    fn region_feature_requires_labeling() {
        let ds = PathLossDataset::new(vec![PathLossSample {
            distance_m: 1.0,
            ambient_mv: 40.0,
            rx_angle_deg: 0.0,
            same_lane: true,
            turbulence: false,
            variance_region: None,
            path_loss_db: 20.0,
            accel: None,
        }]);
        assert!(ds.feature_matrix(&[PathLossFeature::Distance]).is_ok());
        assert!(ds.feature_matrix(&PathLossFeature::ALL).is_err());
        assert!(!ds.regions_labeled());
    }
}
