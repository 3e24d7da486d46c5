use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, EvalReport};
use super::models::{predict_table, train_model, ModelFamily, ModelSpec, TrainedModel};
use super::search::{grid_search, GridResult, GridSpec};
use crate::baselines::{eval_fit, fit_model, goodness_of, FitFamily, FitSummary};
use crate::clustering::{label_variance_region, RegionMode};
use crate::dataset::{
    filter_outliers, ingest_csv, split, CfrDataset, CfrFeature, Ingested, PathLossDataset,
    PathLossFeature, Schema, SplitIndices, SplitSpec, FREQ_GRID_KHZ,
};
use crate::error::{Error, Result, StageExt};
use crate::forest::ForestConfig;
use crate::model::Table;
use crate::neuralnet::{CenterPolicy, MlpTrainConfig};
use crate::synthgen::{generate_ds1, generate_ds2, GeneratorConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Pathloss,
    Cfr,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pathloss" => Ok(Task::Pathloss),
            "cfr" => Ok(Task::Cfr),
            other => Err(Error::invalid(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    Generator(GeneratorConfig),
    Csv(PathBuf),
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Generator(GeneratorConfig::default())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.6,
            validation: 0.2,
            test: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSettings {
    pub hidden: [usize; 2],
    pub train: MlpTrainConfig,
}

impl Default for MlpSettings {
    fn default() -> Self {
        MlpSettings {
            hidden: [10, 5],
            train: MlpTrainConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbfSettings {
    pub spread: f64,
    pub policy: CenterPolicy,
}

impl Default for RbfSettings {
    fn default() -> Self {
        RbfSettings {
            spread: 1.0,
            policy: CenterPolicy::default(),
        }
    }
}

/// Everything needed to reproduce one experiment run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub model: ModelFamily,
    pub data: DataSource,
    pub split: SplitFractions,
    /// Training fractions for an additional sweep; each row uses
    /// validation `min(0.2, (1 - p) / 2)` and the rest for test.
    pub train_fraction_sweep: Option<Vec<f64>>,
    pub grid: Option<GridSpec>,
    pub mlp: MlpSettings,
    pub rbf: RbfSettings,
    pub forest: ForestConfig,
    pub seed: u64,
    pub outlier_threshold: f64,
    pub region_mode: RegionMode,
    pub features: Vec<PathLossFeature>,
    pub cfr_include_vna: bool,
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            task: Task::Pathloss,
            model: ModelFamily::Rbf,
            data: DataSource::default(),
            split: SplitFractions::default(),
            train_fraction_sweep: None,
            grid: None,
            mlp: MlpSettings::default(),
            rbf: RbfSettings::default(),
            forest: ForestConfig::default(),
            seed: 0,
            outlier_threshold: crate::dataset::DEFAULT_ACCEL_THRESHOLD,
            region_mode: RegionMode::default(),
            features: PathLossFeature::ALL.to_vec(),
            cfr_include_vna: true,
            output_dir: None,
        }
    }
}

/// Training fractions of the standard sweep.
pub const STANDARD_SWEEP: [f64; 5] = [0.1, 0.3, 0.6, 0.8, 0.9];

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: ExperimentConfig = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.task == Task::Cfr && self.model == ModelFamily::Forest {
            return Err(Error::Unsupported(
                "forest regression is only available for the pathloss task".into(),
            ));
        }
        self.split_spec()?;
        if let Some(sweep) = &self.train_fraction_sweep {
            if sweep.is_empty() {
                return Err(Error::invalid("train_fraction_sweep is empty"));
            }
            for &p in sweep {
                if !(p > 0.0 && p < 1.0) {
                    return Err(Error::invalid(format!("sweep fraction {p} outside (0, 1)")));
                }
            }
        }
        if let Some(g) = &self.grid {
            g.validate()?;
        }
        if self.task == Task::Pathloss && self.features.is_empty() {
            return Err(Error::invalid("no path-loss features selected"));
        }
        if let DataSource::Generator(g) = &self.data {
            g.validate()?;
        }
        Ok(())
    }

    pub fn split_spec(&self) -> Result<SplitSpec> {
        let s = &self.split;
        SplitSpec::new(s.train, s.validation, s.test, self.seed)
    }

    /// Hyperparameters of the configured family, seeded with the experiment seed.
    pub fn model_spec(&self) -> ModelSpec {
        let spec = match self.model {
            ModelFamily::Mlp => ModelSpec::Mlp {
                hidden: self.mlp.hidden,
                train: self.mlp.train.clone(),
            },
            ModelFamily::Rbf => ModelSpec::Rbf {
                spread: self.rbf.spread,
                policy: self.rbf.policy,
            },
            ModelFamily::Forest => ModelSpec::Forest {
                config: self.forest.clone(),
            },
        };
        spec.seeded(self.seed)
    }

    pub fn feature_names(&self) -> Vec<String> {
        match self.task {
            Task::Pathloss => self.features.iter().map(|f| f.name().to_string()).collect(),
            Task::Cfr => CfrFeature::default_set(self.cfr_include_vna)
                .iter()
                .map(|f| f.name().to_string())
                .collect(),
        }
    }

    fn dataset_id(&self) -> String {
        match &self.data {
            DataSource::Generator(g) => format!("synthetic-seed{}-n{}", g.seed, g.sample_count),
            DataSource::Csv(p) => p.display().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub boundary_m: f64,
    pub high_variance_count: usize,
    pub dispersion_ratio: f64,
    pub low_confidence: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub fit: FitSummary,
    pub test: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub train_fraction: f64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub rmse: f64,
    pub mae: f64,
    /// Two-term fit on the same training rows, scored on the same test rows.
    pub two_term_rmse: Option<f64>,
    pub split_hash: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathLossReport {
    pub task: Task,
    pub model: ModelFamily,
    pub seed: u64,
    pub dataset_id: String,
    pub n_samples: usize,
    pub outliers_removed: usize,
    pub region: RegionSummary,
    pub features: Vec<String>,
    pub split_hash: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub model_spec: ModelSpec,
    pub grid: Option<GridResult>,
    pub test: EvalReport,
    /// All four fit families, trained on the training distances and
    /// evaluated on the identical test rows.
    pub baselines: Vec<BaselineRow>,
    pub sweep: Option<Vec<SweepRow>>,
}

impl PathLossReport {
    pub fn baseline(&self, family: FitFamily) -> Option<&BaselineRow> {
        self.baselines.iter().find(|b| b.fit.family == family)
    }
}

/// A finished run: the report plus in-memory artifacts.
#[derive(Clone, Debug)]
pub struct PathLossOutcome {
    pub report: PathLossReport,
    pub model: TrainedModel,
    pub train: Table,
    pub test: Table,
    /// The preprocessed (filtered, region-labeled) dataset.
    pub dataset: PathLossDataset,
    pub split: SplitIndices,
}

/// Dataset after ingest, outlier filtering and region labeling.
#[derive(Clone, Debug)]
pub struct PreparedPathLoss {
    pub dataset: PathLossDataset,
    pub n_samples: usize,
    pub outliers_removed: usize,
    pub region: RegionSummary,
}

pub fn load_pathloss(cfg: &ExperimentConfig) -> Result<PathLossDataset> {
    match &cfg.data {
        DataSource::Generator(g) => generate_ds2(g),
        DataSource::Csv(path) => match ingest_csv(path, Schema::Pathloss)? {
            Ingested::Pathloss(p) => Ok(p.dataset),
            Ingested::Cfr(_) => Err(Error::invalid("expected a path-loss CSV")),
        },
    }
}

pub fn load_cfr(cfg: &ExperimentConfig) -> Result<CfrDataset> {
    match &cfg.data {
        DataSource::Generator(g) => generate_ds1(g),
        DataSource::Csv(path) => match ingest_csv(path, Schema::Cfr)? {
            Ingested::Cfr(c) => Ok(c.dataset),
            Ingested::Pathloss(_) => Err(Error::invalid("expected a CFR CSV")),
        },
    }
}

/// Ingest, outlier filter and variance-region labeling.
pub fn prepare_pathloss(cfg: &ExperimentConfig) -> Result<PreparedPathLoss> {
    let raw = load_pathloss(cfg).stage("ingest")?;
    if raw.is_empty() {
        return Err(Error::EmptyDataset.at("ingest"));
    }
    let filtered = filter_outliers(&raw, cfg.outlier_threshold).stage("outliers")?;
    let lab = label_variance_region(&filtered.dataset, cfg.seed, cfg.region_mode).stage("clustering")?;
    Ok(PreparedPathLoss {
        n_samples: raw.len(),
        outliers_removed: filtered.removed,
        region: RegionSummary {
            boundary_m: lab.boundary_m,
            high_variance_count: lab.high_variance_count,
            dispersion_ratio: lab.dispersion_ratio,
            low_confidence: lab.low_confidence,
        },
        dataset: lab.dataset,
    })
}

fn scalar_eval(model: &dyn crate::model::Regressor, t: &Table) -> Result<EvalReport> {
    let out: Vec<f64> = predict_table(model, t)?.into_iter().map(|y| y[0]).collect();
    compute_metrics(&t.target_column(0), &out)
}

fn fit_baselines(ds: &PathLossDataset, sp: &SplitIndices, dataset_id: &str) -> Result<Vec<BaselineRow>> {
    let tr = ds.subset(&sp.train);
    let te = ds.subset(&sp.test);
    let (dtr, ytr) = (tr.distances(), tr.targets());
    let (dte, yte) = (te.distances(), te.targets());
    let mut rows = Vec::with_capacity(FitFamily::ALL.len());
    for family in FitFamily::ALL {
        let fit = fit_model(family, &dtr, &ytr, None)?;
        let preds = dte.iter().map(|&d| eval_fit(&fit.model, d)).collect::<Result<Vec<_>>>()?;
        let test = compute_metrics(&yte, &preds)?.labeled(family.name(), dataset_id, "test");
        let train_pred = dtr.iter().map(|&d| eval_fit(&fit.model, d)).collect::<Result<Vec<_>>>()?;
        let g = goodness_of(&ytr, &train_pred)?;
        rows.push(BaselineRow {
            fit: FitSummary::new(&fit, &g),
            test,
        });
    }
    Ok(rows)
}

fn two_term_test_rmse(ds: &PathLossDataset, sp: &SplitIndices) -> Result<f64> {
    let tr = ds.subset(&sp.train);
    let te = ds.subset(&sp.test);
    let fit = fit_model(FitFamily::TwoTerm, &tr.distances(), &tr.targets(), None)?;
    let preds = te.distances().iter().map(|&d| eval_fit(&fit.model, d)).collect::<Result<Vec<_>>>()?;
    Ok(compute_metrics(&te.targets(), &preds)?.rmse)
}

fn pathloss_table(ds: &PathLossDataset, features: &[PathLossFeature]) -> Result<Table> {
    Table::scalar(ds.feature_matrix(features)?, ds.targets())
}

/// Path-loss pipeline: generate or ingest, filter outliers, label variance
/// regions, split, optionally grid-search, train, and evaluate against the
/// four fitted baselines on the same test rows.
pub fn run_pathloss_experiment(cfg: &ExperimentConfig) -> Result<PathLossOutcome> {
    if cfg.task != Task::Pathloss {
        return Err(Error::invalid("run_pathloss_experiment needs task = pathloss").at("config"));
    }
    cfg.validate().stage("config")?;
    let prep = prepare_pathloss(cfg)?;
    let ds = prep.dataset;
    let dataset_id = cfg.dataset_id();

    let table = pathloss_table(&ds, &cfg.features).stage("features")?;
    let sp = split(table.len(), &cfg.split_spec().stage("split")?).stage("split")?;
    if sp.test.is_empty() || sp.train.is_empty() {
        return Err(Error::invalid("split leaves an empty train or test set").at("split"));
    }
    let (train, val, test) = (table.subset(&sp.train), table.subset(&sp.validation), table.subset(&sp.test));

    let base = cfg.model_spec();
    let grid = match &cfg.grid {
        Some(g) => Some(grid_search(g, &base, &train, &val, cfg.seed).stage("gridsearch")?),
        None => None,
    };
    let spec = grid.as_ref().map_or(base, |g| g.best_spec().clone());
    let model = train_model(&spec, &train, Some(&val)).stage("train")?;
    let test_report = scalar_eval(&model, &test)
        .stage("evaluate")?
        .labeled(cfg.model.name(), &dataset_id, "test");
    let baselines = fit_baselines(&ds, &sp, &dataset_id).stage("baselines")?;

    let sweep = match &cfg.train_fraction_sweep {
        Some(fracs) => Some(run_sweep(&ds, &table, &spec, fracs, cfg.seed).stage("sweep")?),
        None => None,
    };

    let report = PathLossReport {
        task: Task::Pathloss,
        model: cfg.model,
        seed: cfg.seed,
        dataset_id,
        n_samples: prep.n_samples,
        outliers_removed: prep.outliers_removed,
        region: prep.region,
        features: cfg.feature_names(),
        split_hash: sp.test_hash(),
        n_train: sp.train.len(),
        n_validation: sp.validation.len(),
        n_test: sp.test.len(),
        model_spec: spec,
        grid,
        test: test_report,
        baselines,
        sweep,
    };
    Ok(PathLossOutcome {
        report,
        model,
        train,
        test,
        dataset: ds,
        split: sp,
    })
}

fn run_sweep(
    ds: &PathLossDataset,
    table: &Table,
    spec: &ModelSpec,
    fracs: &[f64],
    seed: u64,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(fracs.len());
    for &p in fracs {
        let sp = split(table.len(), &SplitSpec::for_train_fraction(p, seed)?)?;
        if sp.train.is_empty() || sp.test.is_empty() {
            return Err(Error::invalid(format!("train fraction {p} leaves an empty partition")));
        }
        let val = table.subset(&sp.validation);
        let model = train_model(spec, &table.subset(&sp.train), Some(&val))?;
        let r = scalar_eval(&model, &table.subset(&sp.test))?;
        rows.push(SweepRow {
            train_fraction: p,
            n_train: sp.train.len(),
            n_validation: sp.validation.len(),
            n_test: sp.test.len(),
            rmse: r.rmse,
            mae: r.mae,
            two_term_rmse: two_term_test_rmse(ds, &sp).ok(),
            split_hash: sp.test_hash(),
        });
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyRow {
    pub freq_khz: f64,
    pub rmse: f64,
    pub mae: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfrReport {
    pub task: Task,
    pub model: ModelFamily,
    pub seed: u64,
    pub dataset_id: String,
    pub n_samples: usize,
    pub features: Vec<String>,
    pub split_hash: String,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
    pub model_spec: ModelSpec,
    pub grid: Option<GridResult>,
    /// Metrics pooled over every (sample, frequency) pair.
    pub test: EvalReport,
    pub per_frequency: Vec<FrequencyRow>,
    /// Mean of the per-frequency RMSEs.
    pub mean_frequency_rmse: f64,
    pub sweep: Option<Vec<SweepRow>>,
}

#[derive(Clone, Debug)]
pub struct CfrOutcome {
    pub report: CfrReport,
    pub model: TrainedModel,
    pub test: Table,
}

fn cfr_eval(model: &TrainedModel, t: &Table) -> Result<(EvalReport, Vec<FrequencyRow>)> {
    let out = predict_table(model, t)?;
    let flat_t: Vec<f64> = t.targets.iter().flatten().copied().collect();
    let flat_o: Vec<f64> = out.iter().flatten().copied().collect();
    let pooled = compute_metrics(&flat_t, &flat_o)?;
    let mut rows = Vec::with_capacity(FREQ_GRID_KHZ.len());
    for (k, &f) in FREQ_GRID_KHZ.iter().enumerate() {
        let o: Vec<f64> = out.iter().map(|y| y[k]).collect();
        let r = compute_metrics(&t.target_column(k), &o)?;
        rows.push(FrequencyRow {
            freq_khz: f,
            rmse: r.rmse,
            mae: r.mae,
        });
    }
    Ok((pooled, rows))
}

/// CFR pipeline: one 19-output regressor evaluated per frequency and pooled.
pub fn run_cfr_experiment(cfg: &ExperimentConfig) -> Result<CfrOutcome> {
    if cfg.task != Task::Cfr {
        return Err(Error::invalid("run_cfr_experiment needs task = cfr").at("config"));
    }
    cfg.validate().stage("config")?;
    let ds = load_cfr(cfg).stage("ingest")?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset.at("ingest"));
    }
    let dataset_id = cfg.dataset_id();
    let features = CfrFeature::default_set(cfg.cfr_include_vna);
    let table = Table::new(ds.feature_matrix(&features), ds.targets()).stage("features")?;
    let sp = split(table.len(), &cfg.split_spec().stage("split")?).stage("split")?;
    if sp.test.is_empty() || sp.train.is_empty() {
        return Err(Error::invalid("split leaves an empty train or test set").at("split"));
    }
    let (train, val, test) = (table.subset(&sp.train), table.subset(&sp.validation), table.subset(&sp.test));

    let base = cfg.model_spec();
    let grid = match &cfg.grid {
        Some(g) => Some(grid_search(g, &base, &train, &val, cfg.seed).stage("gridsearch")?),
        None => None,
    };
    let spec = grid.as_ref().map_or(base, |g| g.best_spec().clone());
    let model = train_model(&spec, &train, Some(&val)).stage("train")?;
    let (pooled, per_frequency) = cfr_eval(&model, &test).stage("evaluate")?;
    let mean_frequency_rmse =
        per_frequency.iter().map(|r| r.rmse).sum::<f64>() / per_frequency.len() as f64;

    let sweep = match &cfg.train_fraction_sweep {
        Some(fracs) => {
            let mut rows = Vec::with_capacity(fracs.len());
            for &p in fracs {
                let s = split(table.len(), &SplitSpec::for_train_fraction(p, cfg.seed)?).stage("sweep")?;
                let val = table.subset(&s.validation);
                let m = train_model(&spec, &table.subset(&s.train), Some(&val)).stage("sweep")?;
                let (r, _) = cfr_eval(&m, &table.subset(&s.test)).stage("sweep")?;
                rows.push(SweepRow {
                    train_fraction: p,
                    n_train: s.train.len(),
                    n_validation: s.validation.len(),
                    n_test: s.test.len(),
                    rmse: r.rmse,
                    mae: r.mae,
                    two_term_rmse: None,
                    split_hash: s.test_hash(),
                });
            }
            Some(rows)
        }
        None => None,
    };

    let report = CfrReport {
        task: Task::Cfr,
        model: cfg.model,
        seed: cfg.seed,
        dataset_id: dataset_id.clone(),
        n_samples: ds.len(),
        features: cfg.feature_names(),
        split_hash: sp.test_hash(),
        n_train: sp.train.len(),
        n_validation: sp.validation.len(),
        n_test: sp.test.len(),
        model_spec: spec,
        grid,
        test: pooled.labeled(cfg.model.name(), &dataset_id, "test"),
        per_frequency,
        mean_frequency_rmse,
        sweep,
    };
    Ok(CfrOutcome { report, model, test })
}
