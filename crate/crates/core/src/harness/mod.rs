//! Metrics, cross-validation, grid search and the end-to-end experiment runs.

mod experiment;
mod metrics;
mod models;
mod search;

pub use experiment::{
    load_cfr, load_pathloss, prepare_pathloss, run_cfr_experiment, run_pathloss_experiment,
    BaselineRow, CfrOutcome, CfrReport, DataSource, ExperimentConfig, FrequencyRow, MlpSettings,
    PathLossOutcome, PathLossReport, PreparedPathLoss, RbfSettings, RegionSummary, SplitFractions,
    SweepRow, Task, STANDARD_SWEEP,
};
pub use metrics::{
    compute_metrics, export_residual_cdf, parse_residual_cdf, residual_cdf, residual_cdf_csv,
    EvalReport, CDF_HEADER,
};
pub use models::{
    holdout, pooled_rmse, predict_table, train_model, MeanModel, ModelFamily, ModelSpec,
    SavedModel, TrainedModel, HOLDOUT_FRACTION, MODEL_FORMAT_VERSION,
};
pub use search::{
    argmin, cross_validate, fold_assignment, grid_search, grid_search_scored, CvReport, GridResult,
    GridRow, GridSpec,
};
