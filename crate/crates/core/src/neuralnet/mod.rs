//! From-scratch neural regressors: a two-hidden-layer MLP trained by scaled
//! conjugate gradient, and a Gaussian RBF network.

mod mlp;
mod rbf;

pub use mlp::{
    mlp_gradient, mlp_train, scg_train, DenseLayer, EpochRecord, MlpModel, MlpNetwork,
    MlpTrainConfig, StopReason, TrainTrace,
};
pub use rbf::{rbf_design_matrix, rbf_train, CenterPolicy, RbfNetwork, RIDGE_FALLBACK};
