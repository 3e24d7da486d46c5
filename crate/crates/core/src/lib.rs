//! Channel modeling for vehicular visible light communication links.
//!
//! The crate covers the full desk-scale pipeline: CSV datasets and a
//! calibrated synthetic generator, classical curve-fit path-loss models,
//! from-scratch MLP / RBF network / random forest regressors, k-means
//! variance-region labeling, permutation feature importance, and an
//! experiment harness with grid search and cross-validation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod clustering;
pub mod dataset;
pub mod error;
pub mod forest;
pub mod harness;
pub mod model;
pub mod neuralnet;
pub mod rng;
pub mod synthgen;

pub use error::{Error, Result};
