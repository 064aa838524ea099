//! Random forests that treat predictive uncertainty as information.
//!
//! A first forest learns `x -> y` and reports the ensemble spread `sigma_y`
//! next to each prediction; a second forest learns the final target `z` from
//! `x`, `y` and `sigma_y`. Two interpolations then stand in for one
//! extrapolation.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod forest;
pub mod multilayer;
pub mod persist;
pub mod realdata;
pub mod report;
pub mod theory;
pub mod tree;
pub mod validation;

pub use dataset::{Dataset, FeatureMatrix, GeneratorConfig, NoiseDistribution, NoiseSpec, TargetKind};
pub use error::{Error, Result};
pub use forest::{ForestHyperparams, ForestModel, PredictionWithUncertainty};
pub use tree::{RegressionTree, TreeHyperparams, TreeNode};
