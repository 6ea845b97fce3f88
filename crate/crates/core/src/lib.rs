//! Bayesian symbolic regression.
//!
//! Closed-form models are sampled from a posterior over expression trees
//! with Metropolis-Hastings moves and parallel tempering. A model's
//! description length is half its BIC plus the energy of a maximum-entropy
//! prior over operation counts; the prior's hyperparameters are fitted so
//! that sampled expressions reproduce the operation statistics of a corpus.

pub mod config;
pub mod data;
pub mod ensemble;
pub mod equilibrium;
pub mod error;
pub mod expr;
pub mod fit;
pub mod prior;
pub mod prior_fit;
pub mod sampler;
pub mod synth;

pub use config::RunConfig;
pub use data::Dataset;
pub use ensemble::PredictiveEnsemble;
pub use error::{Error, Result};
pub use expr::{ExpressionTree, OperationSet};
pub use fit::{FitConfig, FittedModel, Scorer};
pub use prior::{CorpusStats, PriorParams};
pub use sampler::{ModelTrace, SamplerConfig};
