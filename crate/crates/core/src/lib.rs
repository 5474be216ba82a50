//! Explainable multi-stakeholder job recommendation over a knowledge graph.
//!
//! Pure algorithms only: graph construction and inference, pair-subgraph
//! sampling, a reverse-mode tape, the ranking network and its baselines,
//! LambdaRANK training, ranking and fairness metrics, and a synthetic world
//! generator. File formats and the command line live in the `okra` crate.

#![no_std]

extern crate alloc;

pub mod autodiff;
pub mod baselines;
pub mod kg;
pub mod metrics;
pub mod model;
pub mod rng;
pub mod sampler;
pub mod synth;
pub mod text;
pub mod train;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Autodiff(#[from] autodiff::AutodiffError),
    #[error(transparent)]
    Kg(#[from] kg::KgError),
    #[error(transparent)]
    Sampler(#[from] sampler::SamplerError),
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Train(#[from] train::TrainError),
    #[error(transparent)]
    Metrics(#[from] metrics::MetricsError),
    #[error(transparent)]
    Synth(#[from] synth::SynthError),
}

pub type Result<T> = core::result::Result<T, Error>;
