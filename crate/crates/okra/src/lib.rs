//! File formats, run configuration and pipeline stages around `okra-core`.

use std::path::PathBuf;

pub mod config;
pub mod formats;
pub mod pipeline;
pub mod stages;

// The tape allocates and frees many short-lived buffers of a few hundred
// kilobytes; the system allocator returns them to the kernel every time.
#[global_allocator]
static ALLOC: mimalloc::MiMalloc = mimalloc::MiMalloc;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] okra_core::Error),
    #[error("config error: {0}")]
    Config(String),
    #[error("missing input {}: run the {stage} stage first", path.display())]
    MissingInput { path: PathBuf, stage: &'static str },
    #[error("{}: digest {found} does not match the expected {expected}", path.display())]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        found: String,
    },
    #[error("{}:{line}: {message}", path.display())]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{0}")]
    Data(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

macro_rules! core_error {
    ($($t:ty),*) => {$(
        impl From<$t> for Error {
            fn from(e: $t) -> Self {
                Error::Core(e.into())
            }
        }
    )*};
}

core_error!(
    okra_core::kg::KgError,
    okra_core::sampler::SamplerError,
    okra_core::model::ModelError,
    okra_core::train::TrainError,
    okra_core::metrics::MetricsError,
    okra_core::synth::SynthError,
    okra_core::autodiff::AutodiffError
);

impl Error {
    /// Process exit code: 2 config, 3 missing input, 4 digest mismatch,
    /// 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::MissingInput { .. } => 3,
            Error::DigestMismatch { .. } => 4,
            _ => 1,
        }
    }
}
