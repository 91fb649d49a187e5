//! End-to-end orchestration: train the two networks, build the projection,
//! cluster the features, score them, and write reports.

mod config;
mod report;
mod run;

pub use config::{
    derive_seed, paper_row, DatasetSource, Mode, NetworkConfig, PaperRow, PipelineConfig, SeedPlan,
};
pub use report::{
    benchmark, emit_loss_curves, write_metrics_csv, write_run_outputs, write_sweep_csv,
    BenchmarkRow, Manifest, RunReport, StageTimings,
};
pub use run::{
    fit, load_dataset, replay, run_kmfm, run_kmfm_on, score_features, sweep_clusters,
    sweep_feature_dim, FittedModel, ModelBundle, SweepRow,
};

use crate::clustering::ClusteringError;
use crate::dataset::DatasetError;
use crate::embedding::EmbeddingError;
use crate::metrics::MetricsError;
use crate::neuralnet::NetworkError;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DatasetError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl PipelineError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code: 2 config, 3 data, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_)
            | PipelineError::Clustering(
                ClusteringError::InvalidConfig(_) | ClusteringError::DegenerateInput { .. },
            ) => 2,
            PipelineError::Data(_) | PipelineError::Io { .. } | PipelineError::Metrics(_) => 3,
            PipelineError::Network(
                NetworkError::InvalidSpec(_) | NetworkError::InvalidConfig(_),
            ) => 2,
            PipelineError::Embedding(
                EmbeddingError::BadL { .. } | EmbeddingError::InvalidKernel(_),
            ) => 2,
            PipelineError::Network(NetworkError::Io(_) | NetworkError::Checkpoint(_)) => 3,
            PipelineError::Network(_)
            | PipelineError::Embedding(_)
            | PipelineError::Clustering(_) => 4,
        }
    }
}
