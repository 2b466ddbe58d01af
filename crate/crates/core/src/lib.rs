//! Block-based image classification with Bayesian network classifiers.
//!
//! Images are cut into a grid of blocks; each block is described by a
//! Gaussian-mixture summary of its intensities and four Haralick texture
//! statistics. k-means turns the descriptors into one discrete label per
//! block position, and naive Bayes, tree-augmented naive Bayes (TAN) or
//! forest-augmented naive Bayes (FAN) classify the resulting label vectors.

pub mod bayesnet;
pub mod clustering;
pub mod corpus;
pub mod eval;
pub mod features;
pub mod imageio;
pub mod pipeline;

use thiserror::Error;

pub use bayesnet::{BayesClassifier, ClassifierKind, DiscreteDataset, NetworkStructure, StructureOptions};
pub use clustering::{Codebook, LabelVector};
pub use corpus::DescriptorTable;
pub use eval::EvalReport;
pub use features::{BlockDescriptor, FeatureConfig};
pub use imageio::{BlockGrid, GrayImage};
pub use pipeline::{ClassifierModel, PipelineSettings};

/// Any failure in the pipeline, tagged with the stage it came from.
#[derive(Debug, Error)]
pub enum Error {
    #[error("image: {0}")]
    Image(#[from] imageio::ImageError),
    #[error("features: {0}")]
    Feature(#[from] features::FeatureError),
    #[error("clustering: {0}")]
    Cluster(#[from] clustering::ClusterError),
    #[error("bayesnet: {0}")]
    Bayes(#[from] bayesnet::BayesError),
    #[error("eval: {0}")]
    Eval(#[from] eval::EvalError),
    #[error("descriptor table: {0}")]
    Corpus(#[from] corpus::CorpusError),
    #[error("model json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("configuration: {0}")]
    Config(String),
}
