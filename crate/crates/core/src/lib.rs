//! Time series classification with time-aware shapelets.
//!
//! Shapelets carry per-element and per-segment weights learned against a
//! class-separation objective. Adjacent segments of the training series link
//! their closest shapelets into a weighted evolution graph, whose random-walk
//! embeddings turn every series into a fixed-width feature vector for a
//! gradient-boosted tree classifier.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the common choices.

pub mod artifact;
pub mod classify;
pub mod data;
pub mod embed;
pub mod error;
pub mod graph;
pub mod pipeline;
pub mod scalar;
pub mod shapelet;
pub mod warp;

pub use classify::{train_gbt, BoostConfig, EvalReport, GbtModel};
pub use data::{load_ucr, Dataset, Label, TimeSeries, UcrOptions};
pub use embed::{embed_series, random_walks, train_skipgram, EmbeddingModel, SeriesRepresentation, WalkConfig};
pub use error::{Error, Result};
pub use graph::{build_graph, EvolutionGraph};
pub use pipeline::{ModelBundle, PipelineConfig};
pub use scalar::Scalar;
pub use shapelet::{extract_shapelets, Shapelet, ShapeletSet, TrainConfig};
pub use warp::{dtw_exact, dtw_greedy, WarpConfig, WarpMode};

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Shapelet64 = Shapelet<f64>;
pub type Shapelet32 = Shapelet<f32>;
pub type EvolutionGraph64 = EvolutionGraph<f64>;
pub type EvolutionGraph32 = EvolutionGraph<f32>;
pub type EmbeddingModel64 = EmbeddingModel<f64>;
pub type EmbeddingModel32 = EmbeddingModel<f32>;
pub type ModelBundle64 = ModelBundle<f64>;
pub type ModelBundle32 = ModelBundle<f32>;
