//! Graph-based music recommendation with popularity-bias-aware training.
//!
//! The crate builds track embeddings from a bipartite playlist-track graph
//! (random-walk neighborhoods feeding a two-layer aggregation encoder),
//! trains them with a focal utility loss optionally combined with a
//! rank-fairness loss that ties the learned similarity space to a content
//! similarity space, recommends tracks for partially observed playlists,
//! and evaluates both accuracy and long-tail exposure.

pub mod data;
pub mod encoder;
pub mod error;
pub mod evaluator;
pub mod experiments;
pub mod objective;
pub mod output;
pub mod popularity;
pub mod recommender;
pub mod rng;
pub mod sampler;
pub mod trainer;

pub use error::{Error, Result};
