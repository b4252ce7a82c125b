//! Dataset layer: interaction graph, content features, splits, synthesis.

pub mod features;
pub mod graph;
pub mod split;
pub mod synth;

pub use features::{load_dense_block, TrackFeatureTable, GENRE_DIM, IMAGE_EMB_DIM, NAME_EMB_DIM, SONIC_DIM};
pub use graph::{ArtistId, GraphBuilder, GraphStats, InteractionGraph, PlaylistId, TrackId};
pub use split::{split_peek_holdout, split_playlists, PeekHoldout, SplitAssignment, SplitLabel};
pub use synth::{generate_synthetic, SynthData, SynthSpec};
