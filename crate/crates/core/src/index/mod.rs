//! Development database: standardized feature vectors, their audio
//! locations, and exact weighted nearest-neighbor search.
mod database;
mod knn;
mod stats;
mod store;

pub use database::{
    build_database, build_from_audio, file_features, CorpusFile, DbMode, DevDatabase, Entry,
    FileFeatures, FileRecord,
};
pub use knn::{knn_rows, weighted_distance, FeatureGroups, NeighborSet, WeightVector};
pub use stats::{compute_stats, standardize, StandardizationStats, DEGENERATE_SIGMA};
pub use store::AudioStore;
