//! Demonstration labeling and the on-disk dataset format.

pub mod dataset;
pub mod episode;
pub mod weights;

pub use dataset::{
    append_episode, read_dataset, read_manifest, read_raw_dataset, write_dataset, write_raw_dataset, Manifest,
    DATASET_VERSION,
};
pub use episode::{frame_time, label_all, label_episode, Episode, EpisodeStep, LabeledEpisode, Observation};
pub use weights::{center_weight, completion_index, weight_at, WeightNormalizer, MISSING_CONTACT_WEIGHT};
