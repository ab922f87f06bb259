//! Pose-labelled sequences, triplet mining and the synthetic dataset.

pub mod manifest;
pub mod miner;
pub mod stream;
pub mod synth;
pub mod triplet_io;

pub use manifest::{load_manifest, parse_manifest, FrameRecord, Pose, SequenceManifest};
pub use miner::{
    mine_cross_condition_triplets, mine_viewpoint_triplets, parse_alignment, FrameRef, MiningOutcome,
    MiningRule, RuleKind, Shortfall, Triplet, TripletMiner, TripletSource,
};
pub use stream::{TripletStream, MAX_CONSECUTIVE_REJECTIONS};
pub use synth::{generate_synthetic_dataset, render_place, SynthConfig};
pub use triplet_io::{parse_triplets, write_triplets, PoseIndex};
