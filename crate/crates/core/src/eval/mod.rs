//! Sequence embedding, confusion matrices and diagonal-inlier curves.

pub mod confusion;
pub mod descriptors;
pub mod export;

pub use confusion::{
    confusion_matrix, diagonal_row, inlier_ratio, k_smallest_mask, normalize_confusion,
    performance_curve, top1_accuracy, ConfusionMatrix, Mask, PerformanceCurve, SelectionAxis,
};
pub use descriptors::{
    embed_sequence, load_descriptors, parse_descriptors, DescriptorSet, DESCRIPTORS_MAGIC,
};
pub use export::{
    curves_svg, parse_curve_csv, parse_matrix_csv, write_curve_csv, write_matrix_csv, write_pgm,
};
