//! Place-recognition descriptors learned with a triplet ratio loss.
//!
//! A small convolutional network maps an image to a fixed-length descriptor
//! whose Euclidean distances encode place dissimilarity. The crate covers the
//! network engine ([`layers`], [`network`]), the triplet objective and its SGD
//! trainer ([`loss`], [`train`]), triplet mining from pose-labelled sequences
//! ([`mining`]), and confusion-matrix evaluation ([`eval`]).

pub mod check;
pub mod config;
pub mod error;
pub mod eval;
pub mod imaging;
pub mod layers;
pub mod loss;
pub mod mining;
pub mod network;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Real, Shape4, Tensor};
