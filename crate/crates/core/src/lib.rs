//! Feature-split image obfuscation.
//!
//! An encoder maps a sample to features that are cut into a public part and
//! a small privacy part. A decoder rebuilds the sample from both parts, and
//! produces an encrypted sample when the privacy part is replaced by a
//! noisy copy. A discriminator is trained to tell reconstructed from
//! encrypted samples, and the encryption model is trained on the very same
//! objective, which pushes the two output distributions apart.
//!
//! The crate also carries the classic baselines (pixelation, Gaussian blur,
//! DCT coefficient splitting), an attack-evaluation harness and the small
//! autodiff engine everything is trained with.

// `!(x > 0.0)` style guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adam;
pub mod autodiff;
pub mod checkpoint;
pub mod checks;
pub mod data;
pub mod evaluation;
pub mod experiments;
pub mod gradcheck;
pub mod image;
pub mod models;
pub mod obfuscate;
pub mod objectives;
pub mod tensor;
pub mod trainer;

pub use autodiff::{Activation, Gradients, Graph, NodeId, ParamKey};
pub use tensor::Tensor;
