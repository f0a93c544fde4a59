//! Region-aware exposure correction.
//!
//! A trainable network that predicts a soft under/over-exposure mask,
//! normalizes the two exposure regions separately with mask-aware
//! instance normalization, restores detail with mixed-scale spatial
//! convolutions and dual channel-wise self-attention, and is optimized
//! with reconstruction, color, mask and exposure-contrastive objectives.

pub mod autograd;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod model;
pub mod nn;
pub mod tensor;
pub mod training;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use tensor::{Float, Tensor};
