//! Superpixel-guided training of segmentation networks from noisy labels.
//!
//! The crate is organised by pipeline stage: image and label containers
//! ([`imaging`]), SLIC superpixels and pooling ([`superpixel`]), synthetic
//! annotation noise ([`noise`]), a small differentiable U-Net ([`model`]),
//! the robust training loop ([`train`]) and the experiment harness
//! ([`harness`]).

pub mod error;
pub mod harness;
pub mod imaging;
pub mod model;
pub mod noise;
pub mod superpixel;
pub mod train;

pub use error::{Error, Result};
