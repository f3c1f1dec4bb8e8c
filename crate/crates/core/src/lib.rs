//! Few-shot forest segmentation toolkit: texture-attention prototypical
//! networks with GrabCut-refined support masks, trained episodically on one
//! geography and evaluated on another.

pub mod backbone;
pub mod config;
pub mod dataio;
pub mod engine;
pub mod error;
pub mod grabcut;
pub mod losses;
pub mod params;
pub mod protoseg;
pub mod synthetic;
pub mod tensor;
pub mod texture;

pub use error::{Error, Result};
