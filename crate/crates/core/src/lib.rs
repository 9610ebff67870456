//! Persistent-homology shape features of segmented tumors and an l1-penalized
//! functional Cox model built on them.
//!
//! The pipeline runs label volume -> signed distance transform -> cubical persistence
//! -> persistence surfaces -> functional PCA -> penalized Cox regression, with
//! hyperparameter tuning, survival statistics and a synthetic-tumor simulation study.

pub mod cox;
pub mod cubical;
pub mod error;
pub mod fpca;
pub mod imaging;
pub mod pipeline;
pub mod rng;
pub mod simulate;
pub mod surface;
pub mod survstats;
pub mod svg;
pub mod tuning;

pub use error::{Error, Result};
