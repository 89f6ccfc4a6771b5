pub mod align;
pub mod embedding;
pub mod gradsuite;
pub mod harness;
pub mod error;
pub mod linalg;
pub mod merge;
pub mod metrics;
pub mod multitask;
pub mod classifiers;
pub mod nn;
pub mod sent_align;

pub use error::{Error, Result};
