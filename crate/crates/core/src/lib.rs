//! Surveillance video indexing: optical-flow driven level-set segmentation of
//! moving objects, a bank of visual descriptors, label codebooks, incremental
//! SVM ensembles, retrieval/detection metrics and an XML shot index.

pub mod codebook;
pub mod config;
pub mod ensemble;
pub mod evalmetrics;
pub mod error;
pub mod features;
pub mod imgcore;
pub mod optflow;
pub mod pipeline;
pub mod segment;
pub mod store;
pub mod synth;

pub use error::{Error, ErrorKind, Result};
