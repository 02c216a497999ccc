//! Deep clustering with a mixture of autoencoders.
//!
//! Each cluster is represented by an autoencoder; a softmax gating network
//! routes points to experts, and everything is trained jointly on the
//! mixture reconstruction likelihood. The crate also carries the pieces such
//! a pipeline needs: a small dense network engine, k-means, clustering
//! metrics and dataset I/O.

pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub use nn::Matrix;
pub mod kmeans;
pub mod metrics;
pub mod data;
pub mod damic;
