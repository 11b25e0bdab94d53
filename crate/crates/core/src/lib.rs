//! Feed-forward image and tabular learning built from three decoupled
//! pieces: unsupervised multi-hop Saab representation learning, supervised
//! discriminant feature selection, and lightweight decision learners. No
//! backpropagation anywhere — every module is fit in a single forward pass
//! and is exactly reproducible from its config seeds.

pub mod archive;
pub mod config;
pub mod cw;
pub mod dataset;
pub mod decision;
pub mod error;
pub mod features;
pub mod linalg;
pub mod pipeline;
pub mod rng;
pub mod saab;
pub mod tensor;
pub mod workflow;

pub use error::{GlError, Result};
