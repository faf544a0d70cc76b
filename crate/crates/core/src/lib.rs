//! Shared reconstruction graphs for zero-shot prototype synthesis.
//!
//! A reconstruction graph expresses every class prototype as a sparse linear
//! combination of the others, with coefficients shared between a semantic
//! embedding space and the image feature space. Learning alternates a
//! per-class L1 solve for the coefficients with a closed-form synthesis of
//! the unseen image prototypes; the result supports nearest-prototype
//! classification (conventional and generalized zero-shot protocols),
//! spectral clustering of classes, and cross-validated selection of the two
//! regularization weights.
//!
//! The crate is organized as:
//!
//! * [`data`] — datasets, embedding spaces, prototype construction
//! * [`lasso`] — the coordinate-descent L1 solver with a KKT certificate
//! * [`srg`] — locality weights, the alternating optimization, the model
//! * [`classify`] — nearest-prototype classification and evaluation metrics
//! * [`cluster`] — balanced graphs, Laplacians, k-means, spectral clustering
//! * [`tune`] — class-stratified cross-validation over the weight grids
//! * [`synth`] — planted-truth synthetic data for end-to-end verification
//! * [`io`] — file formats for features, embeddings, models, and reports
//!
//! Per-class solves, grid points, and k-means restarts run on rayon when the
//! `parallel` feature (default) is enabled; results are identical with the
//! feature disabled or under any thread count.

pub mod classify;
pub mod cluster;
pub mod data;
pub mod error;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod parallel;
pub mod srg;
pub mod synth;
pub mod tune;

pub use error::{Result, SrgError};
