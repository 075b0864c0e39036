//! Geometrically constrained bilinear adapters for frozen embedding spaces.
//!
//! A domain expert is an upper-triangular, identity-initialized operator
//! `W = I + Δ` acting on image embeddings from the right (`x' = x·W`).
//! Experts trained with a convex mix of contrastive alignment and an
//! orthogonality penalty stay close enough to an isometry that they can be
//! multiplied into a stack, and the stack can be folded into a projection
//! head at no inference cost.
//!
//! This crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! everything touching the filesystem live in the `geostack` crate.
#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod evaluation;
pub mod geometry;
pub(crate) mod math;
pub mod matrix;
pub mod rng;
pub mod synthesis;
pub mod training;

pub use error::{GeoError, Result};
pub use geometry::{GeoLayer, GeoStack};
pub use matrix::{Matrix, UpperTriangularMatrix};
pub use training::{EmbeddingDataset, TrainConfig, TrainReport};
