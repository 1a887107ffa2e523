#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod geom;
pub mod io;
pub mod metrics;
pub mod multitrack;
pub mod pipeline;
pub mod raycast;
pub mod rng;
pub mod routegen;
pub mod scene;
pub mod sensors;
pub mod terrain;
pub mod timeline;

pub use error::{Error, Result};
