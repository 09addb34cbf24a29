//! Graph learning for keystep recognition from egocentric and exocentric
//! video features.
//!
//! Segments of a recorded take become nodes; temporal, cross-view and
//! cross-modality arcs connect them. Message-passing networks trained for
//! node classification on the full multi-view graph are evaluated on the
//! egocentric subgraph alone.

pub(crate) mod binio;
pub mod builder;
pub mod config;
pub mod data;
pub mod error;
pub mod graph;
pub mod layers;
pub mod tensor;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
