//! Abelian sandpile laboratory.
//!
//! The crate builds sandpile graphs from lattice subsets, stabilizes
//! configurations exactly, computes harmonic potentials on the grounded
//! network, estimates the structural constants of graph families, and runs the
//! epicenter flooding construction that bounds transient chain lengths.

pub mod engine;
pub mod epicenter;
pub mod estimators;
pub mod error;
pub mod graph;
pub mod grid_special;
pub mod potential;

pub use engine::{stabilize, Configuration, StabilizationResult, TopplingPolicy};
pub use error::{Result, SandlabError};
pub use graph::{build_sandpile, gen_family, Family, Multigraph, SandpileGraph, VertexId};
