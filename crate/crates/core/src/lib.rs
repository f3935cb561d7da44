//! Discrete directed spanning forest on `Z^d`.
//!
//! Every vertex of the lattice is open with probability `p`. Each vertex is
//! joined to the L1-nearest open vertex strictly above it in the last
//! coordinate, with ties broken by the smaller uniform value. Following the
//! edges from any vertex gives an infinite path; this crate builds those
//! paths, runs several of them jointly with their shared history, detects
//! regenerations, and provides the statistical experiments built on top.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod domination;
pub mod error;
pub mod exploration;
pub mod field;
pub mod flow;
pub mod replicas;
pub mod scaling;
pub mod stats;
pub mod successor;

pub use error::{Error, Result};
pub use field::{Environment, Field, FieldParams, Mirrored, Vertex};
