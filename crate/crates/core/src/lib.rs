//! Tractable probabilistic modeling of semantic maps with sum-product networks.
//!
//! The crate is organized around a small exact-inference engine for
//! sum-product networks ([`spn`]), structure generation and parameter
//! learning ([`learn`]), a robot-centric polar representation of local place
//! geometry ([`place`]), a topological semantic-map data model plus a
//! synthetic environment generator ([`semmap`]), template-based instantiation
//! of network structure over map topology ([`toponet`]), a pairwise-MRF
//! comparison model with loopy belief propagation ([`mrf`]), and an
//! experiment harness ([`harness`]) driving the whole pipeline.

pub mod harness;
pub mod learn;
pub mod metrics;
pub mod mrf;
pub mod place;
pub mod semmap;
pub mod spn;
pub mod toponet;
pub mod util;

pub use spn::{Evidence, MpeResult, NodeId, NodeKind, Spn, SpnBuilder, SpnError, VarId, VarTable};
