//! Constrained generation with machine-checkable evidence.
//!
//! The pipeline has four stages:
//!
//! 1. [`graph`] and [`constraints`] hold the typed domain model and the
//!    stratified constraints anchored to it.
//! 2. [`compiler`] turns structural constraints (regex, a JSON-Schema subset,
//!    GBNF with bounded unfolding) into pruned, prefix-closed DFAs.
//! 3. [`decoder`] drives a token proposer under DFA masking and records an
//!    audit trail; [`validators`] certify the finished artifact against
//!    semantic shapes and linear logic formulas.
//! 4. [`evidence`] composes the per-layer traces, seals them, and stores them
//!    in a content-addressed registry; [`repair`] consumes failing evidence
//!    and patches the artifact in dependency order.

pub mod canonical;
pub mod clock;
pub mod compiler;
pub mod constraints;
pub mod decoder;
pub mod digest;
pub mod evidence;
pub mod graph;
pub mod repair;
pub mod validators;

pub use digest::Digest;
