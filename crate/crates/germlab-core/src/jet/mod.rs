//! Sparse truncated power-series arithmetic over complex coefficients.
//!
//! Every formal computation in the crate runs on these three types:
//! [`MultiIndex`] exponent vectors, scalar [`PolyJet`] series, and germ
//! tuples [`GermJet`] with an invertible linear part. All operations are
//! pure functions of immutable inputs.

mod germ;
mod index;
mod poly;

pub use germ::GermJet;
pub use index::{indices_of_degree, MultiIndex};
pub use poly::{PolyJet, PRUNE_EPS};
