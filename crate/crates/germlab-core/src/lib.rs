//! Classification toolkit for invertible holomorphic germs of (C^n, 0)
//! whose first eigenvalue is a root of unity while the others avoid the
//! unit circle.
//!
//! The crate computes the formal normal form of the first coordinate by
//! per-degree elimination, detects resonances of the hyperbolic spectrum,
//! builds center-curve jets, and numerically verifies the geometric
//! constructions behind the topological classification: sector-coordinate
//! conjugacies for the parabolic axis dynamics, cone-field splittings of
//! bump-extended diffeomorphisms, and fiberwise bundle conjugacies.

pub mod bundle;
pub mod center;
pub mod error;
pub mod jet;
pub mod normal_form;
pub mod samples;
pub mod sector;
pub mod spectral;

pub use error::{Error, Result};
