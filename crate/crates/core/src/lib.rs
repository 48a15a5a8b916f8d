//! Numerical laboratory for renormalization of potentials over the
//! Thue-Morse subshift and the thermodynamic formalism of its induced
//! (first-return) systems.
//!
//! Module map:
//! - [`word`]: finite binary words, one-sided sequences, substitutions.
//! - [`language`]: the factor language of the Thue-Morse subshift,
//!   complexity, special words, distance levels, decomposition checks.
//! - [`accidents`]: level re-synchronization events along shift orbits.
//! - [`coding`]: the sliding-block code to the period-doubling sequence and
//!   the parity-lexicographical order.
//! - [`potential`]: potential families, Birkhoff sums, and integration
//!   against the unique invariant measure of the subshift.
//! - [`renorm`]: the renormalization operator on potentials, Cesaro means,
//!   power-scaling and fixed-point diagnostics.
//! - [`thermo`]: induced transfer operator on a cylinder disjoint from the
//!   subshift, return-word coefficient DP, pressure curves, transitions.
//! - [`interval`]: circle-covering interval maps built from a conformal
//!   eigen-measure on cylinder algebras.
//! - [`sampling`]: seeded generators for test/CLI point ensembles.

pub mod accidents;
pub mod coding;
pub mod error;
pub mod interval;
pub mod language;
pub mod potential;
pub mod renorm;
pub mod sampling;
pub mod thermo;
pub mod word;

pub use error::{Error, Result};
pub use language::{Language, Level};
pub use potential::Potential;
pub use word::{Point, Substitution, Word};
