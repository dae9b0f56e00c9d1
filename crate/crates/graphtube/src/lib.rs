//! Spectral computations for star metric graphs with delta-type vertex
//! couplings and for Schrodinger operators on thin two-dimensional
//! neighborhoods of such graphs ("fat graphs"), together with the explicit
//! error constants that control how well the second approximates the first.
//!
//! The crate has three layers:
//!
//! * graph side: [`graph`] describes weighted star graphs and functions on
//!   them, [`spectra`] computes their spectra (secular equations, finite
//!   difference oracles, an interpolating point-interaction operator).
//! * manifold side: [`mesh`] builds structured triangulations of branched
//!   strips with polygonal junction regions, [`fem`] assembles and solves
//!   the corresponding eigenproblems with scaled vertex potentials.
//! * the bridge: [`coupling`] realizes the identification operators between
//!   the two sides and measures their defects, [`estimates`] evaluates the
//!   closed-form constants and error bounds, and [`harness`] packages
//!   everything into reproducible experiments for the `graphtube` binary.
//!
//! The chapters of the `book/` guide are mirrored in [`guide`], so every
//! example in the book runs as a doctest.

pub mod coupling;
pub mod error;
pub mod estimates;
pub mod fem;
pub mod graph;
pub mod guide;
pub mod harness;
pub mod linalg;
pub mod mesh;
pub mod spectra;

pub use error::{Error, Result};
