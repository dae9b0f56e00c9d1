//! The book from `book/`, compiled into rustdoc.
//!
//! Each chapter of the rendered guide is included here as a documentation
//! module, so every code block in the book runs as a doctest and cannot
//! drift from the library. Build the standalone book with
//! `mdbook build book`; read it inline with `cargo doc --open`.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/star-graphs.md")]
pub mod star_graphs {}

#[doc = include_str!("../../../book/src/tubes-and-meshes.md")]
pub mod tubes_and_meshes {}

#[doc = include_str!("../../../book/src/identification-maps.md")]
pub mod identification_maps {}

#[doc = include_str!("../../../book/src/interpolating-stars.md")]
pub mod interpolating_stars {}

#[doc = include_str!("../../../book/src/error-budget.md")]
pub mod error_budget {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
