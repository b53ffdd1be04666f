//! Entire-function approximation of subharmonic growth profiles.
//!
//! The crate atomizes the Riesz measure of a growth profile into unit cells,
//! evaluates the error `log|f| - u` of the resulting zero set, covers the
//! set where that error exceeds a logarithmic budget, and compares per-band
//! radius sums with the theoretical lower bounds. It also ships numerical
//! checks of the harmonic-majorant lemmas, Green functions, the
//! Poisson–Jensen formula and Borel-type growth lemmas.

pub mod atomize;
pub mod borel;
pub mod config;
pub mod error;
pub mod exceptional;
pub mod harmonic;
pub mod io;
pub mod measure;
pub mod pipeline;
pub mod potential;
pub mod profiles;
pub mod quadrature;
pub mod suite;

pub use error::{Error, Result};
