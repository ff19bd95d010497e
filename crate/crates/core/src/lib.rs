//! Numerics for harmonic maps into round spheres on degenerating annuli.
//!
//! The crate covers log-polar and two-chart sphere grids, Lorentz norms,
//! Fourier splitting of harmonic fields, Wente-type Poisson solves on the
//! disk, explicit and glued sphere-valued maps, weighted Jacobi spectra with
//! Morse index and nullity counts, and the series bookkeeping used to bound
//! neck energies.

pub mod error;
pub mod experiments;
pub mod grid;
pub mod harmonic_tools;
pub mod linalg;
pub mod lorentz;
pub mod maps;
pub mod par;
pub mod series;
pub mod spectral;
pub mod wente;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
