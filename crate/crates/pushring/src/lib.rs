//! Exact formulas for the PushASEP on a ring, numerically.
//!
//! The PushASEP on `Z/LZ` moves each of `N` particles to the right at rate
//! `p` (exclusion) and to the left at rate `q = 1 - p` (pushing).  The joint
//! law of the configuration and the signed current admits exact
//! contour-integral representations built on the Bethe ansatz.  This crate
//! implements those representations at desk scale and cross-validates every
//! one of them against a brute-force master-equation solver and a
//! continuous-time Monte Carlo simulator:
//!
//! * [`ring`] — configurations, occupation variables, the deformed generator
//!   action and current bookkeeping;
//! * [`oracle`] — dense master-equation solver (matrix exponential, spectra,
//!   current laws by Fourier inversion over the deformation parameter);
//! * [`bethe`] — decoupled Bethe roots, coupled root search by the argument
//!   principle, Bethe eigenfunctions and the Fuss–Catalan series toolkit;
//! * [`contour`] — contour specifications and the three equivalent
//!   transition-probability formulas ((N+1)-fold, 1-fold, spectral);
//! * [`current`] — current distribution laws, the winding model with its
//!   method of images, and finite Fredholm determinants for flat and step
//!   initial data;
//! * [`limits`] — the relaxation-scale distributions `F1` and `F2` with
//!   their polylogarithm toolbox and the finite-size scaling maps;
//! * [`sim`] — event-driven Gillespie simulation with exact pathwise current
//!   accounting.

pub mod bethe;
pub mod contour;
pub mod current;
pub mod error;
pub mod limits;
pub mod numeric;
pub mod oracle;
pub mod ring;
pub mod sim;
pub mod table;
pub mod validate;

pub use error::{Error, Result};

/// Complex scalar used throughout.
pub type C64 = num_complex::Complex64;
