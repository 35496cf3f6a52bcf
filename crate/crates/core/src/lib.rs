//! Numerics for the Landau–Pekar polaron: the Pekar minimizer, coupled
//! electron–phonon dynamics on a periodic grid, projections onto the
//! minimizer manifolds, and effective-mass experiments.

pub mod dynamics;
pub mod error;
pub mod manifold;
pub mod mass;
pub mod pekar;
pub mod spectral;
#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
