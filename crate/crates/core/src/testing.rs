//! Shared fixtures for tests and benchmarks.

use std::sync::OnceLock;

use crate::pekar::{solve_radial, LiftOptions, PekarSolution, RadialParams, RadialSolution, RefineOptions};
use crate::spectral::GridSpec;

pub use crate::spectral::testing::random_field;

/// Default radial minimizer, computed once per process.
pub fn radial() -> &'static RadialSolution {
    static CELL: OnceLock<RadialSolution> = OnceLock::new();
    CELL.get_or_init(|| solve_radial(&RadialParams::default()).expect("radial solve"))
}

/// Polished minimizer on the small box `L = 640, N = 32`.
pub fn small() -> &'static PekarSolution {
    static CELL: OnceLock<PekarSolution> = OnceLock::new();
    CELL.get_or_init(|| {
        PekarSolution::lift(radial(), GridSpec::new(640.0, 32).unwrap(), &LiftOptions::default())
            .and_then(|s| s.refine(&RefineOptions::default()))
            .expect("small grid minimizer")
    })
}
