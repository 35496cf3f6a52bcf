//! The Pekar minimizer: radial solve, lift to the grid, derived scalars and
//! the Hessian at the minimizer.

pub mod lobpcg;
pub mod radial;

pub use radial::{solve_radial, IterationRecord, RadialParams, RadialScalars, RadialSolution, VirialResiduals};
pub mod solution;

pub use solution::{
    coordinate_times, CoercivitySample, Discrepancy, GridScalars, HessianOptions, HessianSpectrum, LiftOptions,
    PekarSolution, RadialReference, RefineOptions, certify_grid, fft_friendly, CertifyOptions, GridCertificate, RefineReport, SandwichReport, SolutionSummary,
};
