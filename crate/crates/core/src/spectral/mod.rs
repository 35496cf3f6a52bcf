//! Periodic grids, spectral kernels, interaction fields and energies.
//!
//! Fourier convention: forward transform with `e^{-ik·x}`, unnormalized sums,
//! the inverse carries `1/N³`. Multipliers `|k|^{-1}` and `|k|^{-2}` vanish on
//! the zero mode.

mod energy;
pub mod fft;
mod field;
mod grid;
mod ops;
pub mod snapshot;
pub mod sum;
pub mod testing;

pub use energy::{
    electron_observables, energy_e, energy_g, expectation, ElectronObservables, EnergyBreakdown,
    BOUNDARY_MASS_TOL, NORM_TOL,
};
pub(crate) use energy::energy_g_unchecked;
pub use field::{ComplexField, Role};
pub use grid::GridSpec;
pub use ops::{
    apply_h, apply_multiplier, apply_real_multiplier, apply_xp, derivative, forward, frac_laplacian_apply,
    gradient, inverse, kinetic, laplacian, potential_of, sigma_of, translate, FracPower,
};

pub const FOURIER_CONVENTION: &str =
    "forward: sum_x f(x) exp(-i k.x), unnormalized; inverse: (1/N^3) sum_k; k = 2*pi*m/L, m in [-N/2, N/2)";
