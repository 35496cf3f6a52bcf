use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::field::{ComplexField, Role};
use super::grid::GridSpec;

/// Smooth-ish random complex field: white noise with a Gaussian spectral cutoff
/// and no content on the Nyquist planes.
pub fn random_field(grid: GridSpec, seed: u64) -> ComplexField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let f = ComplexField::from_values(grid, Role::Auxiliary, vals);
    let kc = std::f64::consts::PI / grid.dx() / 2.0;
    let nyq = grid.points / 2;
    super::ops::apply_real_multiplier(&f, |i| {
        let (a, b, c) = grid.split(i);
        if a == nyq || b == nyq || c == nyq {
            0.0
        } else {
            (-grid.k_squared(i) / (kc * kc)).exp()
        }
    })
}
