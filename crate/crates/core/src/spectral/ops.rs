use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fft::plan;
use super::field::{ComplexField, Role};
use super::grid::GridSpec;

/// Exponent `p` of `(-Δ)^p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FracPower {
    MinusOne,
    MinusHalf,
    Half,
    One,
}

impl FracPower {
    pub fn from_exponent(p: f64) -> crate::Result<Self> {
        match p {
            x if x == -1.0 => Ok(Self::MinusOne),
            x if x == -0.5 => Ok(Self::MinusHalf),
            x if x == 0.5 => Ok(Self::Half),
            x if x == 1.0 => Ok(Self::One),
            _ => Err(crate::error::param("power", format!("unsupported exponent {p}"))),
        }
    }

    fn multiplier(self, k2: f64) -> f64 {
        if k2 == 0.0 {
            return 0.0;
        }
        match self {
            Self::MinusOne => 1.0 / k2,
            Self::MinusHalf => 1.0 / k2.sqrt(),
            Self::Half => k2.sqrt(),
            Self::One => k2,
        }
    }
}

pub fn forward(f: &ComplexField) -> Vec<Complex64> {
    let mut d = f.values().to_vec();
    plan(f.grid().points).forward(&mut d);
    d
}

pub fn inverse(grid: GridSpec, role: Role, mut d: Vec<Complex64>) -> ComplexField {
    plan(grid.points).inverse(&mut d);
    ComplexField::from_values(grid, role, d)
}

/// Applies the Fourier multiplier `m(index)` to `f`.
pub fn apply_multiplier(f: &ComplexField, m: impl Fn(usize) -> Complex64 + Sync) -> ComplexField {
    let mut d = forward(f);
    d.par_iter_mut().enumerate().for_each(|(i, v)| *v *= m(i));
    inverse(*f.grid(), f.role(), d)
}

pub fn apply_real_multiplier(f: &ComplexField, m: impl Fn(usize) -> f64 + Sync) -> ComplexField {
    let mut d = forward(f);
    d.par_iter_mut().enumerate().for_each(|(i, v)| *v *= m(i));
    inverse(*f.grid(), f.role(), d)
}

pub fn frac_laplacian_apply(f: &ComplexField, p: FracPower) -> ComplexField {
    let g = *f.grid();
    apply_real_multiplier(f, |i| p.multiplier(g.k_squared(i)))
}

/// Spectral `∂_axis f`.
pub fn derivative(f: &ComplexField, axis: usize) -> ComplexField {
    let g = *f.grid();
    apply_multiplier(f, |i| Complex64::new(0.0, g.odd_wavevector(i)[axis]))
}

pub fn gradient(f: &ComplexField) -> [ComplexField; 3] {
    let g = *f.grid();
    let d = forward(f);
    std::array::from_fn(|a| {
        let mut c = d.clone();
        c.par_iter_mut()
            .enumerate()
            .for_each(|(i, v)| *v *= Complex64::new(0.0, g.odd_wavevector(i)[a]));
        inverse(g, f.role(), c)
    })
}

pub fn laplacian(f: &ComplexField) -> ComplexField {
    let g = *f.grid();
    apply_real_multiplier(f, |i| -g.k_squared(i))
}

/// `f(· - y)` by Fourier phase.
pub fn translate(f: &ComplexField, y: [f64; 3]) -> ComplexField {
    if y == [0.0; 3] {
        return f.clone();
    }
    let g = *f.grid();
    apply_multiplier(f, |i| {
        let k = g.wavevector(i);
        Complex64::from_polar(1.0, -(k[0] * y[0] + k[1] * y[1] + k[2] * y[2]))
    })
}

/// `σ_ψ = (-Δ)^{-1/2} |ψ|²`, real-valued.
pub fn sigma_of(psi: &ComplexField) -> ComplexField {
    let rho = psi.map(|v| Complex64::new(v.norm_sqr(), 0.0)).with_role(Role::Phonon);
    frac_laplacian_apply(&rho, FracPower::MinusHalf).map(|v| Complex64::new(v.re, 0.0))
}

/// `V_φ = 2 Re (-Δ)^{-1/2} φ`.
pub fn potential_of(phi: &ComplexField) -> Vec<f64> {
    let re = phi.real_part().with_role(Role::Auxiliary);
    frac_laplacian_apply(&re, FracPower::MinusHalf)
        .values()
        .iter()
        .map(|v| 2.0 * v.re)
        .collect()
}

/// `h ψ = -Δψ + V ψ`.
pub fn apply_h(potential: &[f64], psi: &ComplexField) -> ComplexField {
    let g = *psi.grid();
    assert_eq!(potential.len(), g.len(), "potential does not match grid");
    let mut out = apply_real_multiplier(psi, |i| g.k_squared(i));
    out.values_mut()
        .par_iter_mut()
        .zip(psi.values())
        .zip(potential)
        .for_each(|((o, &p), &v)| *o += v * p);
    out
}

/// `ψ_P (-Δ)^{-1} (ψ_P f)` for real `ψ_P`.
pub fn apply_xp(psi_p: &ComplexField, f: &ComplexField) -> ComplexField {
    let w = psi_p.zip_map(f, |a, b| a.re * b).expect("grid mismatch");
    let k = frac_laplacian_apply(&w, FracPower::MinusOne);
    k.zip_map(psi_p, |a, b| a * b.re).expect("grid mismatch").with_role(f.role())
}

/// `‖∇f‖²` via Parseval.
pub fn kinetic(f: &ComplexField) -> f64 {
    let g = *f.grid();
    let d = forward(f);
    let n3 = g.len() as f64;
    super::sum::sum_real(d.len(), |i| g.k_squared(i) * d[i].norm_sqr()) * g.cell_volume() / n3
}
