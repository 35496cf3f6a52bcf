use serde::{Deserialize, Serialize};

use super::field::ComplexField;
use super::ops::{forward, kinetic, potential_of, sigma_of};
use super::sum::{sum_real, sum_vec3};
use crate::error::{param, Result};

/// Tolerance on `‖ψ‖ - 1` accepted by the energy routines.
pub const NORM_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub total: f64,
    pub kinetic: f64,
    pub interaction: f64,
    pub field: f64,
}

fn check_norm(psi: &ComplexField) -> Result<()> {
    let n = psi.norm();
    if (n - 1.0).abs() > NORM_TOL {
        return Err(param("psi", format!("electron field is not normalized (norm {n:.12})")));
    }
    Ok(())
}

/// `⟨ψ, V ψ⟩` for a real potential.
pub fn expectation(potential: &[f64], psi: &ComplexField) -> f64 {
    let v = psi.values();
    sum_real(v.len(), |i| potential[i] * v[i].norm_sqr()) * psi.grid().cell_volume()
}

pub fn energy_g(psi: &ComplexField, phi: &ComplexField) -> Result<EnergyBreakdown> {
    psi.grid().same_as(phi.grid())?;
    check_norm(psi)?;
    Ok(energy_g_unchecked(psi, phi))
}

pub(crate) fn energy_g_unchecked(psi: &ComplexField, phi: &ComplexField) -> EnergyBreakdown {
    let kinetic = kinetic(psi);
    let interaction = expectation(&potential_of(phi), psi);
    let field = phi.norm_sq();
    EnergyBreakdown {
        total: kinetic + interaction + field,
        kinetic,
        interaction,
        field,
    }
}

/// `𝓔(ψ) = ‖∇ψ‖² - ‖σ_ψ‖²`.
pub fn energy_e(psi: &ComplexField) -> Result<f64> {
    check_norm(psi)?;
    Ok(kinetic(psi) - sigma_of(psi).norm_sq())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectronObservables {
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub kinetic: f64,
    pub norm: f64,
    /// Mass with some coordinate beyond `3L/8`, relative to the total.
    pub boundary_mass: f64,
}

/// Relative boundary mass above which the sawtooth position is unreliable.
pub const BOUNDARY_MASS_TOL: f64 = 1e-8;

impl ElectronObservables {
    pub fn position_reliable(&self) -> bool {
        self.boundary_mass <= BOUNDARY_MASS_TOL
    }
}

pub fn electron_observables(psi: &ComplexField) -> ElectronObservables {
    let g = *psi.grid();
    let v = psi.values();
    let dv = g.cell_volume();
    let norm_sq = psi.norm_sq();
    let edge = 3.0 * g.box_length / 8.0;
    let pos = sum_vec3(v.len(), |i| {
        let x = g.position(i);
        let r = v[i].norm_sqr();
        [x[0] * r, x[1] * r, x[2] * r]
    });
    let boundary = sum_real(v.len(), |i| {
        let x = g.position(i);
        if x.iter().any(|c| c.abs() > edge) {
            v[i].norm_sqr()
        } else {
            0.0
        }
    }) * dv;
    let d = forward(psi);
    let n3 = g.len() as f64;
    let mom = sum_vec3(d.len(), |i| {
        let k = g.odd_wavevector(i);
        let a = d[i].norm_sqr();
        [k[0] * a, k[1] * a, k[2] * a]
    });
    let kin = sum_real(d.len(), |i| g.k_squared(i) * d[i].norm_sqr()) * dv / n3;
    let s = dv / n3;
    ElectronObservables {
        position: pos.map(|p| p * dv / norm_sq),
        velocity: mom.map(|p| 2.0 * p * s),
        kinetic: kin,
        norm: norm_sq.sqrt(),
        boundary_mass: if norm_sq > 0.0 { boundary / norm_sq } else { 0.0 },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use crate::spectral::testing::random_field;
    use crate::spectral::{GridSpec, Role};
    use std::f64::consts::PI;

    /// Self-energy of a localized charge in the periodic box with neutralizing
    /// background: isolated value minus the simple-cubic Madelung term plus the
    /// background quadrupole term.
    fn periodic_gaussian_coulomb(a: f64, l: f64) -> f64 {
        const MADELUNG_SC: f64 = 2.837_297_479_480_62;
        ((2.0 / PI).sqrt() / a - MADELUNG_SC / l + 2.0 * PI * a * a / l.powi(3)) / (4.0 * PI)
    }

    fn gaussian(grid: GridSpec, a: f64) -> ComplexField {
        let c = (PI * a * a).powf(-0.75);
        ComplexField::from_fn(grid, Role::Electron, |x| {
            Complex64::new(c * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (2.0 * a * a)).exp(), 0.0)
        })
    }

    #[test]
    fn gaussian_energies_match_closed_form() {
        let a = 1.3;
        let l = 24.0;
        let g = GridSpec::new(l, 48).unwrap();
        let psi = gaussian(g, a);
        assert!((psi.norm() - 1.0).abs() < 1e-12);
        let t = kinetic(&psi);
        assert!((t - 1.5 / (a * a)).abs() < 1e-10);
        let c = sigma_of(&psi).norm_sq();
        let expect = periodic_gaussian_coulomb(a, l);
        assert!((c - expect).abs() < 1e-9 * expect, "{c} vs {expect}");
        let e = energy_e(&psi).unwrap();
        assert!((e - (t - expect)).abs() < 1e-9);
    }

    #[test]
    fn reduced_energy_is_the_optimal_field_value() {
        let g = GridSpec::new(16.0, 16).unwrap();
        let psi = gaussian(g, 1.5).add_scaled(Complex64::new(0.0, 0.1), &random_field(g, 4)).unwrap().normalized();
        let sigma = sigma_of(&psi);
        let opt = sigma.scaled(Complex64::new(-1.0, 0.0));
        let e = energy_e(&psi).unwrap();
        let eg = energy_g(&psi, &opt).unwrap();
        assert!((eg.total - e).abs() < 1e-12 * e.abs().max(eg.kinetic));
        assert_eq!(eg.total, eg.kinetic + eg.interaction + eg.field);
        let phi = random_field(g, 8).scaled(Complex64::new(0.01, 0.0));
        let gap = energy_g(&psi, &phi).unwrap().total - e;
        let square = phi.add_scaled(Complex64::new(1.0, 0.0), &sigma).unwrap().norm_sq();
        assert!(gap >= 0.0);
        assert!((gap - square).abs() < 1e-11 * square.max(1e-12));
    }

    #[test]
    fn unnormalized_psi_is_rejected() {
        let g = GridSpec::new(16.0, 8).unwrap();
        let psi = gaussian(g, 1.5).scaled(Complex64::new(1.1, 0.0));
        let err = energy_e(&psi).unwrap_err().to_string();
        assert!(err.contains("norm"), "{err}");
    }

    #[test]
    fn real_fields_have_zero_velocity() {
        let g = GridSpec::new(10.0, 12).unwrap();
        let f = random_field(g, 1).real_part().normalized();
        let obs = electron_observables(&f);
        assert!(obs.velocity.iter().all(|v| v.abs() < 1e-13), "{:?}", obs.velocity);
        let psi = gaussian(GridSpec::new(20.0, 20).unwrap(), 1.0);
        let obs = electron_observables(&psi);
        assert!(obs.position.iter().all(|x| x.abs() < 1e-14));
        assert!(obs.position_reliable());
    }

    #[test]
    fn boosted_packet_moves_at_twice_its_wavevector() {
        // ψ = e^{ik·x} g with real g: ⟨-i∇⟩ = k exactly; the free evolution then
        // moves ⟨x⟩ at 2k, checked by finite differences of the exact spectral flow.
        let l = 30.0;
        let g = GridSpec::new(l, 32).unwrap();
        let k = 2.0 * PI * 2.0 / l;
        let psi = gaussian(g, 2.0).zip_map(&ComplexField::from_fn(g, Role::Electron, |x| Complex64::from_polar(1.0, k * x[0])), |a, b| a * b).unwrap();
        let obs = electron_observables(&psi);
        assert!((obs.velocity[0] - 2.0 * k).abs() < 1e-12);
        let evolve = |t: f64| super::super::ops::apply_multiplier(&psi, |i| Complex64::from_polar(1.0, -g.k_squared(i) * t));
        let h = 0.05;
        let xp = electron_observables(&evolve(h)).position[0];
        let xm = electron_observables(&evolve(-h)).position[0];
        assert!(((xp - xm) / (2.0 * h) - obs.velocity[0]).abs() < 1e-9);
    }
}
