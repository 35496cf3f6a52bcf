//! Trial states at prescribed initial velocity, their energies, mass fits,
//! the constrained minimization of the energy at fixed velocity, and the
//! traveling-wave linearization.

mod minimize;

pub use minimize::{constrained_minimize_ev, MinimizeOptions, MinimizeResult, ReducedProblem};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::dynamics::PolaronState;
use crate::error::{param, Result};
use crate::manifold::{ProjectionOptions, Templates};
use crate::pekar::{coordinate_times, PekarSolution};
use crate::spectral::{apply_xp, electron_observables, energy_g_unchecked, frac_laplacian_apply, ComplexField, FracPower};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// `f ψ_P + i g x₁ψ_P/2`.
    Standard,
    /// `(f ψ_P - i v c ∂₁ψ_P)/‖·‖` with `c = ‖∂₁ψ_P‖²/‖∂₁φ_P‖²`.
    Alternative,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialCoefficients {
    pub variant: Variant,
    pub v: f64,
    pub f: f64,
    /// Coefficient of the imaginary part before normalization.
    pub g: f64,
    /// `‖x₁ψ_P/2‖²`.
    pub q: f64,
    /// `‖∂₁ψ_P‖²/‖∂₁φ_P‖²` (alternative only, else 0).
    pub c: f64,
    /// Squared norm before normalization.
    pub norm_sq: f64,
    /// Phase rate of the alternative state, `-μ_P + (√(1+4c²v²‖∂₁ψ_P‖²) - 1)/(2c)`.
    pub kappa: Option<f64>,
}

/// Scalars entering the closed-form trial energies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialScalars {
    pub mu_p: f64,
    pub phi_sq: f64,
    pub q: f64,
    pub d1_psi_sq: f64,
    pub d1_phi_sq: f64,
}

impl TrialScalars {
    /// From the radial reference; radial symmetry gives `‖∂₁f‖² = ‖∇f‖²/3`.
    pub fn radial(sol: &PekarSolution) -> Self {
        let r = &sol.radial;
        Self {
            mu_p: r.mu_p,
            phi_sq: r.scalars.phi_sq,
            q: r.scalars.q,
            d1_psi_sq: r.scalars.kinetic / 3.0,
            d1_phi_sq: r.scalars.grad_phi_sq / 3.0,
        }
    }

    pub fn grid(sol: &PekarSolution) -> Self {
        let s = &sol.scalars;
        Self {
            mu_p: sol.mu_p,
            phi_sq: s.phi_sq,
            q: s.q,
            d1_psi_sq: s.d1_psi_sq,
            d1_phi_sq: s.d1_phi_sq,
        }
    }
}

/// Largest admissible `|v|` of the standard variant, `1/(2√q)`.
pub fn v_max(q: f64) -> f64 {
    0.5 / q.sqrt()
}

pub fn trial_coefficients(v: f64, s: &TrialScalars, variant: Variant) -> Result<TrialCoefficients> {
    if !v.is_finite() {
        return Err(param("v", "velocity must be finite"));
    }
    match variant {
        Variant::Standard => {
            let disc = 1.0 - 4.0 * v * v * s.q;
            if disc <= 0.0 {
                return Err(param("v", format!("|v| must stay below {:.6e}", v_max(s.q))));
            }
            let f = ((1.0 + disc.sqrt()) / 2.0).sqrt();
            Ok(TrialCoefficients {
                variant,
                v,
                f,
                g: v / f,
                q: s.q,
                c: 0.0,
                norm_sq: 1.0,
                kappa: None,
            })
        }
        Variant::Alternative => {
            let c = s.d1_psi_sq / s.d1_phi_sq;
            let root = (1.0 + 4.0 * c * c * v * v * s.d1_psi_sq).sqrt();
            let f = (1.0 + root) / 2.0;
            Ok(TrialCoefficients {
                variant,
                v,
                f,
                g: v * c,
                q: s.q,
                c,
                norm_sq: f * f + v * v * c * c * s.d1_psi_sq,
                kappa: Some(-s.mu_p + (root - 1.0) / (2.0 * c)),
            })
        }
    }
}

/// Initial data with electron and phonon velocity `v e₁`.
pub fn trial_state(v: f64, alpha: f64, sol: &PekarSolution, variant: Variant) -> Result<PolaronState> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(param("alpha", "coupling must be non-negative"));
    }
    let co = trial_coefficients(v, &TrialScalars::grid(sol), variant)?;
    let psi = match variant {
        Variant::Standard => {
            let w = coordinate_times(&sol.psi, 0).scaled(Complex64::new(0.0, 0.5 * co.g));
            sol.psi.scaled(Complex64::new(co.f, 0.0)).add_scaled(Complex64::new(1.0, 0.0), &w)?
        }
        Variant::Alternative => {
            let d = sol.d_psi(0);
            sol.psi
                .scaled(Complex64::new(co.f, 0.0))
                .add_scaled(Complex64::new(0.0, -co.g), &d)?
                .normalized()
        }
    };
    let phi = sol.phi.add_scaled(Complex64::new(0.0, -v * alpha.powi(2)), &sol.d_phi(0))?;
    Ok(PolaronState {
        psi,
        phi,
        alpha,
        t: 0.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub v: f64,
    pub norm_residual: f64,
    pub electron_velocity_residual: [f64; 3],
    /// `None` if the phonon projection was refused or `α = 0`.
    pub phonon_velocity_residual: Option<[f64; 3]>,
    pub energy_excess: f64,
    pub delta_star: f64,
}

impl AdmissibilityReport {
    pub fn max_velocity_residual(&self) -> f64 {
        let ph = self.phonon_velocity_residual.unwrap_or([f64::INFINITY; 3]);
        self.electron_velocity_residual
            .iter()
            .chain(&ph)
            .fold(0.0f64, |a, b| a.max(b.abs()))
    }

    pub fn within_delta_star(&self) -> bool {
        self.energy_excess <= self.delta_star
    }
}

/// Operational stand-in for the low-energy threshold: a fixed fraction of `|e_P|`.
pub const DELTA_STAR_FRACTION: f64 = 0.05;

pub fn admissibility_check(state: &PolaronState, v: f64, sol: &PekarSolution, templates: &Templates) -> AdmissibilityReport {
    let obs = electron_observables(&state.psi);
    let target = [v, 0.0, 0.0];
    let ph = templates
        .project_phonon(&state.phi, None, &ProjectionOptions::default())
        .and_then(|p| templates.phonon_velocity(&state.phi, state.alpha, &p))
        .ok()
        .map(|u| std::array::from_fn(|i| u[i] - target[i]));
    AdmissibilityReport {
        v,
        norm_residual: obs.norm - 1.0,
        electron_velocity_residual: std::array::from_fn(|i| obs.velocity[i] - target[i]),
        phonon_velocity_residual: ph,
        energy_excess: energy_g_unchecked(&state.psi, &state.phi).total - sol.e_p,
        delta_star: DELTA_STAR_FRACTION * sol.e_p.abs(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialEnergy {
    pub v: f64,
    /// Closed form from the radial scalars.
    pub closed_form: f64,
    /// Grid evaluation of the trial state.
    pub grid: f64,
    pub difference: f64,
}

/// Closed-form energy of the trial state for the given scalars.
pub fn trial_energy_closed_form(v: f64, alpha: f64, s: &TrialScalars, variant: Variant) -> Result<f64> {
    let co = trial_coefficients(v, s, variant)?;
    let field = s.phi_sq + v * v * alpha.powi(4) * s.d1_phi_sq;
    Ok(match variant {
        Variant::Standard => co.f * co.f * s.mu_p + co.g * co.g * (0.25 + s.mu_p * s.q) + field,
        Variant::Alternative => {
            let b = co.g * co.g;
            (co.f * co.f * s.mu_p + b * (s.d1_phi_sq + s.mu_p * s.d1_psi_sq)) / co.norm_sq + field
        }
    })
}

pub fn trial_energy(v: f64, alpha: f64, sol: &PekarSolution, variant: Variant) -> Result<TrialEnergy> {
    let closed_form = trial_energy_closed_form(v, alpha, &TrialScalars::radial(sol), variant)?;
    let st = trial_state(v, alpha, sol, variant)?;
    let grid = energy_g_unchecked(&st.psi, &st.phi).total;
    Ok(TrialEnergy {
        v,
        closed_form,
        grid,
        difference: grid - closed_form,
    })
}

/// `1/4 + α⁴‖∂₁φ_P‖²`, the `v²` coefficient shared by the standard trial
/// energy, the lower bound and the traveling-wave expansion.
pub fn quadratic_coefficient(alpha: f64, d1_phi_sq: f64) -> f64 {
    0.25 + alpha.powi(4) * d1_phi_sq
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassFit {
    pub mass: f64,
    /// Coefficient of `v⁴`, if fitted.
    pub quartic: Option<f64>,
    pub residual_norm: f64,
    pub v_min: f64,
    pub v_max: f64,
}

/// Least squares of `E - e_P` against `v²/2` (and `v⁴` when `quartic`).
pub fn fit_mass(pairs: &[(f64, f64)], e_p: f64, quartic: bool) -> Result<MassFit> {
    let mut vs: Vec<f64> = pairs.iter().map(|p| p.0.abs()).collect();
    vs.sort_by(|a, b| a.total_cmp(b));
    vs.dedup();
    if vs.len() < 3 || vs[0] == 0.0 && vs.len() < 4 {
        return Err(param("v", "need at least three distinct non-zero velocities"));
    }
    if pairs.iter().any(|&(v, e)| v != 0.0 && e <= e_p) {
        return Err(param("energies", "every energy must exceed e_P"));
    }
    let cols = if quartic { 2 } else { 1 };
    let a = DMatrix::from_fn(pairs.len(), cols, |i, j| {
        let v2 = pairs[i].0 * pairs[i].0;
        if j == 0 {
            v2 / 2.0
        } else {
            v2 * v2
        }
    });
    let b = DVector::from_iterator(pairs.len(), pairs.iter().map(|p| p.1 - e_p));
    // Column scaling keeps the normal matrix well conditioned.
    let scale: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    let a_s = DMatrix::from_fn(a.nrows(), cols, |i, j| a[(i, j)] / scale[j]);
    let svd = a_s.clone().svd(true, true);
    if svd.singular_values.min() < 1e-12 * svd.singular_values.max() {
        return Err(param("v", "degenerate design matrix"));
    }
    let x = svd.solve(&b, 0.0).map_err(|e| param("v", e.to_string()))?;
    let resid = (&a_s * &x - &b).norm();
    Ok(MassFit {
        mass: x[0] / scale[0],
        quartic: quartic.then(|| x[1] / scale[1]),
        residual_norm: resid,
        v_min: vs[0],
        v_max: *vs.last().unwrap(),
    })
}

/// Default fit velocities as fractions of `v_max`.
pub const FIT_FRACTIONS: [f64; 4] = [0.005, 0.01, 0.02, 0.04];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassReport {
    pub alpha: f64,
    pub e_p: f64,
    pub m_eff_pred: f64,
    pub m_eff_alt_pred: f64,
    pub tw_coefficient: f64,
    pub fit_standard: MassFit,
    pub fit_alternative: MassFit,
    pub standard: Vec<TrialEnergy>,
    pub alternative: Vec<TrialEnergy>,
    pub ratio_pred: f64,
}

impl MassReport {
    pub fn standard_error(&self) -> f64 {
        (self.fit_standard.mass - self.m_eff_pred) / self.m_eff_pred
    }

    pub fn alternative_error(&self) -> f64 {
        (self.fit_alternative.mass - self.m_eff_alt_pred) / self.m_eff_alt_pred
    }
}

/// `1/2 + (2α⁴/3)‖∇φ_P‖²`.
pub fn m_eff(alpha: f64, grad_phi_sq: f64) -> f64 {
    0.5 + 2.0 * alpha.powi(4) / 3.0 * grad_phi_sq
}

/// `2‖∇ψ_P‖⁴/(3‖∇φ_P‖²) + (2α⁴/3)‖∇φ_P‖²`.
pub fn m_eff_alt(alpha: f64, grad_psi_sq: f64, grad_phi_sq: f64) -> f64 {
    2.0 * grad_psi_sq * grad_psi_sq / (3.0 * grad_phi_sq) + 2.0 * alpha.powi(4) / 3.0 * grad_phi_sq
}

pub fn mass_report(alphas: &[f64], sol: &PekarSolution, fractions: &[f64]) -> Result<Vec<MassReport>> {
    if alphas.is_empty() {
        return Err(param("alpha", "empty coupling list"));
    }
    let r = &sol.radial.scalars;
    let vm = v_max(sol.scalars.q);
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let mut runs = [Vec::new(), Vec::new()];
        for (variant, list) in [Variant::Standard, Variant::Alternative].into_iter().zip(runs.iter_mut()) {
            for &fr in fractions {
                list.push(trial_energy(fr * vm, alpha, sol, variant)?);
            }
        }
        let fit = |list: &[TrialEnergy]| {
            let pairs: Vec<(f64, f64)> = list.iter().map(|t| (t.v, t.grid)).collect();
            fit_mass(&pairs, sol.e_p, true)
        };
        let m = m_eff(alpha, r.grad_phi_sq);
        let m_alt = m_eff_alt(alpha, r.kinetic, r.grad_phi_sq);
        let [standard, alternative] = runs;
        out.push(MassReport {
            alpha,
            e_p: sol.e_p,
            m_eff_pred: m,
            m_eff_alt_pred: m_alt,
            tw_coefficient: quadratic_coefficient(alpha, r.grad_phi_sq / 3.0),
            fit_standard: fit(&standard)?,
            fit_alternative: fit(&alternative)?,
            standard,
            alternative,
            ratio_pred: m_alt / m,
        });
    }
    Ok(out)
}

pub fn write_mass_csv(reports: &[MassReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "alpha",
        "m_eff_pred",
        "m_eff_alt_pred",
        "m_fit_std",
        "m_fit_alt",
        "coef_std",
        "coef_alt",
        "tw_coefficient",
        "resid_std",
        "resid_alt",
        "ratio_pred",
    ])?;
    for r in reports {
        w.write_record(
            [
                r.alpha,
                r.m_eff_pred,
                r.m_eff_alt_pred,
                r.fit_standard.mass,
                r.fit_alternative.mass,
                r.fit_standard.mass / 2.0,
                r.fit_alternative.mass / 2.0,
                r.tw_coefficient,
                r.fit_standard.residual_norm,
                r.fit_alternative.residual_norm,
                r.ratio_pred,
            ]
            .map(|x| format!("{x:e}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug)]
pub struct TravelingWave {
    /// `Im ξ = -x₁ψ_P/2`, solving `H_P Im ξ = ∂₁ψ_P`.
    pub im_xi: ComplexField,
    /// `Im η = α² ∂₁φ_P`.
    pub im_eta: ComplexField,
    /// Kernel representative `∂₁ψ_P`.
    pub re_xi: ComplexField,
    /// `Re η = -2(-Δ)^{-1/2}(ψ_P Re ξ)`.
    pub re_eta: ComplexField,
    pub report: TravelingWaveReport,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TravelingWaveReport {
    pub alpha: f64,
    /// `‖H_P Im ξ - ∂₁ψ_P‖`.
    pub inverse_residual: f64,
    /// `‖(H_P - 4X_P) Re ξ‖ / ‖Re ξ‖`.
    pub kernel_residual: f64,
    /// `1/4 + α⁴‖∂₁φ_P‖²` from the radial scalars.
    pub coefficient: f64,
    /// The standard trial-state coefficient from the same scalars.
    pub trial_coefficient: f64,
    /// `⟨Im ξ, H_P Im ξ⟩ + ‖Im η‖²/α⁴·α⁴` by grid quadrature.
    pub quadrature_coefficient: f64,
}

pub fn traveling_wave_linearization(alpha: f64, sol: &PekarSolution) -> Result<TravelingWave> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(param("alpha", "coupling must be non-negative"));
    }
    let im_xi = sol.inverse_image(0);
    let d = sol.d_psi(0);
    let h_im = sol.apply_hp(&im_xi);
    let inverse_residual = h_im.sub(&d)?.norm();
    let im_eta = sol.d_phi(0).scaled(Complex64::new(alpha * alpha, 0.0));
    let re_xi = d.clone();
    let kernel_residual = sol
        .apply_hp(&re_xi)
        .add_scaled(Complex64::new(-4.0, 0.0), &apply_xp(&sol.psi, &re_xi))?
        .norm()
        / re_xi.norm();
    let prod = re_xi.zip_map(&sol.psi, |a, b| a * b)?;
    let re_eta = frac_laplacian_apply(&prod, FracPower::MinusHalf).scaled(Complex64::new(-2.0, 0.0));
    let scalars = TrialScalars::radial(sol);
    let coefficient = quadratic_coefficient(alpha, scalars.d1_phi_sq);
    let trial_coefficient = {
        // v² coefficient of f²μ + g²(1/4 + μq) + ‖φ_P‖² + v²α⁴‖∂₁φ_P‖² with f² + g²q = 1, g → v.
        let s = scalars;
        let f2 = -s.q;
        s.mu_p * f2 + (0.25 + s.mu_p * s.q) + alpha.powi(4) * s.d1_phi_sq
    };
    let quadrature_coefficient = im_xi.real_inner(&h_im)? + im_eta.norm_sq();
    Ok(TravelingWave {
        im_xi,
        im_eta,
        re_xi,
        re_eta,
        report: TravelingWaveReport {
            alpha,
            inverse_residual,
            kernel_residual,
            coefficient,
            trial_coefficient,
            quadrature_coefficient,
        },
    })
}

/// Electron velocity `2⟨-i∇⟩` of a field.
pub fn electron_velocity(psi: &ComplexField) -> [f64; 3] {
    electron_observables(psi).velocity
}
