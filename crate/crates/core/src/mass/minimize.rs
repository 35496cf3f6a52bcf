//! Minimization of the energy over initial data with prescribed electron and
//! phonon velocity.
//!
//! For fixed `ψ` the phonon part is optimal in closed form: the constraints on
//! `φ` (centering and phonon velocity) are six linear conditions, so the
//! minimizer is `-σ_ψ` corrected inside a six-dimensional subspace. The outer
//! problem is a preconditioned nonlinear CG over `ψ` on the sphere with the
//! electron-velocity constraint.

use nalgebra::{DMatrix, DVector, Matrix6, Vector6};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::PolaronState;
use crate::error::{param, Error, Result};
use crate::pekar::{coordinate_times, PekarSolution};
use crate::spectral::{apply_h, apply_real_multiplier, derivative, electron_observables, kinetic, potential_of, sigma_of, ComplexField};

use super::{trial_state, Variant};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// The energy minimized over `φ` at fixed `ψ`.
pub struct ReducedProblem<'a> {
    sol: &'a PekarSolution,
    v: f64,
    alpha: f64,
    d: [ComplexField; 3],
    e: [ComplexField; 3],
    system: Matrix6<f64>,
    inv_half_x: [ComplexField; 3],
}

impl<'a> ReducedProblem<'a> {
    pub fn new(v: f64, alpha: f64, sol: &'a PekarSolution) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(param("alpha", "coupling must be non-negative"));
        }
        let d: [ComplexField; 3] = std::array::from_fn(|i| sol.d_phi(i).real_part());
        let e: [ComplexField; 3] = std::array::from_fn(|i| derivative(&d[i], 0).real_part());
        let s = v * alpha * alpha;
        let mut m = Matrix6::zeros();
        for i in 0..3 {
            for j in 0..3 {
                let dd = d[i].real_inner(&d[j])?;
                let ed = e[j].real_inner(&d[i])?;
                let ee = e[i].real_inner(&e[j])?;
                m[(i, j)] = dd;
                m[(i, 3 + j)] = -s * ed;
                m[(3 + j, i)] = -s * ed;
                m[(3 + i, 3 + j)] = dd + s * s * ee;
            }
        }
        let inv_half_x = std::array::from_fn(|k| coordinate_times(&sol.psi, k).scaled(Complex64::new(0.0, 0.5)));
        Ok(Self {
            sol,
            v,
            alpha,
            d,
            e,
            system: m,
            inv_half_x,
        })
    }

    /// Minimizer of `⟨ψ, V_φ ψ⟩ + ‖φ‖²` under the phonon constraints.
    pub fn optimal_phonon(&self, psi: &ComplexField) -> Result<ComplexField> {
        let sigma = sigma_of(psi);
        let s = self.v * self.alpha * self.alpha;
        let mut rhs = Vector6::zeros();
        for i in 0..3 {
            rhs[i] = sigma.real_inner(&self.d[i])?;
            rhs[3 + i] = -s * sigma.real_inner(&self.e[i])?;
        }
        let x = self
            .system
            .cholesky()
            .ok_or_else(|| Error::NoConvergence {
                what: "phonon constraint system",
                iterations: 0,
                residual: f64::NAN,
            })?
            .solve(&rhs);
        let mut re = sigma.scaled(-ONE);
        let mut im = ComplexField::zeros(*psi.grid(), re.role());
        for i in 0..3 {
            re.axpy_mut(Complex64::new(x[i], 0.0), &self.d[i]);
            re.axpy_mut(Complex64::new(-s * x[3 + i], 0.0), &self.e[i]);
            im.axpy_mut(Complex64::new(0.0, x[3 + i]), &self.d[i]);
        }
        re.add_scaled(ONE, &im)
    }

    /// Phonon-velocity constraint residuals `⟨Im φ + vα²∂₁Re φ, ∂ᵢφ_P⟩` and
    /// centering residuals `⟨Re φ, ∂ᵢφ_P⟩`.
    pub fn phonon_residuals(&self, phi: &ComplexField) -> Result<[f64; 6]> {
        let re = phi.real_part();
        let im = phi.imag_part();
        let d1 = derivative(&re, 0).real_part();
        let s = self.v * self.alpha * self.alpha;
        let w = im.add_scaled(Complex64::new(s, 0.0), &d1)?;
        let mut out = [0.0; 6];
        for i in 0..3 {
            out[i] = re.real_inner(&self.d[i])?;
            out[3 + i] = w.real_inner(&self.d[i])?;
        }
        Ok(out)
    }

    pub fn reduced_energy(&self, psi: &ComplexField) -> Result<f64> {
        let phi = self.optimal_phonon(psi)?;
        Ok(self.energy_with(psi, &phi))
    }

    fn energy_with(&self, psi: &ComplexField, phi: &ComplexField) -> f64 {
        let pot = potential_of(phi);
        kinetic(psi) + crate::spectral::expectation(&pot, psi) + phi.norm_sq()
    }

    /// Gradient of [`Self::reduced_energy`] in the real inner product,
    /// `2 h_{φ*} ψ`; the constraints on `φ` do not depend on `ψ`.
    pub fn reduced_gradient(&self, psi: &ComplexField) -> Result<ComplexField> {
        let phi = self.optimal_phonon(psi)?;
        Ok(apply_h(&potential_of(&phi), psi).scaled(Complex64::new(2.0, 0.0)))
    }

    /// Restores `‖ψ‖ = 1`, the electron velocity `v e₁` and the phase gauge.
    pub fn retract(&self, psi: &ComplexField) -> Result<ComplexField> {
        let mut p = psi.normalized();
        for _ in 0..50 {
            let vel = electron_observables(&p).velocity;
            let tau = [self.v - vel[0], -vel[1], -vel[2]];
            if tau.iter().all(|t| t.abs() < 1e-14) {
                break;
            }
            for k in 0..3 {
                p.axpy_mut(Complex64::new(tau[k], 0.0), &self.inv_half_x[k]);
            }
            p = p.normalized();
        }
        let ov = self.sol.psi.inner(&p)?;
        Ok(p.scaled(Complex64::from_polar(1.0, -ov.arg())))
    }

    fn normals(&self, psi: &ComplexField) -> Vec<ComplexField> {
        let mut n = vec![psi.clone()];
        for k in 0..3 {
            n.push(derivative(psi, k).scaled(Complex64::new(0.0, -1.0)));
        }
        n
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinimizeOptions {
    pub max_iter: usize,
    /// Stop when the projected gradient norm falls below `tol·|μ_P|`.
    pub tol: f64,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6 }
    }
}

#[derive(Clone, Debug)]
pub struct MinimizeResult {
    pub state: PolaronState,
    pub energy: f64,
    pub seed_energy: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest constraint residual of the returned state.
    pub constraint_residual: f64,
}

/// Tangent projection: removes `Σ c_l K n_l` from `K g` with `c` making the
/// result orthogonal to all normals.
fn project(k_apply: &dyn Fn(&ComplexField) -> ComplexField, g: &ComplexField, normals: &[ComplexField]) -> Result<(ComplexField, ComplexField)> {
    let kn: Vec<ComplexField> = normals.iter().map(|n| k_apply(n)).collect();
    let m = normals.len();
    let kg = k_apply(g);
    let mut gram = DMatrix::zeros(m, m);
    let mut rhs = DVector::zeros(m);
    let mut plain = DMatrix::zeros(m, m);
    let mut prhs = DVector::zeros(m);
    for l in 0..m {
        rhs[l] = normals[l].real_inner(&kg)?;
        prhs[l] = normals[l].real_inner(g)?;
        for k in 0..m {
            gram[(l, k)] = normals[l].real_inner(&kn[k])?;
            plain[(l, k)] = normals[l].real_inner(&normals[k])?;
        }
    }
    let solve = |a: DMatrix<f64>, b: DVector<f64>| a.svd(true, true).solve(&b, 1e-14).map_err(|e| param("psi", e.to_string()));
    let c = solve(gram, rhs)?;
    let cp = solve(plain, prhs)?;
    let mut pk = kg;
    let mut pg = g.clone();
    for l in 0..m {
        pk.axpy_mut(Complex64::new(-c[l], 0.0), &kn[l]);
        pg.axpy_mut(Complex64::new(-cp[l], 0.0), &normals[l]);
    }
    Ok((pk, pg))
}

/// Infimum of the energy over initial data with electron and phonon velocity
/// `v e₁`, seeded with the standard trial state.
pub fn constrained_minimize_ev(v: f64, alpha: f64, sol: &PekarSolution, opts: &MinimizeOptions) -> Result<MinimizeResult> {
    let seed = trial_state(v, alpha, sol, Variant::Standard)?;
    let seed_energy = crate::spectral::energy_g_unchecked(&seed.psi, &seed.phi).total;
    let prob = ReducedProblem::new(v, alpha, sol)?;
    let g = sol.grid;
    let shift = sol.mu_p.abs();
    let k_apply = |f: &ComplexField| apply_real_multiplier(f, |i| 1.0 / (g.k_squared(i) + shift));

    let mut psi = prob.retract(&seed.psi)?;
    let mut energy = prob.reduced_energy(&psi)?;
    let mut dir: Option<ComplexField> = None;
    let mut prev: Option<(ComplexField, ComplexField)> = None;
    let mut step = 1.0;
    let mut gnorm = f64::INFINITY;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        let grad = prob.reduced_gradient(&psi)?;
        let normals = prob.normals(&psi);
        let (pk, pg) = project(&k_apply, &grad, &normals)?;
        gnorm = pg.norm();
        if gnorm < opts.tol * shift {
            converged = true;
            break;
        }
        iterations += 1;
        // Polak-Ribière+, with the previous direction carried over unchanged.
        let beta = match &prev {
            Some((pk0, pg0)) => {
                let num = pk.real_inner(&pg)? - pk0.real_inner(&pg)?;
                (num / pk0.real_inner(pg0)?).max(0.0)
            }
            None => 0.0,
        };
        let mut d = pk.scaled(-ONE);
        if let Some(d0) = &dir {
            if beta > 0.0 {
                d.axpy_mut(Complex64::new(beta, 0.0), d0);
            }
        }
        let slope = pg.real_inner(&d)?;
        let d = if slope >= 0.0 { pk.scaled(-ONE) } else { d };
        let slope = pg.real_inner(&d)?;

        let eval = |t: f64| -> Result<(f64, ComplexField)> {
            let trial = prob.retract(&psi.add_scaled(Complex64::new(t, 0.0), &d)?)?;
            Ok((prob.reduced_energy(&trial)?, trial))
        };
        let (e1, p1) = eval(step)?;
        // Parabola through E(0), E'(0) and E(step).
        let curv = (e1 - energy - slope * step) / (step * step);
        let t_star = if curv > 0.0 { -slope / (2.0 * curv) } else { 2.0 * step };
        let (mut best_e, mut best_p, mut best_t) = (e1, p1, step);
        if (t_star - step).abs() > 1e-3 * step {
            let (e2, p2) = eval(t_star)?;
            if e2 < best_e {
                (best_e, best_p, best_t) = (e2, p2, t_star);
            }
        }
        let mut halvings = 0;
        while best_e > energy && halvings < 30 {
            best_t *= 0.25;
            let (e, p) = eval(best_t)?;
            (best_e, best_p) = (e, p);
            halvings += 1;
        }
        if best_e > energy {
            break;
        }
        step = best_t.max(1e-6);
        energy = best_e;
        psi = best_p;
        prev = Some((pk, pg));
        dir = Some(d);
    }
    let phi = prob.optimal_phonon(&psi)?;
    let energy = prob.energy_with(&psi, &phi);
    let obs = electron_observables(&psi);
    let mut resid = (obs.norm - 1.0).abs().max((obs.velocity[0] - v).abs()).max(obs.velocity[1].abs()).max(obs.velocity[2].abs());
    for r in prob.phonon_residuals(&phi)? {
        resid = resid.max(r.abs() / sol.scalars.grad_phi_sq.sqrt());
    }
    let state = PolaronState::new(psi, phi, alpha)?;
    Ok(MinimizeResult {
        state,
        energy,
        seed_energy,
        gradient_norm: gnorm,
        iterations,
        converged,
        constraint_residual: resid,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mass::{trial_energy, v_max};
    use crate::testing::{random_field, small};

    #[test]
    fn reduced_gradient_matches_finite_differences() {
        let s = small();
        let v = 0.02 * v_max(s.scalars.q);
        let prob = ReducedProblem::new(v, 2.0, s).unwrap();
        let psi = trial_state(v, 2.0, s, Variant::Standard).unwrap().psi;
        let grad = prob.reduced_gradient(&psi).unwrap();
        for seed in 0..10 {
            let noise = random_field(s.grid, seed);
            let envelope = s.psi.map(|p| Complex64::new(p.re.abs(), 0.0));
            let dir = noise.zip_map(&envelope, |a, b| a * b).unwrap().normalized();
            let h = 1e-4;
            let ep = prob.reduced_energy(&psi.add_scaled(Complex64::new(h, 0.0), &dir).unwrap()).unwrap();
            let em = prob.reduced_energy(&psi.add_scaled(Complex64::new(-h, 0.0), &dir).unwrap()).unwrap();
            let fd = (ep - em) / (2.0 * h);
            let an = grad.real_inner(&dir).unwrap();
            assert!((fd - an).abs() < 1e-5 * an.abs(), "seed {seed}: {fd} vs {an}");
        }
    }

    #[test]
    fn optimal_phonon_satisfies_constraints_and_beats_trial() {
        let s = small();
        let v = 0.04 * v_max(s.scalars.q);
        let st = trial_state(v, 1.5, s, Variant::Standard).unwrap();
        let prob = ReducedProblem::new(v, 1.5, s).unwrap();
        assert!(prob.phonon_residuals(&st.phi).unwrap().iter().all(|r| r.abs() < 1e-16));
        let phi = prob.optimal_phonon(&st.psi).unwrap();
        for r in prob.phonon_residuals(&phi).unwrap() {
            assert!(r.abs() < 1e-16, "{r}");
        }
        let e_trial = crate::spectral::energy_g_unchecked(&st.psi, &st.phi).total;
        assert!(prob.reduced_energy(&st.psi).unwrap() <= e_trial);
    }

    #[test]
    fn zero_velocity_returns_the_minimizer() {
        let s = small();
        let r = constrained_minimize_ev(0.0, 1.0, s, &MinimizeOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.energy - s.e_p).abs() < 1e-14);
        assert!(r.state.psi.sub(&s.psi).unwrap().norm() < 1e-10);
    }

    #[test]
    fn minimized_energy_is_below_the_seed() {
        let s = small();
        let v = 0.03 * v_max(s.scalars.q);
        let r = constrained_minimize_ev(v, 1.0, s, &MinimizeOptions { max_iter: 15, tol: 1e-6 }).unwrap();
        assert!(r.energy <= r.seed_energy);
        assert!(r.energy <= trial_energy(v, 1.0, s, Variant::Standard).unwrap().grid + 1e-16);
        assert!(r.constraint_residual < 1e-10, "{}", r.constraint_residual);
    }

    #[test]
    fn retraction_restores_constraints() {
        let s = small();
        let prob = ReducedProblem::new(1e-3, 1.0, s).unwrap();
        let noise = random_field(s.grid, 3).zip_map(&s.psi, |a, b| a * b.re).unwrap().normalized();
        let bumped = s.psi.add_scaled(Complex64::new(0.01, 0.02), &noise).unwrap();
        let p = prob.retract(&bumped).unwrap();
        let obs = electron_observables(&p);
        assert!((obs.norm - 1.0).abs() < 1e-14);
        assert!((obs.velocity[0] - 1e-3).abs() < 1e-13 && obs.velocity[1].abs() < 1e-13);
        assert!(s.psi.inner(&p).unwrap().im.abs() < 1e-15);
    }
}
