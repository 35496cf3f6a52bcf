use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::path::Path;

use super::lobpcg::{lobpcg, Block, LobpcgOptions};
use super::radial::{RadialScalars, RadialSolution};
use crate::error::{param, Error, Result};
use crate::spectral::snapshot::write_snapshot;
use crate::spectral::{
    apply_h, apply_real_multiplier, apply_xp, derivative, energy_e, energy_g_unchecked, expectation, kinetic,
    potential_of, sigma_of, ComplexField, GridSpec, Role,
};

/// Simple-cubic Madelung constant of the periodic Coulomb kernel with
/// neutralizing background.
pub const MADELUNG_SC: f64 = 2.837_297_479_480_62;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftOptions {
    /// Largest admissible `dx` as a fraction of the profile half-width.
    pub max_dx_fraction: f64,
}

impl Default for LiftOptions {
    fn default() -> Self {
        Self { max_dx_fraction: 0.5 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridScalars {
    pub kinetic: f64,
    pub psi_l4: f64,
    pub grad_phi_sq: f64,
    pub d1_phi_sq: f64,
    pub d1_psi_sq: f64,
    pub phi_sq: f64,
    pub q: f64,
    pub euler_lagrange_residual: f64,
    pub boundary_mass: f64,
    /// `1 - ‖∇φ_P‖²/‖ψ_P‖₄⁴`; equals `(∫|ψ|²)²/(L³‖ψ‖₄⁴)` under the zero-mode convention.
    pub zero_mode_deficit: f64,
}

/// Grid minus radial values, relative unless stated otherwise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    /// `‖ψ‖ - 1` of the interpolated profile before re-normalization.
    pub norm_before: f64,
    pub kinetic: f64,
    pub psi_l4: f64,
    pub q: f64,
    pub e_p: f64,
    pub mu_p: f64,
    /// Predicted absolute torus shift of `e_P` at fixed profile:
    /// `ξ/(4πL) - 4q/L³` from the periodic Coulomb kernel.
    pub e_p_torus_shift: f64,
    /// Largest resolution-type discrepancy (norm, kinetic, L⁴, second moment).
    pub resolution: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialReference {
    pub e_p: f64,
    pub mu_p: f64,
    pub scalars: RadialScalars,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub iterations: usize,
    pub initial_residual: f64,
    pub final_residual: f64,
    pub energy_change: f64,
}

#[derive(Clone, Debug)]
pub struct PekarSolution {
    pub grid: GridSpec,
    pub psi: ComplexField,
    pub phi: ComplexField,
    /// `V_{φ_P}`.
    pub potential: Vec<f64>,
    pub e_p: f64,
    pub mu_p: f64,
    pub scalars: GridScalars,
    pub radial: RadialReference,
    pub discrepancy: Discrepancy,
    pub refinement: Option<RefineReport>,
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b) / b.abs()
}

/// `x_axis f` with the box-centered coordinate.
pub fn coordinate_times(f: &ComplexField, axis: usize) -> ComplexField {
    let g = *f.grid();
    let vals = f
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| v * g.position(i)[axis])
        .collect();
    ComplexField::from_values(g, f.role(), vals)
}

impl PekarSolution {
    pub fn lift(sol: &RadialSolution, grid: GridSpec, opts: &LiftOptions) -> Result<Self> {
        if sol.params.coupling_scale != 1.0 {
            return Err(param(
                "radial.coupling_scale",
                "the grid model uses the physical coupling; lift needs coupling_scale = 1",
            ));
        }
        let hw = sol.scalars.half_width;
        if grid.dx() > opts.max_dx_fraction * hw {
            return Err(Error::Unresolved(format!(
                "dx = {} exceeds {} x half-width {:.3}",
                grid.dx(),
                opts.max_dx_fraction,
                hw
            )));
        }
        let psi = ComplexField::from_fn(grid, Role::Electron, |x| {
            Complex64::new(sol.psi_at((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt()), 0.0)
        });
        let norm_before = psi.norm();
        let psi = psi.normalized();
        let radial = RadialReference {
            e_p: sol.e_p,
            mu_p: sol.mu_p,
            scalars: sol.scalars,
        };
        Ok(Self::assemble(psi, radial, norm_before - 1.0, None))
    }

    fn assemble(psi: ComplexField, radial: RadialReference, norm_before: f64, refinement: Option<RefineReport>) -> Self {
        let grid = *psi.grid();
        let phi = sigma_of(&psi).scaled(Complex64::new(-1.0, 0.0)).with_role(Role::Phonon);
        let potential = potential_of(&phi);
        let energy = energy_g_unchecked(&psi, &phi);
        let mu_p = energy.kinetic + energy.interaction;
        let hpsi = apply_h(&potential, &psi);
        let el = hpsi.add_scaled(Complex64::new(-mu_p, 0.0), &psi).unwrap().norm();
        let psi_l4 = psi.lp_norm_pow(4);
        let grad_phi_sq = kinetic(&phi);
        let obs = crate::spectral::electron_observables(&psi);
        let scalars = GridScalars {
            kinetic: energy.kinetic,
            psi_l4,
            grad_phi_sq,
            d1_phi_sq: derivative(&phi, 0).norm_sq(),
            d1_psi_sq: derivative(&psi, 0).norm_sq(),
            phi_sq: energy.field,
            q: coordinate_times(&psi, 0).norm_sq() / 4.0,
            euler_lagrange_residual: el,
            boundary_mass: obs.boundary_mass,
            zero_mode_deficit: 1.0 - grad_phi_sq / psi_l4,
        };
        let l = grid.box_length;
        let rs = radial.scalars;
        let torus_shift = MADELUNG_SC / (4.0 * PI * l) - 4.0 * rs.q / l.powi(3);
        let kin = relative(scalars.kinetic, rs.kinetic);
        let l4 = relative(scalars.psi_l4, rs.psi_l4);
        let qd = relative(scalars.q, rs.q);
        let discrepancy = Discrepancy {
            norm_before,
            kinetic: kin,
            psi_l4: l4,
            q: qd,
            e_p: relative(energy.total, radial.e_p),
            mu_p: relative(mu_p, radial.mu_p),
            e_p_torus_shift: torus_shift,
            resolution: norm_before.abs().max(kin.abs()).max(l4.abs()).max(qd.abs()),
        };
        Self {
            grid,
            psi,
            phi,
            potential,
            e_p: energy.total,
            mu_p,
            scalars,
            radial,
            discrepancy,
            refinement,
        }
    }

    /// Converges the lifted profile to the minimizer of the periodic problem
    /// by self-consistent eigen-iterations with a preconditioned block solver.
    pub fn refine(&self, opts: &RefineOptions) -> Result<Self> {
        let g = self.grid;
        let shift = self.mu_p.abs();
        let precond = move |b: &[Vec<f64>]| map_real_block(g, b, |f| apply_real_multiplier(f, |i| 1.0 / (g.k_squared(i) + shift)));
        let initial = self.scalars.euler_lagrange_residual;
        let mut psi = self.psi.re();
        let mut residual = initial;
        let mut iterations = 0;
        let (mut best, mut stalled) = (residual, 0);
        while residual > opts.tol {
            // Finer grids bottom out at a roundoff floor just above `tol`.
            if stalled >= 10 && best < 100.0 * opts.tol {
                break;
            }
            if iterations >= opts.max_iter {
                return Err(Error::NoConvergence {
                    what: "periodic ground-state refinement",
                    iterations,
                    residual,
                });
            }
            iterations += 1;
            let field = ComplexField::from_real(g, Role::Electron, &psi);
            let v = potential_of(&sigma_of(&field).scaled(Complex64::new(-1.0, 0.0)));
            let op = |b: &[Vec<f64>]| map_real_block(g, b, |f| apply_h(&v, f));
            let res = lobpcg(
                &op,
                &precond,
                &[],
                vec![psi.clone()],
                LobpcgOptions {
                    max_iter: opts.inner_iter,
                    tol: 0.0,
                    wanted: 1,
                },
            );
            psi = res.vectors[0].clone();
            if psi.iter().sum::<f64>() < 0.0 {
                psi.iter_mut().for_each(|x| *x = -*x);
            }
            let field = ComplexField::from_real(g, Role::Electron, &psi).normalized();
            psi = field.re();
            let v = potential_of(&sigma_of(&field).scaled(Complex64::new(-1.0, 0.0)));
            let mu = kinetic(&field) + expectation(&v, &field);
            residual = apply_h(&v, &field).add_scaled(Complex64::new(-mu, 0.0), &field)?.norm();
            if residual < 0.99 * best {
                (best, stalled) = (residual, 0);
            } else {
                stalled += 1;
            }
        }
        let field = ComplexField::from_real(g, Role::Electron, &psi).normalized();
        let mut out = Self::assemble(field, self.radial, self.discrepancy.norm_before, None);
        out.refinement = Some(RefineReport {
            iterations,
            initial_residual: initial,
            final_residual: out.scalars.euler_lagrange_residual,
            energy_change: out.e_p - self.e_p,
        });
        Ok(out)
    }

    pub fn d_psi(&self, axis: usize) -> ComplexField {
        derivative(&self.psi, axis)
    }

    pub fn d_phi(&self, axis: usize) -> ComplexField {
        derivative(&self.phi, axis)
    }

    /// `-x_axis ψ_P / 2`, the inverse image of `∂_axis ψ_P` under `H_P`.
    pub fn inverse_image(&self, axis: usize) -> ComplexField {
        coordinate_times(&self.psi, axis).scaled(Complex64::new(-0.5, 0.0))
    }

    /// `H_P f = (h_{φ_P} - μ_P) f`.
    pub fn apply_hp(&self, f: &ComplexField) -> ComplexField {
        apply_h(&self.potential, f).add_scaled(Complex64::new(-self.mu_p, 0.0), f).unwrap()
    }

    /// `(H_P - 4 X_P) f`.
    pub fn apply_stability(&self, f: &ComplexField) -> ComplexField {
        self.apply_hp(f).add_scaled(Complex64::new(-4.0, 0.0), &apply_xp(&self.psi, f)).unwrap()
    }

    pub fn sandwich_identities(&self) -> SandwichReport {
        let d: Vec<ComplexField> = (0..3).map(|a| self.d_psi(a)).collect();
        let inv: Vec<ComplexField> = (0..3).map(|a| self.inverse_image(a)).collect();
        let hd: Vec<ComplexField> = d.iter().map(|f| self.apply_hp(f)).collect();
        let d_phi: [f64; 3] = std::array::from_fn(|a| self.d_phi(a).norm_sq());
        let inverse: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| d[i].real_inner(&inv[j]).unwrap()));
        let forward: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| d[i].real_inner(&hd[j]).unwrap()));
        let residual = self.apply_hp(&inv[0]).sub(&d[0]).unwrap().norm();
        let mut inverse_err: f64 = 0.0;
        let mut forward_err: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let (ti, tf) = if i == j { (0.25, d_phi[j]) } else { (0.0, 0.0) };
                inverse_err = inverse_err.max((inverse[i][j] - ti).abs());
                forward_err = forward_err.max((forward[i][j] - tf).abs());
            }
        }
        SandwichReport {
            inverse,
            forward,
            d_phi_sq: d_phi,
            inverse_image_residual: residual,
            inverse_max_error: inverse_err,
            forward_max_error: forward_err,
        }
    }

    /// Lowest `count` eigenvalues of `Q(H_P - 4X_P)Q` on real fields, `Q = 1 - |ψ_P⟩⟨ψ_P|`.
    pub fn hessian_spectrum(&self, count: usize, opts: &HessianOptions) -> Result<HessianSpectrum> {
        if count < 4 {
            return Err(param("hessian.count", "need at least 4 eigenvalues"));
        }
        let g = self.grid;
        let y = {
            let p = self.psi.re();
            let n = super::lobpcg::dot(&p, &p).sqrt();
            p.iter().map(|x| x / n).collect::<Vec<f64>>()
        };
        let shift = self.mu_p.abs();
        let ys = vec![y];
        let op = |b: &[Vec<f64>]| {
            let mut out = map_real_block(g, b, |f| self.apply_stability(f));
            for v in out.iter_mut() {
                super::lobpcg::project_out(v, &ys);
            }
            out
        };
        let precond = move |b: &[Vec<f64>]| map_real_block(g, b, |f| apply_real_multiplier(f, |i| 1.0 / (g.k_squared(i) + shift)));
        let block = count + opts.extra_block;
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let envelope = self.psi.re();
        let mut x0: Block = (0..3).map(|a| self.d_psi(a).re()).collect();
        while x0.len() < block {
            let noise = crate::spectral::testing::random_field(g, rand::Rng::gen(&mut rng)).re();
            x0.push(noise.iter().zip(&envelope).map(|(a, b)| a * b).collect());
        }
        let res = lobpcg(
            &op,
            &precond,
            &ys,
            x0,
            LobpcgOptions {
                max_iter: opts.max_iter,
                tol: opts.rel_tol * shift,
                wanted: count,
            },
        );
        if !res.converged {
            return Err(Error::NoConvergence {
                what: "Hessian eigensolver",
                iterations: res.iterations,
                residual: res.residuals.iter().take(count).cloned().fold(0.0, f64::max),
            });
        }
        let trial = self.d_psi(0);
        let rq = trial.real_inner(&self.apply_stability(&trial))? / trial.norm_sq();
        Ok(HessianSpectrum {
            values: res.values[..count].to_vec(),
            residuals: res.residuals[..count].to_vec(),
            iterations: res.iterations,
            translation_rayleigh_quotient: rq,
        })
    }

    /// Measures `(𝓔(ψ) - e_P)/‖ψ - ψ_P‖²_{H¹}` along perturbations orthogonal to
    /// the symmetry directions. The distance to the manifold is at most
    /// `‖ψ - ψ_P‖_{H¹}`, so the ratio is a lower estimate of the coercivity constant.
    pub fn coercivity_spot_check(&self, epsilons: &[f64], seed: u64) -> Result<Vec<CoercivitySample>> {
        let g = self.grid;
        let e0 = energy_e(&self.psi)?;
        let mut sym: Vec<ComplexField> = vec![self.psi.clone(), self.psi.scaled(Complex64::i())];
        sym.extend((0..3).map(|a| self.d_psi(a)));
        let sym = gram_schmidt(sym);
        let noise = crate::spectral::testing::random_field(g, seed);
        let mut eta = noise.zip_map(&self.psi, |a, b| a * b.re)?;
        for s in &sym {
            let c = s.real_inner(&eta)?;
            eta = eta.add_scaled(Complex64::new(-c / s.norm_sq(), 0.0), s)?;
        }
        let eta = eta.normalized();
        let mut out = Vec::new();
        for &eps in epsilons {
            let psi = self.psi.add_scaled(Complex64::new(eps, 0.0), &eta)?.normalized();
            let diff = psi.sub(&self.psi)?;
            let h1 = diff.norm_sq() + kinetic(&diff);
            let gap = energy_e(&psi)? - e0;
            out.push(CoercivitySample {
                epsilon: eps,
                energy_gap: gap,
                h1_distance_sq: h1,
                ratio: gap / h1,
            });
        }
        Ok(out)
    }

    pub fn write_snapshots(&self, dir: &Path) -> Result<()> {
        write_snapshot(&dir.join("psi_p.bin"), &self.psi)?;
        write_snapshot(&dir.join("phi_p.bin"), &self.phi)
    }

    pub fn summary(&self) -> SolutionSummary {
        SolutionSummary {
            box_length: self.grid.box_length,
            points: self.grid.points,
            e_p: self.e_p,
            mu_p: self.mu_p,
            scalars: self.scalars,
            radial: self.radial,
            discrepancy: self.discrepancy,
            refinement: self.refinement,
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct SolutionSummary {
    pub box_length: f64,
    pub points: usize,
    pub e_p: f64,
    pub mu_p: f64,
    pub scalars: GridScalars,
    pub radial: RadialReference,
    pub discrepancy: Discrepancy,
    pub refinement: Option<RefineReport>,
}

fn gram_schmidt(vs: Vec<ComplexField>) -> Vec<ComplexField> {
    let mut out: Vec<ComplexField> = Vec::new();
    for mut v in vs {
        for u in &out {
            let c = u.real_inner(&v).unwrap();
            v = v.add_scaled(Complex64::new(-c, 0.0), u).unwrap();
        }
        out.push(v.normalized());
    }
    out
}

/// Applies a real-linear, real-preserving grid operator to a block of real
/// vectors, two at a time packed as `a + i b`.
pub(crate) fn map_real_block(grid: GridSpec, b: &[Vec<f64>], f: impl Fn(&ComplexField) -> ComplexField) -> Block {
    let mut out = Vec::with_capacity(b.len());
    for pair in b.chunks(2) {
        let vals: Vec<Complex64> = if pair.len() == 2 {
            pair[0].iter().zip(&pair[1]).map(|(&x, &y)| Complex64::new(x, y)).collect()
        } else {
            pair[0].iter().map(|&x| Complex64::new(x, 0.0)).collect()
        };
        let r = f(&ComplexField::from_values(grid, Role::Auxiliary, vals));
        out.push(r.re());
        if pair.len() == 2 {
            out.push(r.im());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RefineOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub inner_iter: usize,
}

impl Default for RefineOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iter: 400,
            inner_iter: 3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HessianOptions {
    pub max_iter: usize,
    /// Residual tolerance relative to `|μ_P|`.
    pub rel_tol: f64,
    pub extra_block: usize,
    pub seed: u64,
}

impl Default for HessianOptions {
    fn default() -> Self {
        Self {
            max_iter: 400,
            rel_tol: 1e-4,
            extra_block: 4,
            seed: 7,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HessianSpectrum {
    pub values: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    /// `⟨∂₁ψ_P, (H_P - 4X_P) ∂₁ψ_P⟩ / ‖∂₁ψ_P‖²`.
    pub translation_rayleigh_quotient: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SandwichReport {
    /// `⟨∂ᵢψ_P, -xⱼψ_P/2⟩`, target `δᵢⱼ/4`.
    pub inverse: [[f64; 3]; 3],
    /// `⟨∂ᵢψ_P, H_P ∂ⱼψ_P⟩`, target `δᵢⱼ ‖∂ⱼφ_P‖²`.
    pub forward: [[f64; 3]; 3],
    pub d_phi_sq: [f64; 3],
    /// `‖H_P(-x₁ψ_P/2) - ∂₁ψ_P‖`.
    pub inverse_image_residual: f64,
    pub inverse_max_error: f64,
    pub forward_max_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoercivitySample {
    pub epsilon: f64,
    pub energy_gap: f64,
    pub h1_distance_sq: f64,
    pub ratio: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertifyOptions {
    /// Upper bound on the zero-mode deficit `(∫|ψ|²)²/(L³‖ψ‖₄⁴)`.
    pub deficit_target: f64,
    /// Upper bound on the radial mass outside the ball of radius `3L/8`.
    pub boundary_tol: f64,
    /// Upper bound on [`Discrepancy::resolution`].
    pub resolution_tol: f64,
    pub max_dx_fraction: f64,
    pub max_points: usize,
}

impl Default for CertifyOptions {
    fn default() -> Self {
        Self {
            deficit_target: 9e-5,
            boundary_tol: 1e-8,
            resolution_tol: 1e-5,
            max_dx_fraction: 0.5,
            max_points: 192,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridCertificate {
    pub box_length: f64,
    pub points: usize,
    pub length_from_deficit: f64,
    pub length_from_boundary: f64,
    pub attempts: usize,
    pub resolution: f64,
    pub zero_mode_deficit: f64,
}

/// Smallest even `n' ≥ n` with no prime factor above 5.
pub fn fft_friendly(n: usize) -> usize {
    let mut m = n.max(8);
    m += m % 2;
    loop {
        let mut r = m;
        for p in [2, 3, 5] {
            while r % p == 0 {
                r /= p;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}

/// Picks the smallest torus on which the lifted profile matches the radial
/// reference: `L` from the zero-mode deficit and boundary-mass targets, then
/// `N` grown until the resolution discrepancy is below tolerance.
pub fn certify_grid(sol: &RadialSolution, opts: &CertifyOptions) -> Result<(PekarSolution, GridCertificate)> {
    let l_deficit = (1.0 / (opts.deficit_target * sol.scalars.psi_l4)).cbrt();
    let dr = sol.dr();
    let r_boundary = (0..sol.u.len())
        .map(|i| i as f64 * dr)
        .find(|&r| sol.mass_outside(r) < opts.boundary_tol)
        .ok_or_else(|| param("certify.boundary_tol", "radial profile never reaches the boundary tolerance"))?;
    let l_boundary = r_boundary * 8.0 / 3.0;
    let l = (l_deficit.max(l_boundary) / 10.0).ceil() * 10.0;
    let dx0 = opts.max_dx_fraction * sol.scalars.half_width;
    let mut n = fft_friendly((l / dx0).ceil() as usize);
    let lift = LiftOptions {
        max_dx_fraction: opts.max_dx_fraction,
    };
    let mut attempts = 0;
    loop {
        if n > opts.max_points {
            return Err(Error::Unresolved(format!(
                "no grid with at most {} points resolves L = {l}",
                opts.max_points
            )));
        }
        attempts += 1;
        let lifted = PekarSolution::lift(sol, GridSpec::new(l, n)?, &lift)?;
        if lifted.discrepancy.resolution < opts.resolution_tol {
            let cert = GridCertificate {
                box_length: l,
                points: n,
                length_from_deficit: l_deficit,
                length_from_boundary: l_boundary,
                attempts,
                resolution: lifted.discrepancy.resolution,
                zero_mode_deficit: lifted.scalars.zero_mode_deficit,
            };
            return Ok((lifted, cert));
        }
        n = fft_friendly(n * 5 / 4 + 1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{radial, small};
    use proptest::prelude::*;

    #[test]
    fn lift_rejects_coarse_grids_and_rescaled_profiles() {
        let r = radial();
        assert!(matches!(
            PekarSolution::lift(r, GridSpec::new(640.0, 8).unwrap(), &LiftOptions::default()),
            Err(Error::Unresolved(_))
        ));
        let mut scaled = r.clone();
        scaled.params.coupling_scale = 2.0;
        assert!(PekarSolution::lift(&scaled, GridSpec::new(640.0, 32).unwrap(), &LiftOptions::default()).is_err());
    }

    #[test]
    fn polished_minimizer_is_consistent() {
        let s = small();
        let rep = s.refinement.unwrap();
        assert!(rep.final_residual < rep.initial_residual && rep.final_residual < 1e-10);
        assert!(rep.energy_change <= 0.0);
        assert!((s.psi.norm() - 1.0).abs() < 1e-13);
        assert!(s.psi.max_abs_imag() == 0.0);
        let sigma = sigma_of(&s.psi);
        assert!(s.phi.add_scaled(Complex64::new(1.0, 0.0), &sigma).unwrap().norm() < 1e-15);
        // On this small box the polished profile differs from the radial one at the percent level.
        assert!((s.scalars.q / s.radial.scalars.q - 1.0).abs() < 0.02);
        assert!((s.scalars.kinetic / s.radial.scalars.kinetic - 1.0).abs() < 0.02);
        let shift = s.e_p - s.radial.e_p;
        assert!((shift / s.discrepancy.e_p_torus_shift - 1.0).abs() < 0.01, "{shift} vs {}", s.discrepancy.e_p_torus_shift);
    }

    #[test]
    fn sandwich_identities_hold() {
        let rep = small().sandwich_identities();
        assert!(rep.inverse_max_error < 1e-6, "{rep:?}");
        assert!(rep.forward_max_error < 1e-12);
        assert!(rep.inverse_image_residual < 1e-3);
    }

    #[test]
    fn hessian_kernel_is_translations() {
        let h = small().hessian_spectrum(4, &HessianOptions::default()).unwrap();
        for v in &h.values[..3] {
            assert!(v.abs() < 1e-3 * h.values[3], "{h:?}");
        }
        assert!(h.values[3] > 0.0);
        assert!(h.translation_rayleigh_quotient.abs() < 1e-3 * h.values[3]);
        assert!(small().hessian_spectrum(3, &HessianOptions::default()).is_err());
    }

    #[test]
    fn energy_grows_quadratically_off_the_manifold() {
        let samples = small().coercivity_spot_check(&[1e-2, 3e-2, 1e-1], 11).unwrap();
        for s in &samples {
            assert!(s.energy_gap > 0.0 && s.ratio > 0.0, "{samples:?}");
        }
        let r0 = samples[0].ratio;
        assert!((samples[1].ratio / r0 - 1.0).abs() < 0.1);
    }

    #[test]
    fn coordinate_multiplication_is_odd() {
        let s = small();
        let x = coordinate_times(&s.psi, 1);
        // Only the unpaired face at -L/2 breaks the symmetry.
        assert!(x.inner(&s.psi).unwrap().norm() < 1e-3 * x.norm());
        assert!((x.norm_sq() / 4.0 - s.scalars.q).abs() < 1e-9 * s.scalars.q);
    }

    #[test]
    fn snapshots_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let s = small();
        s.write_snapshots(dir.path()).unwrap();
        let psi = crate::spectral::snapshot::read_snapshot(&dir.path().join("psi_p.bin")).unwrap();
        assert_eq!(psi.values(), s.psi.values());
        let js = serde_json::to_string(&s.summary()).unwrap();
        assert!(js.contains("zero_mode_deficit"));
    }

    #[test]
    fn certified_grid_meets_its_targets() {
        let opts = CertifyOptions {
            deficit_target: 1e-2,
            resolution_tol: 1e-4,
            max_points: 64,
            ..CertifyOptions::default()
        };
        let (sol, cert) = certify_grid(radial(), &opts).unwrap();
        assert!(cert.zero_mode_deficit < opts.deficit_target);
        assert!(cert.resolution < opts.resolution_tol);
        assert!(cert.box_length >= cert.length_from_deficit.max(cert.length_from_boundary));
        assert_eq!(sol.grid.points, cert.points);
        let tight = CertifyOptions { max_points: 16, ..opts };
        assert!(matches!(certify_grid(radial(), &tight), Err(Error::Unresolved(_))));
    }

    proptest! {
        #[test]
        fn fft_sizes_are_even_and_smooth(n in 0usize..2000) {
            let m = fft_friendly(n);
            prop_assert!(m >= n.max(8) && m % 2 == 0);
            let mut r = m;
            for p in [2, 3, 5] {
                while r % p == 0 {
                    r /= p;
                }
            }
            prop_assert_eq!(r, 1);
            for k in (n.max(8)..m).filter(|k| k % 2 == 0) {
                prop_assert!(fft_friendly(k) == m);
            }
        }
    }
}
