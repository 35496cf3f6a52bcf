//! Projections onto the orbits of the Pekar minimizer under translations
//! (phonon field) and translations plus phases (electron), and the phonon
//! position and velocity they induce.

use nalgebra::{Matrix3, Vector3};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{param, Error, Result};
use crate::pekar::lobpcg::{lobpcg, LobpcgOptions};
use crate::pekar::PekarSolution;
use crate::spectral::{
    apply_h, apply_real_multiplier, energy_e, forward, inverse, kinetic, potential_of, translate, ComplexField,
    GridSpec, Role,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    L2,
    H1,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProjectionOptions {
    /// Refuse when the distance exceeds this fraction of the template norm.
    pub delta_fraction: f64,
    /// First-order residual relative to its Cauchy–Schwarz scale.
    pub tol: f64,
    pub max_newton: usize,
    pub max_halvings: usize,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            delta_fraction: 0.25,
            tol: 1e-10,
            max_newton: 50,
            max_halvings: 40,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononProjection {
    pub z: [f64; 3],
    pub distance: f64,
    /// `A_ij = -Re⟨φ, ∂_i∂_j φ_P^z⟩`.
    pub jacobian: [[f64; 3]; 3],
    /// `Re⟨φ, ∂_i φ_P^z⟩`.
    pub residual: [f64; 3],
    pub newton_iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectronProjection {
    pub y: [f64; 3],
    pub theta: f64,
    pub metric: Metric,
    pub distance: f64,
    pub residual: [f64; 3],
    pub newton_iterations: usize,
}

/// Fourier data of the minimizer reused across projections.
#[derive(Clone, Debug)]
pub struct Templates {
    grid: GridSpec,
    psi_hat: Vec<Complex64>,
    phi_hat: Vec<Complex64>,
    psi_norm_sq: [f64; 2],
    phi_norm_sq: f64,
}

struct Correlation {
    value: Complex64,
    grad: [Complex64; 3],
    hess: [[Complex64; 3]; 3],
}

impl Templates {
    pub fn new(sol: &PekarSolution) -> Self {
        let psi_hat = forward(&sol.psi);
        let phi_hat = forward(&sol.phi);
        let psi_norm_sq = [sol.psi.norm_sq(), sol.psi.norm_sq() + kinetic(&sol.psi)];
        Self {
            grid: sol.grid,
            psi_hat,
            phi_hat,
            psi_norm_sq,
            phi_norm_sq: sol.phi.norm_sq(),
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Parseval weight; `filtered` drops the Nyquist planes so that first
    /// derivatives of the correlation match the grid derivative.
    fn weight(&self, idx: usize, metric: Metric, filtered: bool) -> f64 {
        let g = &self.grid;
        if filtered {
            let (a, b, c) = g.split(idx);
            if [a, b, c].contains(&(g.points / 2)) {
                return 0.0;
            }
        }
        let w = g.cell_volume() / g.len() as f64;
        match metric {
            Metric::L2 => w,
            Metric::H1 => w * (1.0 + self.grid.k_squared(idx)),
        }
    }

    /// `p(k) = conj(ĝ) f̂ W(k)` for the template `ĝ` and target `f̂`.
    fn product(&self, template: &[Complex64], target: &[Complex64], metric: Metric, filtered: bool) -> Vec<Complex64> {
        template
            .iter()
            .zip(target)
            .enumerate()
            .map(|(i, (g, f))| g.conj() * f * self.weight(i, metric, filtered))
            .collect()
    }

    /// Cauchy–Schwarz scale of the first derivative of the correlation.
    fn gradient_scale(&self, template: &[Complex64], target: &[Complex64], metric: Metric) -> f64 {
        let (mut a, mut b) = (0.0, 0.0);
        for (i, (g, f)) in template.iter().zip(target).enumerate() {
            let w = self.weight(i, metric, true);
            a += f.norm_sqr() * w;
            b += g.norm_sqr() * w * self.grid.k_squared(i);
        }
        (a * b).sqrt()
    }

    /// `s(y) = Σ_k p(k) e^{ik·y}` with its first and second derivatives in `y`.
    fn correlate(&self, p: &[Complex64], y: [f64; 3]) -> Correlation {
        let g = self.grid;
        let n = g.points;
        let k: Vec<f64> = (0..n).map(|i| g.wavenumber(i)).collect();
        let phases: Vec<Vec<Complex64>> = (0..3)
            .map(|a| k.iter().map(|&kk| Complex64::from_polar(1.0, kk * y[a])).collect())
            .collect();
        let mut value = Complex64::new(0.0, 0.0);
        let mut grad = [Complex64::new(0.0, 0.0); 3];
        let mut hess = [[Complex64::new(0.0, 0.0); 3]; 3];
        for a in 0..n {
            for b in 0..n {
                let pab = phases[0][a] * phases[1][b];
                let row = &p[(a * n + b) * n..(a * n + b + 1) * n];
                let mut s0 = Complex64::new(0.0, 0.0);
                let mut s3 = Complex64::new(0.0, 0.0);
                let mut s33 = Complex64::new(0.0, 0.0);
                for (c, v) in row.iter().enumerate() {
                    let t = v * phases[2][c];
                    s0 += t;
                    s3 += t * k[c];
                    s33 += t * (k[c] * k[c]);
                }
                let (s0, s3, s33) = (s0 * pab, s3 * pab, s33 * pab);
                let kv = [k[a], k[b]];
                value += s0;
                let i = Complex64::i();
                grad[0] += i * kv[0] * s0;
                grad[1] += i * kv[1] * s0;
                grad[2] += i * s3;
                hess[0][0] -= kv[0] * kv[0] * s0;
                hess[1][1] -= kv[1] * kv[1] * s0;
                hess[0][1] -= kv[0] * kv[1] * s0;
                hess[0][2] -= kv[0] * s3;
                hess[1][2] -= kv[1] * s3;
                hess[2][2] -= s33;
            }
        }
        hess[1][0] = hess[0][1];
        hess[2][0] = hess[0][2];
        hess[2][1] = hess[1][2];
        Correlation { value, grad, hess }
    }

    /// Lattice shift maximizing `objective(s(y))`.
    fn scan(&self, p: &[Complex64], objective: impl Fn(Complex64) -> f64) -> [f64; 3] {
        let g = self.grid;
        let corr = inverse(g, Role::Auxiliary, p.to_vec());
        let (best, _) = corr
            .values()
            .iter()
            .enumerate()
            .map(|(i, v)| (i, objective(v * g.len() as f64)))
            .fold((0, f64::NEG_INFINITY), |acc, (i, o)| if o > acc.1 { (i, o) } else { acc });
        let (a, b, c) = g.split(best);
        [a, b, c].map(|i| g.frequency(i) as f64 * g.dx())
    }

    /// Newton ascent on `objective`, with step halving.
    fn maximize(
        &self,
        p: &[Complex64],
        start: [f64; 3],
        kind: Objective,
        scale: f64,
        opts: &ProjectionOptions,
    ) -> Result<([f64; 3], Correlation, [f64; 3], usize)> {
        if !(scale > 0.0) {
            return Err(Error::ProjectionRefused("field has no overlap with the template".into()));
        }
        let mut y = Vector3::from(start);
        let mut cur = self.correlate(p, start);
        for it in 0..=opts.max_newton {
            let (val, grad, hess) = kind.derivatives(&cur);
            let first = kind.first_order(&cur);
            if first.iter().all(|f| f.abs() < opts.tol * scale) {
                // One more Newton step: the gradient test is loose against the curvature.
                if let Some(c) = (-hess).cholesky() {
                    let trial = y + c.solve(&grad);
                    let next = self.correlate(p, trial.into());
                    if kind.value(&next) >= val - 1e-15 * val.abs() {
                        let f = kind.first_order(&next);
                        return Ok((trial.into(), next, f, it + 1));
                    }
                }
                return Ok((y.into(), cur, first, it));
            }
            if it == opts.max_newton {
                break;
            }
            let step = match (-hess).cholesky() {
                Some(c) => c.solve(&grad),
                None => grad / hess.norm().max(f64::MIN_POSITIVE),
            };
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..=opts.max_halvings {
                let trial = y + step * t;
                let next = self.correlate(p, trial.into());
                if kind.value(&next) >= val - 1e-15 * val.abs() {
                    y = trial;
                    cur = next;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                let res = first.iter().fold(0.0f64, |a, b| a.max(b.abs())) / scale;
                return Err(Error::NoConvergence {
                    what: "manifold projection",
                    iterations: it,
                    residual: res,
                });
            }
        }
        let first = kind.first_order(&cur);
        Err(Error::NoConvergence {
            what: "manifold projection",
            iterations: opts.max_newton,
            residual: first.iter().fold(0.0f64, |a, b| a.max(b.abs())) / scale,
        })
    }

    pub fn project_phonon(&self, phi: &ComplexField, guess: Option<[f64; 3]>, opts: &ProjectionOptions) -> Result<PhononProjection> {
        check_grid(&self.grid, phi)?;
        let target = forward(phi);
        let p = self.product(&self.phi_hat, &target, Metric::L2, true);
        let start = guess.unwrap_or_else(|| self.scan(&p, |s| s.re));
        let scale = self.gradient_scale(&self.phi_hat, &target, Metric::L2);
        let (z, cur, _, iterations) = self.maximize(&p, start, Objective::Real, scale, opts)?;
        let full = self.product(&self.phi_hat, &target, Metric::L2, false);
        let dist_sq = phi.norm_sq() + self.phi_norm_sq - 2.0 * self.correlate(&full, z).value.re;
        let distance = dist_sq.max(0.0).sqrt();
        if distance > opts.delta_fraction * self.phi_norm_sq.sqrt() {
            return Err(Error::ProjectionRefused(format!(
                "phonon distance {distance:e} exceeds {} x ‖φ_P‖",
                opts.delta_fraction
            )));
        }
        Ok(PhononProjection {
            z,
            distance,
            jacobian: std::array::from_fn(|i| std::array::from_fn(|j| -cur.hess[i][j].re)),
            residual: std::array::from_fn(|i| -cur.grad[i].re),
            newton_iterations: iterations,
        })
    }

    pub fn project_electron(
        &self,
        psi: &ComplexField,
        metric: Metric,
        guess: Option<[f64; 3]>,
        opts: &ProjectionOptions,
    ) -> Result<ElectronProjection> {
        check_grid(&self.grid, psi)?;
        let target = forward(psi);
        let p = self.product(&self.psi_hat, &target, metric, true);
        let start = guess.unwrap_or_else(|| self.scan(&p, |s| s.norm()));
        let scale = self.gradient_scale(&self.psi_hat, &target, metric);
        let (y, _, residual, iterations) = self.maximize(&p, start, Objective::Modulus, scale, opts)?;
        let cur = self.correlate(&self.product(&self.psi_hat, &target, metric, false), y);
        let own = match metric {
            Metric::L2 => psi.norm_sq(),
            Metric::H1 => psi.norm_sq() + kinetic(psi),
        };
        let template = self.psi_norm_sq[metric as usize];
        let distance = (own + template - 2.0 * cur.value.norm()).max(0.0).sqrt();
        if distance > opts.delta_fraction * template.sqrt() {
            return Err(Error::ProjectionRefused(format!(
                "electron distance {distance:e} exceeds {} x ‖ψ_P‖",
                opts.delta_fraction
            )));
        }
        Ok(ElectronProjection {
            y,
            theta: cur.value.arg().rem_euclid(std::f64::consts::TAU),
            metric,
            distance,
            residual,
            newton_iterations: iterations,
        })
    }

    /// `dz/dt` along the Landau–Pekar flow, from differentiating the
    /// orthogonality condition `Re⟨φ_t, ∇φ_P^{z(t)}⟩ = 0`:
    /// `A ż = -α⁻² ⟨Im φ, ∇φ_P^z⟩`.
    pub fn phonon_velocity(&self, phi: &ComplexField, alpha: f64, proj: &PhononProjection) -> Result<[f64; 3]> {
        check_grid(&self.grid, phi)?;
        if !(alpha > 0.0) {
            return Err(param("alpha", "phonon velocity needs α > 0"));
        }
        let im = phi.imag_part();
        let target = forward(&im);
        let p = self.product(&self.phi_hat, &target, Metric::L2, true);
        let cur = self.correlate(&p, proj.z);
        // ⟨Im φ, ∂_i φ_P^z⟩ = -Re ∂_i s(z)
        let rhs = Vector3::from_fn(|i, _| cur.grad[i].re / (alpha * alpha));
        let a = Matrix3::from_fn(|i, j| proj.jacobian[i][j]);
        let lu = a.lu();
        if lu.determinant().abs() < 1e-300 {
            return Err(Error::ProjectionRefused("singular phonon Jacobian".into()));
        }
        let v = lu.solve(&rhs).ok_or_else(|| Error::ProjectionRefused("singular phonon Jacobian".into()))?;
        Ok(v.into())
    }
}

fn check_grid(g: &GridSpec, f: &ComplexField) -> Result<()> {
    g.same_as(f.grid())
}

#[derive(Clone, Copy)]
enum Objective {
    /// `Re s`.
    Real,
    /// `|s|²`.
    Modulus,
}

impl Objective {
    fn value(&self, c: &Correlation) -> f64 {
        match self {
            Objective::Real => c.value.re,
            Objective::Modulus => c.value.norm_sqr(),
        }
    }

    fn derivatives(&self, c: &Correlation) -> (f64, Vector3<f64>, Matrix3<f64>) {
        match self {
            Objective::Real => (
                c.value.re,
                Vector3::from_fn(|i, _| c.grad[i].re),
                Matrix3::from_fn(|i, j| c.hess[i][j].re),
            ),
            Objective::Modulus => (
                c.value.norm_sqr(),
                Vector3::from_fn(|i, _| 2.0 * (c.value.conj() * c.grad[i]).re),
                Matrix3::from_fn(|i, j| 2.0 * (c.grad[i].conj() * c.grad[j] + c.value.conj() * c.hess[i][j]).re),
            ),
        }
    }

    /// First-order conditions in the natural units of the objective.
    fn first_order(&self, c: &Correlation) -> [f64; 3] {
        match self {
            Objective::Real => std::array::from_fn(|i| -c.grad[i].re),
            Objective::Modulus => {
                let m = c.value.norm().max(f64::MIN_POSITIVE);
                std::array::from_fn(|i| (c.value.conj() * c.grad[i]).re / m)
            }
        }
    }
}

pub fn project_phonon(
    phi: &ComplexField,
    sol: &PekarSolution,
    guess: Option<[f64; 3]>,
    opts: &ProjectionOptions,
) -> Result<PhononProjection> {
    Templates::new(sol).project_phonon(phi, guess, opts)
}

pub fn project_electron(
    psi: &ComplexField,
    sol: &PekarSolution,
    metric: Metric,
    guess: Option<[f64; 3]>,
    opts: &ProjectionOptions,
) -> Result<ElectronProjection> {
    Templates::new(sol).project_electron(psi, metric, guess, opts)
}

/// `𝓕(φ) = inf spec h_φ + ‖φ‖²`, with the ground state seeded by `seed`.
pub fn field_energy(phi: &ComplexField, seed: &ComplexField) -> Result<f64> {
    let g = *phi.grid();
    let v = potential_of(phi);
    let x0 = seed.map(|c| Complex64::new(c.norm(), 0.0)).re();
    let shift = v.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
    let op = |b: &[Vec<f64>]| {
        crate::pekar::solution::map_real_block(g, b, |f| apply_h(&v, f))
    };
    let precond = move |b: &[Vec<f64>]| {
        crate::pekar::solution::map_real_block(g, b, |f| apply_real_multiplier(f, |i| 1.0 / (g.k_squared(i) + shift)))
    };
    let res = lobpcg(
        &op,
        &precond,
        &[],
        vec![x0],
        LobpcgOptions {
            max_iter: 200,
            tol: 1e-8 * shift,
            wanted: 1,
        },
    );
    if !res.converged {
        return Err(Error::NoConvergence {
            what: "field energy eigensolver",
            iterations: res.iterations,
            residual: res.residuals[0],
        });
    }
    Ok(res.values[0] + phi.norm_sq())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDiagnostics {
    pub phonon_distance: f64,
    pub electron_distance_h1: f64,
    pub field_energy: f64,
    pub electron_energy: f64,
    /// `(𝓕(φ) - e_P)/dist²`; `None` on the manifold.
    pub phonon_ratio: Option<f64>,
    /// `(𝓔(ψ) - e_P)/dist²`; `None` on the manifold.
    pub electron_ratio: Option<f64>,
}

/// Distances below this are treated as on-manifold.
pub const ON_MANIFOLD: f64 = 1e-9;

pub fn manifold_distances(
    psi: &ComplexField,
    phi: &ComplexField,
    sol: &PekarSolution,
    templates: &Templates,
    opts: &ProjectionOptions,
) -> Result<ManifoldDiagnostics> {
    let pp = templates.project_phonon(phi, None, opts)?;
    let ep = templates.project_electron(psi, Metric::H1, None, opts)?;
    let seed = translate(&sol.psi, pp.z);
    let field = field_energy(phi, &seed)?;
    let electron = energy_e(psi)?;
    let ratio = |gap: f64, d: f64| if d < ON_MANIFOLD { None } else { Some(gap / (d * d)) };
    Ok(ManifoldDiagnostics {
        phonon_distance: pp.distance,
        electron_distance_h1: ep.distance,
        field_energy: field,
        electron_energy: electron,
        phonon_ratio: ratio(field - sol.e_p, pp.distance),
        electron_ratio: ratio(electron - sol.e_p, ep.distance),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::{random_field, small};
    use proptest::prelude::*;

    fn opts() -> ProjectionOptions {
        ProjectionOptions::default()
    }

    fn assert_close(a: [f64; 3], b: [f64; 3], tol: f64) {
        for k in 0..3 {
            assert!((a[k] - b[k]).abs() < tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn jacobian_at_the_minimizer_is_isotropic() {
        let s = small();
        let p = Templates::new(s).project_phonon(&s.phi, None, &opts()).unwrap();
        let d = s.scalars.d1_phi_sq;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { d } else { 0.0 };
                assert!((p.jacobian[i][j] - want).abs() < 1e-6 * d, "{i}{j}: {:?}", p.jacobian);
            }
        }
        assert_close(p.z, [0.0; 3], 1e-12);
        assert!(p.distance < 1e-9);
    }

    #[test]
    fn far_fields_are_refused() {
        let s = small();
        let t = Templates::new(s);
        let zero = ComplexField::zeros(s.grid, crate::spectral::Role::Phonon);
        assert!(matches!(t.project_phonon(&zero, None, &opts()), Err(Error::ProjectionRefused(_))));
        let far = s.phi.scaled(Complex64::new(0.5, 0.0));
        assert!(matches!(t.project_phonon(&far, None, &opts()), Err(Error::ProjectionRefused(_))));
        let noise = random_field(s.grid, 1).normalized();
        assert!(matches!(
            t.project_electron(&noise, Metric::L2, None, &opts()),
            Err(Error::ProjectionRefused(_))
        ));
    }

    #[test]
    fn grid_mismatch_is_an_error() {
        let s = small();
        let other = ComplexField::zeros(GridSpec::new(640.0, 16).unwrap(), crate::spectral::Role::Phonon);
        assert!(Templates::new(s).project_phonon(&other, None, &opts()).is_err());
    }

    #[test]
    fn phonon_velocity_of_a_boosted_field() {
        let s = small();
        let t = Templates::new(s);
        for (v, alpha) in [(1e-3, 1.0), (-2e-4, 3.0)] {
            let phi = s.phi.add_scaled(Complex64::new(0.0, -v * alpha * alpha), &s.d_phi(0)).unwrap();
            let p = t.project_phonon(&phi, None, &opts()).unwrap();
            let u = t.phonon_velocity(&phi, alpha, &p).unwrap();
            assert_close(u, [v, 0.0, 0.0], 1e-8 * v.abs());
        }
    }

    #[test]
    fn field_and_electron_energies_at_the_minimizer() {
        let s = small();
        let t = Templates::new(s);
        let d = manifold_distances(&s.psi, &s.phi, s, &t, &opts()).unwrap();
        assert!((d.field_energy - s.e_p).abs() < 1e-10 * s.e_p.abs());
        assert!((d.electron_energy - s.e_p).abs() < 1e-10 * s.e_p.abs());
        assert!(d.phonon_ratio.is_none() && d.electron_ratio.is_none());
    }

    #[test]
    fn perturbed_states_sit_above_e_p() {
        let s = small();
        let t = Templates::new(s);
        let bump = random_field(s.grid, 5).zip_map(&s.psi, |a, b| a * b.re).unwrap().normalized();
        let psi = s.psi.add_scaled(Complex64::new(0.05, 0.0), &bump).unwrap().normalized();
        let phi = s.phi.add_scaled(Complex64::new(0.02 * s.phi.norm(), 0.0), &bump).unwrap();
        let d = manifold_distances(&psi, &phi, s, &t, &opts()).unwrap();
        assert!(d.phonon_ratio.unwrap() > 0.0 && d.electron_ratio.unwrap() > 0.0, "{d:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]

        #[test]
        fn translated_minimizer_is_recovered(
            y in prop::array::uniform3(-60.0f64..60.0),
            theta in 0.0f64..std::f64::consts::TAU,
        ) {
            let s = small();
            let t = Templates::new(s);
            let p = t.project_phonon(&translate(&s.phi, y), None, &opts()).unwrap();
            for k in 0..3 {
                prop_assert!((p.z[k] - y[k]).abs() < 1e-8, "{:?} vs {:?}", p.z, y);
            }
            let psi = translate(&s.psi, y).scaled(Complex64::from_polar(1.0, theta));
            for metric in [Metric::L2, Metric::H1] {
                let e = t.project_electron(&psi, metric, None, &opts()).unwrap();
                for k in 0..3 {
                    prop_assert!((e.y[k] - y[k]).abs() < 1e-8);
                }
                let dth = (e.theta - theta + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
                prop_assert!(dth.abs() < 1e-10);
                prop_assert!(e.distance < 1e-6);
            }
        }
    }
}
