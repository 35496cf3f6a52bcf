use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;
use std::path::Path;

use crate::error::{param, Error, Result};

/// Tail amplitude (relative to `max |u|`) tolerated beyond `0.9 R`.
pub const DECAY_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadialParams {
    pub dr: f64,
    pub cutoff: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Potential mixing `β ∈ (0, 1]`; 1 is plain alternating minimization.
    pub mixing: f64,
    /// Multiplies the Coulomb coefficient `1/(4π)`.
    pub coupling_scale: f64,
    /// Combine scalars from `dr` and `2 dr` to cancel the `O(dr²)` error.
    pub richardson: bool,
}

impl Default for RadialParams {
    fn default() -> Self {
        Self {
            dr: 0.05,
            cutoff: 800.0,
            tol: 1e-14,
            max_iter: 500,
            mixing: 1.0,
            coupling_scale: 1.0,
            richardson: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub energy: f64,
    pub eigenvalue: f64,
    pub change: f64,
}

/// Scalars of the radial minimizer. Everything is a 1D quadrature of `u`;
/// `grad_phi_sq` and `phi_sq_spectral` come from the radial Fourier transform
/// of `|ψ|²` and are independent of the real-space values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialScalars {
    pub kinetic: f64,
    pub psi_l4: f64,
    pub grad_phi_sq: f64,
    pub phi_sq: f64,
    pub phi_sq_spectral: f64,
    pub q: f64,
    pub psi_center: f64,
    pub half_width: f64,
    pub tail_ratio: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RadialSolution {
    pub params: RadialParams,
    /// `u_i = r_i ψ(r_i)` at `r_i = i dr`, `i = 0..=M`, with `u_0 = u_M = 0`.
    pub u: Vec<f64>,
    pub e_p: f64,
    pub mu_p: f64,
    pub scalars: RadialScalars,
    /// Scalars at `dr` alone, before extrapolation.
    pub raw: RawScalars,
    pub log: Vec<IterationRecord>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawScalars {
    pub e_p: f64,
    pub mu_p: f64,
    pub scalars: RadialScalars,
}

struct Discrete {
    dr: f64,
    m: usize,
}

impl Discrete {
    fn r(&self, i: usize) -> f64 {
        i as f64 * self.dr
    }

    fn norm_sq(&self, u: &[f64]) -> f64 {
        4.0 * PI * self.dr * u.iter().map(|x| x * x).sum::<f64>()
    }

    fn kinetic(&self, u: &[f64]) -> f64 {
        4.0 * PI * u.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum::<f64>() / self.dr
    }

    /// `Φ = r W` with `W = (-Δ)^{-1} ρ`, from the three-point Poisson problem
    /// `-(rW)'' = u²/r`, `Φ(0) = 0`, `Φ(R) = ∫ u²`.
    fn coulomb(&self, u: &[f64]) -> Vec<f64> {
        let (dr, m) = (self.dr, self.m);
        let h2 = dr * dr;
        let q: f64 = dr * u.iter().map(|x| x * x).sum::<f64>();
        let mut rhs: Vec<f64> = (1..m).map(|i| h2 * u[i] * u[i] / self.r(i)).collect();
        *rhs.last_mut().unwrap() += q;
        let n = m - 1;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        c[0] = -1.0 / 2.0;
        d[0] = rhs[0] / 2.0;
        for i in 1..n {
            let den = 2.0 + c[i - 1];
            c[i] = -1.0 / den;
            d[i] = (rhs[i] + d[i - 1]) / den;
        }
        let mut phi = vec![0.0; m + 1];
        phi[m] = q;
        phi[n] = d[n - 1];
        for i in (1..n).rev() {
            phi[i] = d[i - 1] - c[i - 1] * phi[i + 1];
        }
        phi
    }

    /// `⟨ρ, (-Δ)^{-1} ρ⟩` for the discrete functional.
    fn self_energy(&self, u: &[f64], phi: &[f64]) -> f64 {
        4.0 * PI * self.dr * (1..self.m).map(|i| u[i] * u[i] / self.r(i) * phi[i]).sum::<f64>()
    }

    fn potential(&self, phi: &[f64], coupling: f64) -> Vec<f64> {
        (0..=self.m)
            .map(|i| if i == 0 { 0.0 } else { -2.0 * coupling * phi[i] / self.r(i) })
            .collect()
    }

    fn rayleigh(&self, u: &[f64], v: &[f64]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        let h2 = self.dr * self.dr;
        for i in 1..self.m {
            let lap = (2.0 * u[i] - u[i - 1] - u[i + 1]) / h2;
            num += u[i] * (lap + v[i] * u[i]);
            den += u[i] * u[i];
        }
        num / den
    }

    /// Number of eigenvalues of the interior tridiagonal operator below `s`.
    fn count_below(&self, v: &[f64], s: f64) -> usize {
        let h2 = self.dr * self.dr;
        let off2 = 1.0 / (h2 * h2);
        let mut d = 1.0;
        let mut count = 0;
        for (k, vi) in v.iter().enumerate().take(self.m).skip(1) {
            let a = 2.0 / h2 + vi - s;
            d = if k == 1 { a } else { a - off2 / d };
            if d == 0.0 {
                d = -f64::EPSILON * (2.0 / h2);
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Solves `(A - s) x = b` on the interior nodes.
    fn shifted_solve(&self, v: &[f64], s: f64, b: &[f64]) -> Vec<f64> {
        let (m, h2) = (self.m, self.dr * self.dr);
        let off = -1.0 / h2;
        let n = m - 1;
        let mut c = vec![0.0; n];
        let mut d = vec![0.0; n];
        for k in 0..n {
            let i = k + 1;
            let a = 2.0 / h2 + v[i] - s;
            if k == 0 {
                c[k] = off / a;
                d[k] = b[i] / a;
            } else {
                let den = a - off * c[k - 1];
                c[k] = off / den;
                d[k] = (b[i] - off * d[k - 1]) / den;
            }
        }
        let mut x = vec![0.0; m + 1];
        x[n] = d[n - 1];
        for k in (0..n - 1).rev() {
            x[k + 1] = d[k] - c[k] * x[k + 2];
        }
        x
    }

    /// Lowest eigenpair of `-d²/dr² + V` with Dirichlet ends.
    fn ground_state(&self, v: &[f64], guess: &[f64]) -> (f64, Vec<f64>) {
        let mut lo = v[1..self.m].iter().cloned().fold(f64::INFINITY, f64::min);
        let mut hi = self.rayleigh(guess, v);
        if self.count_below(v, hi) == 0 {
            hi += (hi - lo).abs().max(1e-12);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(v, mid) >= 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let shift = lo - 1e-9 * lo.abs().max(1e-12);
        let mut x = guess.to_vec();
        for _ in 0..4 {
            x = self.shifted_solve(v, shift, &x);
            let n = self.norm_sq(&x).sqrt();
            x.iter_mut().for_each(|e| *e /= n);
        }
        if x.iter().sum::<f64>() < 0.0 {
            x.iter_mut().for_each(|e| *e = -*e);
        }
        (self.rayleigh(&x, v), x)
    }
}

fn solve_single(params: &RadialParams) -> Result<RadialSolution> {
    let p = params.clone();
    if !(p.dr > 0.0 && p.cutoff > 0.0 && p.cutoff / p.dr >= 16.0) {
        return Err(param("radial.dr", "need dr > 0 and cutoff/dr >= 16"));
    }
    if !(p.tol > 0.0) {
        return Err(param("radial.tol", "must be positive"));
    }
    if !(p.mixing > 0.0 && p.mixing <= 1.0) {
        return Err(param("radial.mixing", "must lie in (0, 1]"));
    }
    if !(p.coupling_scale > 0.0) {
        return Err(param("radial.coupling_scale", "must be positive"));
    }
    let m = (p.cutoff / p.dr).round() as usize;
    let disc = Discrete { dr: p.dr, m };
    let lam = p.coupling_scale;

    let mut u: Vec<f64> = (0..=m)
        .map(|i| {
            let r = disc.r(i);
            r * (-0.05 * lam * r).exp()
        })
        .collect();
    u[m] = 0.0;
    let n = disc.norm_sq(&u).sqrt();
    u.iter_mut().for_each(|e| *e /= n);

    let mut phi = disc.coulomb(&u);
    let mut v = disc.potential(&phi, lam);
    let mut log = Vec::new();
    let mut energy = disc.kinetic(&u) - lam * disc.self_energy(&u, &phi);
    let mut converged = false;
    for _ in 0..p.max_iter {
        let (mu, next) = disc.ground_state(&v, &u);
        u = next;
        phi = disc.coulomb(&u);
        let fresh = disc.potential(&phi, lam);
        v = if p.mixing == 1.0 {
            fresh
        } else {
            v.iter().zip(&fresh).map(|(a, b)| (1.0 - p.mixing) * a + p.mixing * b).collect()
        };
        let e = disc.kinetic(&u) - lam * disc.self_energy(&u, &phi);
        let change = e - energy;
        energy = e;
        let mu_change = log.last().map_or(f64::INFINITY, |r: &IterationRecord| (mu - r.eigenvalue).abs());
        log.push(IterationRecord {
            energy: e,
            eigenvalue: mu,
            change,
        });
        // e_P is stationary, so its change alone under-resolves ψ; the eigenvalue
        // moves at first order.
        if change.abs() < p.tol && mu_change < p.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            what: "radial alternating minimization",
            iterations: log.len(),
            residual: log.last().map(|r| r.change.abs()).unwrap_or(f64::NAN),
        });
    }
    let v_final = disc.potential(&phi, lam);
    let mu = disc.rayleigh(&u, &v_final);
    let kinetic = disc.kinetic(&u);
    let self_energy = disc.self_energy(&u, &phi);
    let scalars = radial_scalars(&disc, &u, kinetic, lam * self_energy, lam);
    if scalars.tail_ratio > DECAY_TOL {
        return Err(param(
            "radial.cutoff",
            format!(
                "profile has not decayed at the cutoff: max|u| beyond 0.9R is {:.3e} of max|u| (need < {DECAY_TOL:e})",
                scalars.tail_ratio
            ),
        ));
    }
    let e_p = kinetic - lam * self_energy;
    Ok(RadialSolution {
        params: p,
        u,
        e_p,
        mu_p: mu,
        scalars,
        raw: RawScalars { e_p, mu_p: mu, scalars },
        log,
    })
}

pub fn solve_radial(params: &RadialParams) -> Result<RadialSolution> {
    let mut fine = solve_single(params)?;
    if !params.richardson {
        return Ok(fine);
    }
    let coarse = solve_single(&RadialParams {
        dr: 2.0 * params.dr,
        ..params.clone()
    })?;
    let x = |a: f64, b: f64| (4.0 * a - b) / 3.0;
    let (f, c) = (fine.scalars, coarse.scalars);
    fine.e_p = x(fine.e_p, coarse.e_p);
    fine.mu_p = x(fine.mu_p, coarse.mu_p);
    fine.scalars = RadialScalars {
        kinetic: x(f.kinetic, c.kinetic),
        psi_l4: x(f.psi_l4, c.psi_l4),
        grad_phi_sq: x(f.grad_phi_sq, c.grad_phi_sq),
        phi_sq: x(f.phi_sq, c.phi_sq),
        phi_sq_spectral: x(f.phi_sq_spectral, c.phi_sq_spectral),
        q: x(f.q, c.q),
        ..f
    };
    Ok(fine)
}

fn radial_scalars(disc: &Discrete, u: &[f64], kinetic: f64, phi_sq: f64, lam: f64) -> RadialScalars {
    let (dr, m) = (disc.dr, disc.m);
    let r = |i: usize| disc.r(i);
    let psi_l4 = 4.0 * PI * dr * (1..m).map(|i| u[i].powi(4) / (r(i) * r(i))).sum::<f64>();
    let q = 4.0 * PI / 12.0 * dr * (1..m).map(|i| u[i] * u[i] * r(i) * r(i)).sum::<f64>();

    // radial Fourier transform of ρ: ρ̂(k) = (4π/k) ∫ (u²/r) sin(kr) dr
    let cutoff = m as f64 * dr;
    let dk = PI / (2.0 * cutoff);
    let rho_r: Vec<f64> = (1..m).map(|i| u[i] * u[i] / r(i)).collect();
    let mut grad_phi_sq = 0.0;
    let mut phi_sq_spec = 0.0;
    let mut k_index = 0usize;
    loop {
        let k = k_index as f64 * dk;
        let rho_hat = if k_index == 0 {
            4.0 * PI * dr * (1..m).map(|i| u[i] * u[i]).sum::<f64>()
        } else {
            4.0 * PI / k * dr * rho_r.iter().enumerate().map(|(j, w)| w * (k * r(j + 1)).sin()).sum::<f64>()
        };
        let w = if k_index == 0 { 0.5 } else { 1.0 };
        let a = rho_hat * rho_hat;
        grad_phi_sq += w * k * k * a;
        phi_sq_spec += w * a;
        if k_index > 0 && a < 1e-30 && k * k * a < 1e-30 * grad_phi_sq.max(1e-300) {
            break;
        }
        k_index += 1;
        if k > 20.0 / dr {
            break;
        }
    }
    let norm = lam * dk / (2.0 * PI * PI);
    let psi1 = u[1] / r(1);
    let psi2 = u[2] / r(2);
    let psi_center = (4.0 * psi1 - psi2) / 3.0;
    let half_width = (1..m)
        .find(|&i| u[i] / r(i) < 0.5 * psi_center)
        .map(|i| {
            let (a, b) = (u[i - 1] / r(i - 1).max(dr), u[i] / r(i));
            let a = if i == 1 { psi_center } else { a };
            r(i - 1) + dr * (a - 0.5 * psi_center) / (a - b)
        })
        .unwrap_or(f64::NAN);
    let umax = u.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let tail = u[(9 * m) / 10..].iter().fold(0.0f64, |a, b| a.max(b.abs()));
    RadialScalars {
        kinetic,
        psi_l4,
        grad_phi_sq: norm * grad_phi_sq,
        phi_sq,
        phi_sq_spectral: norm * phi_sq_spec,
        q,
        psi_center,
        half_width,
        tail_ratio: tail / umax,
    }
}

impl RadialSolution {
    pub fn dr(&self) -> f64 {
        self.params.dr
    }

    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.u.len()).map(|i| i as f64 * self.params.dr)
    }

    fn psi_node(&self, i: usize) -> f64 {
        if i == 0 {
            self.scalars.psi_center
        } else if i < self.u.len() {
            self.u[i] / (i as f64 * self.params.dr)
        } else {
            0.0
        }
    }

    /// `ψ_P(r)` by four-point Lagrange interpolation of the even extension.
    pub fn psi_at(&self, r: f64) -> f64 {
        let dr = self.params.dr;
        let m = self.u.len() - 1;
        let t = r.abs() / dr;
        if t >= m as f64 {
            return 0.0;
        }
        let j = t.floor() as i64;
        let s = t - j as f64;
        let node = |k: i64| self.psi_node(k.unsigned_abs() as usize);
        let (f0, f1, f2, f3) = (node(j - 1), node(j), node(j + 1), node(j + 2));
        -s * (s - 1.0) * (s - 2.0) / 6.0 * f0 + (s + 1.0) * (s - 1.0) * (s - 2.0) / 2.0 * f1
            - (s + 1.0) * s * (s - 2.0) / 2.0 * f2
            + (s + 1.0) * s * (s - 1.0) / 6.0 * f3
    }

    pub fn norm_sq(&self) -> f64 {
        4.0 * PI * self.params.dr * self.u.iter().map(|x| x * x).sum::<f64>()
    }

    /// Fraction of the electron mass at radius `> r`.
    pub fn mass_outside(&self, r: f64) -> f64 {
        let i0 = (r / self.params.dr).ceil() as usize;
        let tail: f64 = self.u.iter().skip(i0).map(|x| x * x).sum();
        4.0 * PI * self.params.dr * tail / self.norm_sq()
    }

    /// `‖φ_P‖²` from the Coulomb self-energy.
    pub fn phi_sq(&self) -> f64 {
        self.scalars.phi_sq
    }

    pub fn virial_residuals(&self) -> VirialResiduals {
        let e = self.e_p;
        VirialResiduals {
            energy_vs_kinetic: (e + self.scalars.kinetic).abs() / e.abs(),
            eigenvalue_vs_energy: (self.mu_p - 3.0 * e).abs() / e.abs(),
            field_vs_energy: (self.scalars.phi_sq + 2.0 * e).abs() / e.abs(),
            decomposition: (e - self.mu_p - self.scalars.phi_sq).abs() / e.abs(),
            field_gradient_vs_l4: (self.scalars.grad_phi_sq - self.scalars.psi_l4).abs() / self.scalars.psi_l4,
        }
    }

    /// Non-increasing energy log, up to roundoff of the quadratures.
    pub fn energy_monotone(&self) -> bool {
        self.log.windows(2).all(|w| w[1].energy <= w[0].energy + 1e-12 * w[0].energy.abs())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["r", "u"])?;
        for (r, u) in self.radii().zip(&self.u) {
            w.write_record([r.to_string(), u.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Summary<'a> {
            params: &'a RadialParams,
            e_p: f64,
            mu_p: f64,
            scalars: &'a RadialScalars,
            residuals: VirialResiduals,
            iterations: &'a [IterationRecord],
        }
        let s = Summary {
            params: &self.params,
            e_p: self.e_p,
            mu_p: self.mu_p,
            scalars: &self.scalars,
            residuals: self.virial_residuals(),
            iterations: &self.log,
        };
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(&s)?.as_bytes())?;
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VirialResiduals {
    pub energy_vs_kinetic: f64,
    pub eigenvalue_vs_energy: f64,
    pub field_vs_energy: f64,
    pub decomposition: f64,
    pub field_gradient_vs_l4: f64,
}

impl VirialResiduals {
    pub fn max(&self) -> f64 {
        self.energy_vs_kinetic
            .max(self.eigenvalue_vs_energy)
            .max(self.field_vs_energy)
            .max(self.decomposition)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse() -> RadialParams {
        RadialParams {
            dr: 0.2,
            richardson: false,
            ..RadialParams::default()
        }
    }

    #[test]
    fn poisson_matches_newton_shells_for_a_shell_charge() {
        // u² = 1/(4π) on a thin shell: W = Q/max(r, r0) exactly.
        let disc = Discrete { dr: 0.01, m: 2000 };
        let mut u = vec![0.0; 2001];
        u[1000] = (1.0 / (4.0 * PI * 0.01)).sqrt();
        let phi = disc.coulomb(&u);
        let q = 1.0 / (4.0 * PI);
        for i in [10usize, 500, 999, 1000, 1500, 1999] {
            let w = phi[i] / disc.r(i);
            let expect = q / disc.r(i).max(10.0);
            assert!((w - expect).abs() < 1e-12, "r={} {} {}", disc.r(i), w, expect);
        }
    }

    #[test]
    fn hydrogen_like_ground_state() {
        // -Δ - 2/r: ground state energy -1, u = 2 r e^{-r}/√(4π).
        let disc = Discrete { dr: 0.002, m: 20000 };
        let v: Vec<f64> = (0..=disc.m).map(|i| if i == 0 { 0.0 } else { -2.0 / disc.r(i) }).collect();
        let guess: Vec<f64> = (0..=disc.m).map(|i| disc.r(i) * (-disc.r(i) / 2.0).exp()).collect();
        let (e, u) = disc.ground_state(&v, &guess);
        assert!((e + 1.0).abs() < 1e-5, "{e}");
        assert!((disc.norm_sq(&u) - 1.0).abs() < 1e-12);
        assert!(u.iter().all(|x| *x >= 0.0));
    }

    #[test]
    fn energy_log_is_monotone_and_converges() {
        let sol = solve_radial(&coarse()).unwrap();
        assert!(sol.energy_monotone());
        assert!((sol.norm_sq() - 1.0).abs() < 1e-12);
        assert_eq!(sol.u[0], 0.0);
        assert!(sol.u.iter().all(|x| *x >= 0.0));
        assert!(sol.scalars.tail_ratio < DECAY_TOL);
    }

    #[test]
    fn short_cutoff_is_rejected() {
        let p = RadialParams {
            dr: 0.2,
            cutoff: 150.0,
            richardson: false,
            ..RadialParams::default()
        };
        let err = solve_radial(&p).unwrap_err().to_string();
        assert!(err.contains("cutoff"), "{err}");
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let p = RadialParams {
            max_iter: 3,
            ..coarse()
        };
        assert!(matches!(solve_radial(&p), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let sol = solve_radial(&coarse()).unwrap();
        for i in [1usize, 7, 100, 400] {
            let r = i as f64 * sol.dr();
            assert!((sol.psi_at(r) - sol.u[i] / r).abs() < 1e-15);
        }
        assert_eq!(sol.psi_at(1e6), 0.0);
    }

    fn scaled_energy(sol: &RadialSolution, s: f64) -> f64 {
        // u_s(r) = s^{1/2} u(s r), the radial form of ψ(x) -> s^{3/2} ψ(s x)
        let m = sol.u.len() - 1;
        let disc = Discrete { dr: sol.dr(), m };
        let us: Vec<f64> = (0..=m)
            .map(|i| {
                let r = disc.r(i);
                if i == m {
                    0.0
                } else {
                    s.sqrt() * s * r * sol.psi_at(s * r)
                }
            })
            .collect();
        let phi = disc.coulomb(&us);
        disc.kinetic(&us) - disc.self_energy(&us, &phi)
    }

    #[test]
    fn scaling_family_is_stationary_at_the_minimizer() {
        let sol = solve_radial(&RadialParams::default()).unwrap();
        let h = 1e-4;
        let slope = (scaled_energy(&sol, 1.0 + h) - scaled_energy(&sol, 1.0 - h)) / (2.0 * h);
        assert!(slope.abs() / sol.e_p.abs() < 2e-6, "dE/ds = {slope:e}");
        let v = sol.virial_residuals();
        assert!(v.energy_vs_kinetic < 1e-6, "{v:?}");
        assert!(v.eigenvalue_vs_energy < 1e-6, "{v:?}");
        assert!(v.field_vs_energy < 1e-6, "{v:?}");
        assert!(v.decomposition < 1e-10, "{v:?}");
    }

    #[test]
    fn doubling_the_coupling_quadruples_the_energy() {
        let one = solve_radial(&RadialParams::default()).unwrap();
        let two = solve_radial(&RadialParams {
            coupling_scale: 2.0,
            ..RadialParams::default()
        })
        .unwrap();
        assert!((two.e_p / one.e_p - 4.0).abs() < 1e-6);
        assert!((two.scalars.half_width / one.scalars.half_width - 0.5).abs() < 1e-3);
    }

    #[test]
    fn spectral_and_shell_self_energies_agree() {
        let sol = solve_radial(&RadialParams::default()).unwrap();
        let s = sol.scalars;
        assert!((s.phi_sq - s.phi_sq_spectral).abs() < 1e-8 * s.phi_sq);
        assert!((s.grad_phi_sq - s.psi_l4).abs() < 1e-6 * s.psi_l4);
    }
}
