//! The acceptance suite: one line per criterion with pinned tolerances.

use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

use polaron_core::dynamics::{boost_experiment, integrate, overlap_phase, BoostOptions, Observers, PolaronState};
use polaron_core::manifold::{ProjectionOptions, Templates};
use polaron_core::mass::{
    admissibility_check, constrained_minimize_ev, fit_mass, mass_report, quadratic_coefficient, traveling_wave_linearization, trial_energy,
    trial_state, v_max, MassReport, MinimizeOptions, Variant, FIT_FRACTIONS,
};
use polaron_core::pekar::{
    certify_grid, solve_radial, CertifyOptions, GridCertificate, HessianOptions, LiftOptions, PekarSolution, RadialParams, RadialSolution,
    RefineOptions,
};
use polaron_core::spectral::{translate, ComplexField, GridSpec, Role};
use polaron_core::Result;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Info,
}

#[derive(Clone, Debug, Serialize)]
pub struct CheckLine {
    pub id: String,
    pub title: String,
    pub status: Status,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CheckLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Info => "INFO",
        };
        write!(f, "{tag} [{:>2}] {}: {} ({:.1} s)", self.id, self.title, self.detail, self.seconds)
    }
}

pub fn all_passed(lines: &[CheckLine]) -> bool {
    lines.iter().all(|l| l.status != Status::Fail)
}

/// Desk grid of the dynamics and minimization checks.
pub const DESK: (f64, usize) = (640.0, 32);

pub struct Suite {
    seed: u64,
    radial: OnceLock<(RadialSolution, f64)>,
    desk: OnceLock<PekarSolution>,
    certified: OnceLock<(PekarSolution, GridCertificate)>,
    masses: OnceLock<Vec<MassReport>>,
}

type Outcome = Result<(bool, String)>;

impl Suite {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            radial: OnceLock::new(),
            desk: OnceLock::new(),
            certified: OnceLock::new(),
            masses: OnceLock::new(),
        }
    }

    fn radial(&self) -> Result<&(RadialSolution, f64)> {
        if self.radial.get().is_none() {
            let t = Instant::now();
            let r = solve_radial(&RadialParams::default())?;
            let _ = self.radial.set((r, t.elapsed().as_secs_f64()));
        }
        Ok(self.radial.get().unwrap())
    }

    pub fn desk(&self) -> Result<&PekarSolution> {
        if self.desk.get().is_none() {
            let s = desk_solution(&self.radial()?.0, DESK.1)?;
            let _ = self.desk.set(s);
        }
        Ok(self.desk.get().unwrap())
    }

    pub fn certified(&self) -> Result<&(PekarSolution, GridCertificate)> {
        if self.certified.get().is_none() {
            let c = certify_grid(&self.radial()?.0, &CertifyOptions::default())?;
            let _ = self.certified.set(c);
        }
        Ok(self.certified.get().unwrap())
    }

    fn masses(&self) -> Result<&Vec<MassReport>> {
        if self.masses.get().is_none() {
            let sol = &self.certified()?.0;
            let m = mass_report(&[0.0, 1.0, 2.0, 4.0], sol, &FIT_FRACTIONS)?;
            let _ = self.masses.set(m);
        }
        Ok(self.masses.get().unwrap())
    }

    /// Runs every criterion, handing each line to `sink` as soon as it is known.
    pub fn run(&self, sink: &mut dyn FnMut(&CheckLine)) -> Vec<CheckLine> {
        let mut lines = Vec::new();
        let mut emit = |l: CheckLine| {
            sink(&l);
            lines.push(l);
        };
        type Crit<'a> = (&'a str, &'a str, fn(&Suite) -> Outcome);
        let criteria: [Crit; 12] = [
            ("1", "virial family (radial)", Suite::virial),
            ("2", "field gradient equals L4 norm", Suite::gradient_identity),
            ("3", "sandwich identities", Suite::sandwich),
            ("4", "Hessian kernel and gap", Suite::hessian),
            ("5", "standard trial mass", Suite::standard_mass),
            ("6", "alternative trial mass", Suite::alternative_mass),
            ("7", "traveling-wave linearization", Suite::traveling_wave),
            ("8", "trial admissibility", Suite::admissibility),
            ("9", "dynamics conservation", Suite::conservation),
            ("10", "projection machinery", Suite::projections),
            ("11", "constrained minimization", Suite::minimization),
            ("12", "damping experiment", Suite::damping),
        ];
        for (id, title, f) in criteria {
            let t = Instant::now();
            let (status, detail) = match f(self) {
                Ok((ok, d)) => (if ok { Status::Pass } else { Status::Fail }, d),
                Err(e) => (Status::Fail, format!("error: {e}")),
            };
            emit(CheckLine {
                id: id.into(),
                title: title.into(),
                status,
                detail,
                seconds: t.elapsed().as_secs_f64(),
            });
            if id == "6" {
                if let Ok(m) = self.masses() {
                    let ratios: Vec<String> = m.iter().map(|r| format!("{}:{:.8}", r.alpha, r.ratio_pred)).collect();
                    emit(info("6", "alternative/standard mass ratio by alpha", ratios.join(" ")));
                }
            }
        }
        lines
    }

    fn virial(&self) -> Outcome {
        let (r, secs) = self.radial()?;
        let v = r.virial_residuals();
        let ok = v.energy_vs_kinetic < 1e-5 && v.eigenvalue_vs_energy < 1e-5 && v.field_vs_energy < 1e-5 && *secs < 5.0;
        Ok((
            ok,
            format!(
                "e_P={:.6e} |e+T|={:.1e} |mu-3e|={:.1e} |phi^2+2e|={:.1e} (relative, tol 1e-5), solve {secs:.2} s (tol 5 s)",
                r.e_p, v.energy_vs_kinetic, v.eigenvalue_vs_energy, v.field_vs_energy
            ),
        ))
    }

    fn gradient_identity(&self) -> Outcome {
        let radial = self.radial()?.0.virial_residuals().field_gradient_vs_l4;
        let (sol, cert) = self.certified()?;
        let grid = (sol.scalars.grad_phi_sq / sol.scalars.psi_l4 - 1.0).abs();
        Ok((
            grid < 1e-4 && radial < 1e-6,
            format!(
                "grid L={} N={}: {grid:.2e} (tol 1e-4); radial {radial:.1e} (tol 1e-6)",
                cert.box_length, cert.points
            ),
        ))
    }

    fn sandwich(&self) -> Outcome {
        let (sol, _) = self.certified()?;
        let s = sol.sandwich_identities();
        let rel = s.forward_max_error / s.d_phi_sq[0];
        Ok((
            s.inverse_max_error < 1e-3 && s.forward_max_error < 1e-3 && s.inverse_image_residual < 1e-3,
            format!(
                "inverse max err {:.1e}, forward max err {:.1e} (relative {rel:.1e}), residual {:.1e} (tol 1e-3)",
                s.inverse_max_error, s.forward_max_error, s.inverse_image_residual
            ),
        ))
    }

    fn hessian(&self) -> Outcome {
        let opts = HessianOptions {
            seed: self.seed,
            ..HessianOptions::default()
        };
        let coarse = self.desk()?.hessian_spectrum(4, &opts)?;
        let fine = desk_solution(&self.radial()?.0, 48)?.hessian_spectrum(4, &opts)?;
        let kernel = |h: &polaron_core::pekar::HessianSpectrum| h.values[..3].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let (k0, k1) = (kernel(&coarse), kernel(&fine));
        let (g0, g1) = (coarse.values[3], fine.values[3]);
        let drift = (g1 / g0 - 1.0).abs();
        Ok((
            k0 < 1e-3 && k1 < 1e-3 && g0 > 0.0 && g1 > 0.0 && drift < 0.1,
            format!(
                "N=32: kernel {k0:.1e} ({:.1e} of gap), gap {g0:.4e}; N=48: kernel {k1:.1e}, gap {g1:.4e}; gap change {drift:.1e} (tol 0.1)",
                k0 / g0
            ),
        ))
    }

    fn standard_mass(&self) -> Outcome {
        let m = self.masses()?;
        let mut ok = true;
        let mut parts = Vec::new();
        for r in m.iter().filter(|r| r.alpha <= 2.0) {
            let e = r.standard_error();
            ok &= e.abs() < 5e-3;
            parts.push(format!("a={}: fit {:.6} vs {:.6} ({e:+.1e})", r.alpha, r.fit_standard.mass, r.m_eff_pred));
        }
        let zero = m.iter().find(|r| r.alpha == 0.0).unwrap();
        ok &= (zero.fit_standard.mass / 0.5 - 1.0).abs() < 5e-3 && zero.m_eff_pred == 0.5;
        Ok((ok, format!("{} (tol 0.5%)", parts.join("; "))))
    }

    fn alternative_mass(&self) -> Outcome {
        let m = self.masses()?;
        let mut ok = true;
        let mut parts = Vec::new();
        for r in m {
            let e = r.alternative_error();
            ok &= e.abs() < 5e-3 && r.m_eff_alt_pred < r.m_eff_pred;
            parts.push(format!("a={}: fit {:.6} vs {:.6} ({e:+.1e})", r.alpha, r.fit_alternative.mass, r.m_eff_alt_pred));
        }
        let ratios: Vec<f64> = m.iter().filter(|r| r.alpha >= 1.0).map(|r| r.ratio_pred).collect();
        let increasing = ratios.windows(2).all(|w| w[1] > w[0]);
        Ok((ok && increasing, format!("{}; m_alt < m for all; ratio increasing over 1,2,4: {increasing} (tol 0.5%)", parts.join("; "))))
    }

    fn traveling_wave(&self) -> Outcome {
        let (sol, _) = self.certified()?;
        let mut ok = true;
        let mut worst_res: f64 = 0.0;
        let mut worst_coef: f64 = 0.0;
        for alpha in [0.0, 1.0, 2.0] {
            let r = traveling_wave_linearization(alpha, sol)?.report;
            worst_res = worst_res.max(r.inverse_residual);
            worst_coef = worst_coef.max((r.coefficient - r.trial_coefficient).abs());
            ok &= r.inverse_residual < 1e-3 && (r.coefficient - r.trial_coefficient).abs() < 1e-10;
            if alpha == 0.0 {
                ok &= r.coefficient == 0.25;
            }
        }
        Ok((ok, format!("residual {worst_res:.1e} (tol 1e-3); coefficient mismatch {worst_coef:.1e} (tol 1e-10)")))
    }

    fn admissibility(&self) -> Outcome {
        let (sol, _) = self.certified()?;
        let t = Templates::new(sol);
        let vm = v_max(sol.scalars.q);
        let mut worst: f64 = 0.0;
        for alpha in [1.0, 2.0] {
            for fr in FIT_FRACTIONS {
                let v = fr * vm;
                let st = trial_state(v, alpha, sol, Variant::Standard)?;
                worst = worst.max(admissibility_check(&st, v, sol, &t).max_velocity_residual());
            }
        }
        Ok((worst < 1e-8, format!("max velocity residual {worst:.1e} over alpha 1,2 and {} velocities (tol 1e-8)", FIT_FRACTIONS.len())))
    }

    fn conservation(&self) -> Outcome {
        let sol = self.desk()?;
        let quiet = Observers {
            projections: false,
            ..Observers::default()
        };
        let t_end = 10.0;
        let st = PolaronState::stationary(sol, 1.0)?;
        let (end, series) = integrate(&st, t_end, 1e-3, 1000, &quiet, Some(sol), None)?;
        let drift = series.max_energy_drift();
        let norm = series.max_norm_drift();
        let phase = overlap_phase(sol, &end.psi)?;
        let phase_err = ((phase + sol.mu_p * t_end + PI).rem_euclid(TAU) - PI).abs();
        let order = splitting_order(sol, &self.radial()?.0)?;
        let ok = drift < 1e-8 && norm < 1e-10 && phase_err < 1e-6 && (1.8..=2.2).contains(&order);
        Ok((
            ok,
            format!(
                "T=10 dt=1e-3: energy drift {drift:.1e} (tol 1e-8), norm drift {norm:.1e} (tol 1e-10), phase error {phase_err:.1e} (tol 1e-6); order {order:.3} (tol [1.8, 2.2])"
            ),
        ))
    }

    fn projections(&self) -> Outcome {
        let sol = self.desk()?;
        let t = Templates::new(sol);
        let opts = ProjectionOptions::default();
        let mut recover: f64 = 0.0;
        for y in [[0.0, 0.0, 0.0], [7.3, -2.1, 0.4], [-55.5, 31.25, 12.0]] {
            let p = t.project_phonon(&translate(&sol.phi, y), None, &opts)?;
            for k in 0..3 {
                recover = recover.max((p.z[k] - y[k]).abs());
            }
        }
        let p0 = t.project_phonon(&sol.phi, None, &opts)?;
        let target = sol.scalars.grad_phi_sq / 3.0;
        let mut jac: f64 = 0.0;
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { target } else { 0.0 };
                jac = jac.max((p0.jacobian[i][j] - want).abs() / target);
            }
        }
        let fd = velocity_vs_finite_difference(sol)?;
        Ok((
            recover < 1e-8 && jac < 1e-6 && fd < 1e-3,
            format!(
                "recovery {recover:.1e} (tol 1e-8); Jacobian vs |grad phi|^2/3 {jac:.1e} (tol 1e-6, ratio to |grad phi|^2 = {:.6}); V_ph vs dz/dt {fd:.1e} (tol 1e-3)",
                p0.jacobian[0][0] / sol.scalars.grad_phi_sq
            ),
        ))
    }

    fn minimization(&self) -> Outcome {
        let sol = self.desk()?;
        let alpha = 1.0;
        let vm = v_max(sol.scalars.q);
        let mut pairs = Vec::new();
        let mut above: f64 = f64::NEG_INFINITY;
        let mut converged = 0;
        for fr in FIT_FRACTIONS {
            let v = fr * vm;
            let r = constrained_minimize_ev(v, alpha, sol, &MinimizeOptions::default())?;
            let trial = trial_energy(v, alpha, sol, Variant::Standard)?.grid;
            above = above.max(r.energy - trial);
            converged += r.converged as usize;
            pairs.push((v, r.energy));
        }
        let fit = fit_mass(&pairs, sol.e_p, true)?;
        let coef = fit.mass / 2.0;
        let want = quadratic_coefficient(alpha, sol.radial.scalars.grad_phi_sq / 3.0);
        let rel = (coef / want - 1.0).abs();
        Ok((
            above <= 1e-10 && rel < 0.05,
            format!(
                "max(E_min - E_trial) {above:.1e} (tol 1e-10); coefficient {coef:.9} vs {want:.9} ({rel:.1e}, tol 5%); converged {converged}/{}",
                pairs.len()
            ),
        ))
    }

    fn damping(&self) -> Outcome {
        let sol = self.desk()?;
        let opts = BoostOptions {
            cadence: 50,
            mask: None,
            radiation_radii: vec![100.0, 200.0],
        };
        let v = 0.04 * v_max(sol.scalars.q);
        let run = boost_experiment(v, 1.0, 20.0, 1e-2, sol, &opts)?;
        let monotone = run.records.windows(2).all(|w| w[1].t > w[0].t);
        let control = boost_experiment(0.0, 1.0, 5.0, 1e-2, sol, &opts)?;
        let mut still: f64 = 0.0;
        let mut complete = true;
        for r in &control.records {
            still = still.max(r.velocity.iter().fold(0.0f64, |a, b| a.max(b.abs())));
            match r.phonon {
                Some(p) => still = still.max(p.velocity.iter().fold(0.0f64, |a, b| a.max(b.abs()))),
                None => complete = false,
            }
        }
        let last = run.records.last().unwrap();
        let ratio = last.velocity[0] / v;
        let ph = last.phonon.map(|p| p.velocity[0] / v).unwrap_or(f64::NAN);
        Ok((
            monotone && complete && still < 1e-8,
            format!(
                "{} records, monotone {monotone}; control max velocity {still:.1e} (tol 1e-8); at T=20 V_el/v={ratio:.6}, V_ph/v={ph:.6} (reported only)",
                run.records.len()
            ),
        ))
    }
}

fn info(id: &str, title: &str, detail: String) -> CheckLine {
    CheckLine {
        id: id.into(),
        title: title.into(),
        status: Status::Info,
        detail,
        seconds: 0.0,
    }
}

/// Polished minimizer on the box of the desk grid with `points` per side.
pub fn desk_solution(radial: &RadialSolution, points: usize) -> Result<PekarSolution> {
    PekarSolution::lift(radial, GridSpec::new(DESK.0, points)?, &LiftOptions::default())?.refine(&RefineOptions::default())
}

/// Order of the energy drift under halving `dt`, from a dilated minimizer
/// that breathes around the well.
fn splitting_order(sol: &PekarSolution, radial: &RadialSolution) -> Result<f64> {
    let g = sol.grid;
    let values: Vec<f64> = (0..g.len())
        .map(|i| {
            let x = g.position(i);
            radial.psi_at(1.3 * (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt())
        })
        .collect();
    let psi = ComplexField::from_real(g, Role::Electron, &values).normalized();
    let st = PolaronState::new(psi, sol.phi.clone(), 1.0)?;
    let quiet = Observers {
        projections: false,
        ..Observers::default()
    };
    let drift = |dt: f64| -> Result<f64> { Ok(integrate(&st, 8.0, dt, 1, &quiet, None, None)?.1.max_energy_drift()) };
    Ok((drift(0.8)? / drift(0.4)?).log2())
}

/// Largest relative gap between the phonon velocity and the centered
/// difference of the phonon position along a boosted trajectory.
fn velocity_vs_finite_difference(sol: &PekarSolution) -> Result<f64> {
    let v = 0.04 * v_max(sol.scalars.q);
    let st = trial_state(v, 1.0, sol, Variant::Standard)?;
    let (_, series) = integrate(&st, 10.0, 1e-2, 20, &Observers::default(), Some(sol), None)?;
    let mut worst: f64 = 0.0;
    for w in series.records.windows(3) {
        let (Some(a), Some(b), Some(c)) = (w[0].phonon, w[1].phonon, w[2].phonon) else {
            return Ok(f64::INFINITY);
        };
        let fd = (c.z[0] - a.z[0]) / (w[2].t - w[0].t);
        worst = worst.max((fd / b.velocity[0] - 1.0).abs());
    }
    Ok(worst)
}
