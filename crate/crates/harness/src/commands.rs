//! Experiment drivers behind the subcommands.

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use polaron_core::dynamics::{boost_experiment, default_dt, integrate, BoostOptions, Observers, ObservableSeries, PolaronState};
use polaron_core::manifold::Templates;
use polaron_core::mass::{
    admissibility_check, constrained_minimize_ev, fit_mass, mass_report, quadratic_coefficient, traveling_wave_linearization,
    trial_energy, trial_state, v_max, write_mass_csv, MinimizeOptions, Variant,
};
use polaron_core::pekar::{
    certify_grid, solve_radial, CertifyOptions, GridCertificate, HessianOptions, LiftOptions, PekarSolution, RadialSolution,
    RefineOptions,
};
use polaron_core::spectral::snapshot::write_snapshot;
use polaron_core::spectral::{ComplexField, GridSpec};

use crate::artifacts::ArtifactDir;
use crate::checks::{CheckLine, Status, Suite};
use crate::config::{ConfigError, Preset, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Solver(#[from] polaron_core::Error),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CommandError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn record(&self) -> serde_json::Value {
        match self {
            CommandError::Config(e) => json!({ "kind": "config", "key": e.key, "message": e.message }),
            CommandError::Solver(e) => json!({ "kind": "solver", "message": e.to_string() }),
            CommandError::Io(e) => json!({ "kind": "io", "message": e.to_string() }),
        }
    }
}

pub type CmdResult = Result<Outcome, CommandError>;

#[derive(Debug)]
pub struct Outcome {
    pub manifest: PathBuf,
    pub checks: Vec<CheckLine>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        crate::checks::all_passed(&self.checks)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Command {
    SolvePekar,
    EffectiveMass,
    Simulate,
    Damping,
    TravelingWave,
    Check,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolvePekar => "solve-pekar",
            Command::EffectiveMass => "effective-mass",
            Command::Simulate => "simulate",
            Command::Damping => "damping",
            Command::TravelingWave => "traveling-wave",
            Command::Check => "check",
        }
    }

    fn dynamic(self) -> bool {
        matches!(self, Command::Simulate | Command::Damping)
    }
}

/// Runs `cmd`, writing artifacts below `output.dir/<command>`.
pub fn run(cmd: Command, cfg: &RunConfig) -> CmdResult {
    validate(cmd, cfg)?;
    let mut art = ArtifactDir::create(cfg, cmd.name())?;
    let result = match cmd {
        Command::SolvePekar => solve_pekar(cfg, &mut art),
        Command::EffectiveMass => effective_mass(cfg, &mut art),
        Command::Simulate => simulate(cfg, &mut art),
        Command::Damping => damping(cfg, &mut art),
        Command::TravelingWave => traveling_wave(cfg, &mut art),
        Command::Check => check(cfg, &mut art),
    };
    match result {
        Ok(checks) => {
            let status = if crate::checks::all_passed(&checks) { "passed" } else { "failed" };
            let manifest = art.finish(status, &checks)?;
            Ok(Outcome { manifest, checks })
        }
        Err(e) => {
            art.json("error.json", &e.record())?;
            art.finish("error", &[])?;
            Err(e)
        }
    }
}

fn validate(cmd: Command, cfg: &RunConfig) -> Result<(), ConfigError> {
    let p = &cfg.physics;
    let needs_alphas = !matches!(cmd, Command::SolvePekar | Command::Check);
    if needs_alphas && p.alphas.is_empty() {
        return Err(ConfigError::new("physics.alphas", "must list at least one coupling"));
    }
    if let Some(a) = p.alphas.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
        return Err(ConfigError::new("physics.alphas", format!("couplings must be finite and non-negative, got {a}")));
    }
    if cmd == Command::EffectiveMass {
        let mut fr = p.v_fractions.clone();
        fr.retain(|f| *f != 0.0);
        fr.sort_by(f64::total_cmp);
        fr.dedup();
        if fr.len() < 3 {
            return Err(ConfigError::new("physics.v_fractions", "need at least three distinct nonzero fractions"));
        }
        if let Some(f) = fr.iter().find(|f| !(f.abs() < 1.0)) {
            return Err(ConfigError::new("physics.v_fractions", format!("fractions of the maximal velocity must lie in (-1, 1), got {f}")));
        }
    }
    if cmd.dynamic() {
        let d = &cfg.dynamics;
        if p.velocities.is_empty() {
            return Err(ConfigError::new("physics.velocities", "must list at least one velocity"));
        }
        if !(d.t_end > 0.0) {
            return Err(ConfigError::new("dynamics.t_end", "must be positive"));
        }
        if d.dt.is_some_and(|dt| !(dt > 0.0)) {
            return Err(ConfigError::new("dynamics.dt", "must be positive"));
        }
        if d.cadence == 0 {
            return Err(ConfigError::new("dynamics.cadence", "must be at least 1"));
        }
    }
    if cmd != Command::SolvePekar && cmd != Command::Check && cfg.radial.coupling_scale != 1.0 {
        return Err(ConfigError::new("radial.coupling_scale", "only solve-pekar supports a rescaled coupling"));
    }
    Ok(())
}

#[derive(Serialize)]
struct GridInfo {
    preset: Preset,
    box_length: f64,
    points: usize,
    polished: bool,
    certificate: Option<GridCertificate>,
}

fn grid_solution(cfg: &RunConfig, radial: &RadialSolution, dynamic: bool) -> Result<(PekarSolution, GridInfo), CommandError> {
    let preset = cfg.grid.preset.unwrap_or(if dynamic { Preset::Desk } else { Preset::Certified });
    let (sol, certificate) = match preset {
        Preset::Certified => {
            let (s, c) = certify_grid(radial, &CertifyOptions::default())?;
            (s, Some(c))
        }
        Preset::Desk => {
            let (l, n) = crate::checks::DESK;
            (PekarSolution::lift(radial, GridSpec::new(l, n)?, &LiftOptions::default())?, None)
        }
        Preset::Custom => (
            PekarSolution::lift(radial, GridSpec::new(cfg.grid.box_length, cfg.grid.points)?, &LiftOptions::default())?,
            None,
        ),
    };
    let polish = cfg.grid.polish.unwrap_or(preset == Preset::Desk);
    let sol = if polish { sol.refine(&RefineOptions::default())? } else { sol };
    let info = GridInfo {
        preset,
        box_length: sol.grid.box_length,
        points: sol.grid.points,
        polished: polish,
        certificate,
    };
    Ok((sol, info))
}

fn line(id: &str, title: &str, ok: bool, detail: String) -> CheckLine {
    CheckLine {
        id: id.into(),
        title: title.into(),
        status: if ok { Status::Pass } else { Status::Fail },
        detail,
        seconds: 0.0,
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

fn csv_file(art: &mut ArtifactDir, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(art.file(name))?))
}

/// Binary field plus its JSON header, stamped with the config hash.
fn snapshot(art: &mut ArtifactDir, stem: &str, field: &ComplexField) -> Result<(), CommandError> {
    write_snapshot(&art.file(&format!("{stem}.bin")), field)?;
    let header = art.file(&format!("{stem}.json"));
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&header)?).map_err(std::io::Error::other)?;
    art.json(&format!("{stem}.json"), &value)?;
    Ok(())
}

fn solve_pekar(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let radial = solve_radial(&cfg.radial)?;
    radial.write_csv(&art.file("radial.csv"))?;
    let v = radial.virial_residuals();
    art.json(
        "radial.json",
        &json!({
            "e_p": radial.e_p,
            "mu_p": radial.mu_p,
            "mu_over_e": radial.mu_p / radial.e_p,
            "scalars": radial.scalars,
            "raw": radial.raw,
            "virial": v,
            "params": radial.params,
            "iterations": radial.log.len(),
        }),
    )?;
    let mut checks = vec![line(
        "virial",
        "virial family",
        v.max() < 1e-5,
        format!("max relative residual {:.1e} (tol 1e-5), mu/e = {:.8}", v.max(), radial.mu_p / radial.e_p),
    )];
    if cfg.radial.coupling_scale != 1.0 {
        checks.push(info("grid", "grid stage", "skipped for a rescaled coupling".into()));
        return Ok(checks);
    }
    let (sol, grid) = grid_solution(cfg, &radial, false)?;
    snapshot(art, "psi_p", &sol.psi)?;
    snapshot(art, "phi_p", &sol.phi)?;
    let sandwich = sol.sandwich_identities();
    let hessian = if cfg.check.hessian {
        let opts = HessianOptions {
            seed: cfg.check.seed,
            ..HessianOptions::default()
        };
        Some(sol.hessian_spectrum(4, &opts)?)
    } else {
        None
    };
    let identity = sol.scalars.grad_phi_sq / sol.scalars.psi_l4 - 1.0;
    art.json(
        "invariants.json",
        &json!({
            "grid": grid,
            "summary": sol.summary(),
            "virial": v,
            "gradient_vs_l4": identity,
            "sandwich": sandwich,
            "hessian": hessian,
        }),
    )?;
    checks.push(line(
        "sandwich",
        "sandwich identities",
        sandwich.inverse_max_error < 1e-3 && sandwich.forward_max_error < 1e-3 && sandwich.inverse_image_residual < 1e-3,
        format!(
            "inverse {:.1e}, forward {:.1e}, residual {:.1e} (tol 1e-3)",
            sandwich.inverse_max_error, sandwich.forward_max_error, sandwich.inverse_image_residual
        ),
    ));
    checks.push(info("identity", "field gradient vs L4 norm", format!("{identity:.2e}")));
    if let Some(h) = hessian {
        let kernel = h.values[..3].iter().fold(0.0f64, |a, b| a.max(b.abs()));
        checks.push(line(
            "hessian",
            "Hessian kernel and gap",
            kernel < 1e-3 && h.values[3] > 0.0,
            format!("kernel {kernel:.1e} (tol 1e-3), gap {:.4e}", h.values[3]),
        ));
    }
    Ok(checks)
}

fn effective_mass(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let radial = solve_radial(&cfg.radial)?;
    let (sol, grid) = grid_solution(cfg, &radial, false)?;
    let p = &cfg.physics;
    let reports = p
        .alphas
        .par_iter()
        .map(|&a| mass_report(&[a], &sol, &p.v_fractions).map(|mut r| r.remove(0)))
        .collect::<polaron_core::Result<Vec<_>>>()?;
    write_mass_csv(&reports, csv_file(art, "mass.csv")?)?;
    art.json("mass.json", &json!({ "grid": grid, "reports": reports }))?;

    let vm = v_max(sol.scalars.q);
    let templates = Templates::new(&sol);
    let mut out = csv_file(art, "trial_energies.csv")?;
    writeln!(out, "alpha,variant,v,closed_form,grid,difference")?;
    let mut admissibility = Vec::new();
    for &a in &p.alphas {
        for variant in [Variant::Standard, Variant::Alternative] {
            for &fr in &p.v_fractions {
                let e = trial_energy(fr * vm, a, &sol, variant)?;
                let name = if variant == Variant::Standard { "standard" } else { "alternative" };
                writeln!(out, "{a:e},{name},{:e},{:e},{:e},{:e}", e.v, e.closed_form, e.grid, e.difference)?;
            }
        }
        if a > 0.0 {
            for &fr in &p.v_fractions {
                let st = trial_state(fr * vm, a, &sol, Variant::Standard)?;
                admissibility.push(json!({ "alpha": a, "report": admissibility_check(&st, fr * vm, &sol, &templates) }));
            }
        }
    }
    out.flush()?;
    art.json("admissibility.json", &json!({ "records": admissibility }))?;

    let mut checks = Vec::new();
    for r in &reports {
        let (es, ea) = (r.standard_error(), r.alternative_error());
        checks.push(line(
            &format!("mass-{}", r.alpha),
            "fitted masses",
            es.abs() < 5e-3 && ea.abs() < 5e-3,
            format!(
                "alpha {}: standard {:.6} vs {:.6} ({es:+.1e}), alternative {:.6} vs {:.6} ({ea:+.1e}), tol 0.5%",
                r.alpha, r.fit_standard.mass, r.m_eff_pred, r.fit_alternative.mass, r.m_eff_alt_pred
            ),
        ));
    }
    let worst = admissibility
        .iter()
        .map(|r| r["report"].get("electron_velocity_residual").and_then(|v| v.as_f64()).unwrap_or(0.0).abs())
        .fold(0.0, f64::max);
    checks.push(info("admissibility", "electron velocity residual", format!("max {worst:.1e}")));

    if p.minimize {
        let opts = MinimizeOptions {
            max_iter: p.minimize_max_iter,
            ..MinimizeOptions::default()
        };
        let tasks: Vec<(f64, f64)> = p.alphas.iter().filter(|a| **a > 0.0).flat_map(|&a| p.v_fractions.iter().map(move |&f| (a, f * vm))).collect();
        let results = tasks
            .par_iter()
            .map(|&(a, v)| {
                let m = constrained_minimize_ev(v, a, &sol, &opts)?;
                let t = trial_energy(v, a, &sol, Variant::Standard)?;
                Ok((a, v, m, t.grid))
            })
            .collect::<polaron_core::Result<Vec<_>>>()?;
        let mut out = csv_file(art, "minimized.csv")?;
        writeln!(out, "alpha,v,energy,trial_energy,difference,iterations,converged,gradient_norm,constraint_residual")?;
        for (a, v, m, t) in &results {
            writeln!(
                out,
                "{a:e},{v:e},{:e},{t:e},{:e},{},{},{:e},{:e}",
                m.energy,
                m.energy - t,
                m.iterations,
                m.converged,
                m.gradient_norm,
                m.constraint_residual
            )?;
        }
        out.flush()?;
        for &a in p.alphas.iter().filter(|a| **a > 0.0) {
            let pairs: Vec<(f64, f64)> = results.iter().filter(|r| r.0 == a).map(|r| (r.1, r.2.energy)).collect();
            let fit = fit_mass(&pairs, sol.e_p, pairs.len() >= 4)?;
            let want = quadratic_coefficient(a, sol.radial.scalars.grad_phi_sq / 3.0);
            let gap = results.iter().filter(|r| r.0 == a).map(|r| r.2.energy - r.3).fold(f64::NEG_INFINITY, f64::max);
            checks.push(info(
                &format!("minimized-{a}"),
                "constrained minimization",
                format!(
                    "alpha {a}: coefficient {:.6} vs trial {want:.6}, max(E_min - E_trial) {gap:.1e}",
                    fit.mass / 2.0
                ),
            ));
        }
    }
    Ok(checks)
}

struct Task {
    alpha: f64,
    v: f64,
}

fn dynamics_tasks(cfg: &RunConfig, checks: &mut Vec<CheckLine>) -> Vec<Task> {
    let mut tasks = Vec::new();
    for &alpha in &cfg.physics.alphas {
        if alpha == 0.0 {
            checks.push(info("alpha-0", "skipped coupling", "alpha = 0 has no phonon dynamics".into()));
            continue;
        }
        for &v in &cfg.physics.velocities {
            tasks.push(Task { alpha, v });
        }
    }
    tasks
}

fn tag(t: &Task) -> String {
    format!("a{}_v{}", t.alpha, t.v)
}

fn simulate(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let radial = solve_radial(&cfg.radial)?;
    let (sol, grid) = grid_solution(cfg, &radial, true)?;
    let d = &cfg.dynamics;
    let mut checks = Vec::new();
    let tasks = dynamics_tasks(cfg, &mut checks);
    let observers = Observers {
        projections: d.projections,
        radiation_radii: d.radiation_radii.clone(),
        ..Observers::default()
    };
    let runs = tasks
        .par_iter()
        .map(|t| {
            let start = if t.v == 0.0 {
                PolaronState::stationary(&sol, t.alpha)?
            } else {
                trial_state(t.v, t.alpha, &sol, Variant::Standard)?
            };
            let dt = d.dt.unwrap_or(default_dt(t.alpha));
            integrate(&start, d.t_end, dt, d.cadence, &observers, Some(&sol), d.absorbing_mask())
        })
        .collect::<polaron_core::Result<Vec<_>>>()?;
    let mut summary = Vec::new();
    for (t, (end, series)) in tasks.iter().zip(&runs) {
        let name = format!("series_{}.csv", tag(t));
        series.write_csv(csv_file(art, &name)?)?;
        if d.snapshots {
            snapshot(art, &format!("psi_{}", tag(t)), &end.psi)?;
            snapshot(art, &format!("phi_{}", tag(t)), &end.phi)?;
        }
        let drift = series.max_energy_drift();
        if t.v == 0.0 && !series.masked {
            checks.push(line(
                &format!("drift-{}", tag(t)),
                "stationary energy drift",
                drift < d.drift_tol,
                format!("{drift:.1e} (tol {:.0e})", d.drift_tol),
            ));
        }
        summary.push(json!({
            "alpha": t.alpha, "v": t.v, "dt": series.dt, "series": name,
            "energy_drift": drift, "norm_drift": series.max_norm_drift(), "records": series.records.len(),
        }));
    }
    art.json("simulate.json", &json!({ "grid": grid, "runs": summary }))?;
    Ok(checks)
}

fn damping(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let radial = solve_radial(&cfg.radial)?;
    let (sol, grid) = grid_solution(cfg, &radial, true)?;
    let d = &cfg.dynamics;
    let mut checks = Vec::new();
    let tasks = dynamics_tasks(cfg, &mut checks);
    let opts = BoostOptions {
        cadence: d.cadence,
        mask: d.absorbing_mask(),
        radiation_radii: d.radiation_radii.clone(),
    };
    let runs = tasks
        .par_iter()
        .map(|t| boost_experiment(t.v, t.alpha, d.t_end, d.dt.unwrap_or(default_dt(t.alpha)), &sol, &opts))
        .collect::<polaron_core::Result<Vec<ObservableSeries>>>()?;
    let mut summary = Vec::new();
    for (t, series) in tasks.iter().zip(&runs) {
        let name = format!("damping_{}.csv", tag(t));
        series.write_csv(csv_file(art, &name)?)?;
        let first = &series.records[0];
        let last = series.records.last().expect("at least two records");
        if t.v == 0.0 {
            let mut still: f64 = 0.0;
            for r in &series.records {
                still = still.max(r.velocity.iter().fold(0.0f64, |a, b| a.max(b.abs())));
                if let Some(p) = r.phonon {
                    still = still.max(p.velocity.iter().fold(0.0f64, |a, b| a.max(b.abs())));
                }
            }
            checks.push(line(&format!("rest-{}", tag(t)), "resting polaron stays at rest", still < 1e-8, format!("max velocity {still:.1e} (tol 1e-8)")));
        }
        summary.push(json!({
            "alpha": t.alpha, "v": t.v, "dt": series.dt, "series": name, "masked": series.masked,
            "initial_velocity": first.velocity, "final_velocity": last.velocity,
            "initial_phonon": first.phonon, "final_phonon": last.phonon,
            "radiation_radii": series.radiation_radii, "final_radiation": last.radiation,
        }));
    }
    art.json("damping.json", &json!({ "grid": grid, "runs": summary }))?;
    Ok(checks)
}

fn traveling_wave(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let radial = solve_radial(&cfg.radial)?;
    let (sol, grid) = grid_solution(cfg, &radial, false)?;
    let reports = cfg
        .physics
        .alphas
        .par_iter()
        .map(|&a| traveling_wave_linearization(a, &sol).map(|tw| tw.report))
        .collect::<polaron_core::Result<Vec<_>>>()?;
    let mut out = csv_file(art, "traveling_wave.csv")?;
    writeln!(out, "alpha,inverse_residual,kernel_residual,coefficient,trial_coefficient,quadrature_coefficient")?;
    for r in &reports {
        writeln!(
            out,
            "{:e},{:e},{:e},{:e},{:e},{:e}",
            r.alpha, r.inverse_residual, r.kernel_residual, r.coefficient, r.trial_coefficient, r.quadrature_coefficient
        )?;
    }
    out.flush()?;
    art.json("traveling_wave.json", &json!({ "grid": grid, "reports": reports }))?;
    Ok(reports
        .iter()
        .map(|r| {
            let gap = (r.coefficient - r.trial_coefficient).abs();
            line(
                &format!("tw-{}", r.alpha),
                "traveling-wave coefficient",
                r.inverse_residual < 1e-3 && gap < 1e-10,
                format!("alpha {}: residual {:.1e} (tol 1e-3), coefficient gap {gap:.1e} (tol 1e-10)", r.alpha, r.inverse_residual),
            )
        })
        .collect())
}

fn check(cfg: &RunConfig, art: &mut ArtifactDir) -> Result<Vec<CheckLine>, CommandError> {
    let suite = Suite::new(cfg.check.seed);
    let lines = suite.run(&mut |l| println!("{l}"));
    art.json("check.json", &json!({ "checks": lines }))?;
    Ok(lines)
}
