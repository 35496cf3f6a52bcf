//! Time integration of the Landau–Pekar equations
//! `i∂ₜψ = h_φ ψ`, `iα²∂ₜφ = φ + σ_ψ` by Strang splitting.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

use crate::error::{param, Result};
use crate::manifold::{Metric, ProjectionOptions, Templates};
use crate::pekar::PekarSolution;
use crate::spectral::fft::plan;
use crate::spectral::{
    electron_observables, energy_g_unchecked, potential_of, sigma_of, translate, ComplexField, EnergyBreakdown,
    GridSpec,
};

#[derive(Clone, Debug)]
pub struct PolaronState {
    pub psi: ComplexField,
    pub phi: ComplexField,
    pub alpha: f64,
    pub t: f64,
}

impl PolaronState {
    pub fn new(psi: ComplexField, phi: ComplexField, alpha: f64) -> Result<Self> {
        psi.grid().same_as(phi.grid())?;
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(param("alpha", "dynamics needs a positive finite coupling"));
        }
        Ok(Self { psi, phi, alpha, t: 0.0 })
    }

    pub fn stationary(sol: &PekarSolution, alpha: f64) -> Result<Self> {
        Self::new(sol.psi.clone(), sol.phi.clone(), alpha)
    }

    pub fn grid(&self) -> &GridSpec {
        self.psi.grid()
    }

    pub fn energy(&self) -> EnergyBreakdown {
        energy_g_unchecked(&self.psi, &self.phi)
    }

    /// `(ψ̄, φ̄)` at `-t`: maps solutions to solutions run backwards.
    pub fn conjugated(&self) -> Self {
        Self {
            psi: self.psi.map(|v| v.conj()),
            phi: self.phi.map(|v| v.conj()),
            alpha: self.alpha,
            t: -self.t,
        }
    }
}

/// `min(1e-3, α²/50)`.
pub fn default_dt(alpha: f64) -> f64 {
    (alpha * alpha / 50.0).min(1e-3)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbsorbingMask {
    /// Width of the damping layer as a fraction of the half box.
    pub width_fraction: f64,
    /// Damping rate at the box faces.
    pub strength: f64,
}

impl Default for AbsorbingMask {
    fn default() -> Self {
        Self {
            width_fraction: 0.2,
            strength: 0.05,
        }
    }
}

/// Reusable Strang stepper for a fixed grid, coupling and time step.
pub struct Stepper {
    grid: GridSpec,
    dt: f64,
    half_kinetic: Vec<Complex64>,
    phonon_rotation: Complex64,
    mask: Option<Vec<f64>>,
}

impl Stepper {
    pub fn new(grid: GridSpec, alpha: f64, dt: f64, mask: Option<AbsorbingMask>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(param("dt", "time step must be positive"));
        }
        if !(alpha > 0.0) {
            return Err(param("alpha", "dynamics needs a positive coupling"));
        }
        let half_kinetic = (0..grid.len())
            .map(|i| Complex64::from_polar(1.0, -0.5 * dt * grid.k_squared(i)))
            .collect();
        let mask = mask.map(|m| {
            let half = 0.5 * grid.box_length;
            let width = m.width_fraction * half;
            (0..grid.len())
                .map(|i| {
                    let depth = grid
                        .position(i)
                        .iter()
                        .map(|x| ((x.abs() - (half - width)) / width).clamp(0.0, 1.0))
                        .fold(0.0f64, f64::max);
                    let s = (0.5 * std::f64::consts::PI * depth).sin().powi(2);
                    (-m.strength * dt * s).exp()
                })
                .collect()
        });
        Ok(Self {
            grid,
            dt,
            half_kinetic,
            phonon_rotation: Complex64::from_polar(1.0, -0.5 * dt / (alpha * alpha)),
            mask,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn masked(&self) -> bool {
        self.mask.is_some()
    }

    /// Exact flow of `iα²∂ₜφ = φ + σ` over half a step with `σ` frozen.
    fn phonon_half(&self, phi: &mut ComplexField, sigma: &ComplexField) {
        let r = self.phonon_rotation;
        for (p, s) in phi.values_mut().iter_mut().zip(sigma.values()) {
            *p = r * (*p + s) - s;
        }
    }

    fn kinetic_half(&self, data: &mut [Complex64]) {
        for (v, m) in data.iter_mut().zip(&self.half_kinetic) {
            *v *= m;
        }
    }

    /// Electron flow with `φ` frozen: kinetic half step, potential phase, kinetic half step.
    fn electron(&self, psi: &mut ComplexField, potential: &[f64]) {
        let fft = plan(self.grid.points);
        let data = psi.values_mut();
        fft.forward(data);
        self.kinetic_half(data);
        fft.inverse(data);
        for (v, u) in data.iter_mut().zip(potential) {
            *v *= Complex64::from_polar(1.0, -self.dt * u);
        }
        fft.forward(data);
        self.kinetic_half(data);
        fft.inverse(data);
    }

    /// Advances `n` steps, reusing `σ_ψ` between consecutive phonon half steps.
    pub fn advance(&self, state: &mut PolaronState, n: usize) -> Result<()> {
        self.grid.same_as(state.grid())?;
        let mut sigma = sigma_of(&state.psi);
        for _ in 0..n {
            self.phonon_half(&mut state.phi, &sigma);
            let v = potential_of(&state.phi);
            self.electron(&mut state.psi, &v);
            sigma = sigma_of(&state.psi);
            self.phonon_half(&mut state.phi, &sigma);
            if let Some(m) = &self.mask {
                for (p, w) in state.phi.values_mut().iter_mut().zip(m) {
                    *p *= w;
                }
            }
            state.t += self.dt;
        }
        Ok(())
    }
}

pub fn step(state: &PolaronState, dt: f64) -> Result<PolaronState> {
    let mut out = state.clone();
    Stepper::new(*state.grid(), state.alpha, dt, None)?.advance(&mut out, 1)?;
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Observers {
    /// Project onto the minimizer manifolds at every sample.
    pub projections: bool,
    /// Radii of the balls around the phonon position outside which the
    /// deviation `‖φ - φ_P^z‖²` is recorded.
    pub radiation_radii: Vec<f64>,
    pub projection: ProjectionOptions,
}

impl Default for Observers {
    fn default() -> Self {
        Self {
            projections: true,
            radiation_radii: Vec::new(),
            projection: ProjectionOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhononSample {
    pub z: [f64; 3],
    pub velocity: [f64; 3],
    pub distance: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElectronSample {
    pub y: [f64; 3],
    pub theta: f64,
    pub distance_h1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableRecord {
    pub step: usize,
    pub t: f64,
    pub energy: EnergyBreakdown,
    pub norm: f64,
    pub position: [f64; 3],
    pub velocity: [f64; 3],
    pub position_reliable: bool,
    pub phonon: Option<PhononSample>,
    pub electron: Option<ElectronSample>,
    pub radiation: Vec<f64>,
    /// Reason a requested projection was refused.
    pub missing: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub alpha: f64,
    pub dt: f64,
    pub radiation_radii: Vec<f64>,
    pub masked: bool,
    pub records: Vec<ObservableRecord>,
}

fn fmt(x: f64) -> String {
    format!("{x:e}")
}

impl ObservableSeries {
    pub fn header(&self) -> Vec<String> {
        let mut h: Vec<String> = [
            "step", "t", "energy", "kinetic", "interaction", "field", "norm", "x_el_1", "x_el_2", "x_el_3", "v_el_1",
            "v_el_2", "v_el_3", "position_reliable", "phonon_ok", "z_1", "z_2", "z_3", "v_ph_1", "v_ph_2", "v_ph_3",
            "phonon_distance", "electron_ok", "y_1", "y_2", "y_3", "theta", "electron_distance_h1",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        h.extend(self.radiation_radii.iter().map(|r| format!("radiation_r{r}")));
        h
    }

    pub fn write_csv(&self, out: impl Write) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(self.header())?;
        let nan = f64::NAN;
        for r in &self.records {
            let mut row = vec![r.step.to_string(), fmt(r.t)];
            let e = r.energy;
            row.extend([e.total, e.kinetic, e.interaction, e.field, r.norm].map(fmt));
            row.extend(r.position.map(fmt));
            row.extend(r.velocity.map(fmt));
            row.push((r.position_reliable as u8).to_string());
            let p = r.phonon.unwrap_or(PhononSample {
                z: [nan; 3],
                velocity: [nan; 3],
                distance: nan,
            });
            row.push((r.phonon.is_some() as u8).to_string());
            row.extend(p.z.map(fmt));
            row.extend(p.velocity.map(fmt));
            row.push(fmt(p.distance));
            let q = r.electron.unwrap_or(ElectronSample {
                y: [nan; 3],
                theta: nan,
                distance_h1: nan,
            });
            row.push((r.electron.is_some() as u8).to_string());
            row.extend(q.y.map(fmt));
            row.push(fmt(q.theta));
            row.push(fmt(q.distance_h1));
            let mut rad = r.radiation.clone();
            rad.resize(self.radiation_radii.len(), nan);
            row.extend(rad.into_iter().map(fmt));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Largest `|𝓖(t) - 𝓖(0)| / |𝓖(0)|`.
    pub fn max_energy_drift(&self) -> f64 {
        let e0 = self.records[0].energy.total;
        self.records
            .iter()
            .map(|r| ((r.energy.total - e0) / e0).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_norm_drift(&self) -> f64 {
        self.records.iter().map(|r| (r.norm - 1.0).abs()).fold(0.0, f64::max)
    }
}

struct Observer<'a> {
    sol: Option<&'a PekarSolution>,
    templates: Option<Templates>,
    opts: &'a Observers,
    last_z: Option<[f64; 3]>,
    last_y: Option<[f64; 3]>,
}

impl<'a> Observer<'a> {
    fn new(sol: Option<&'a PekarSolution>, opts: &'a Observers) -> Result<Self> {
        if (opts.projections || !opts.radiation_radii.is_empty()) && sol.is_none() {
            return Err(param("observers", "projections need the Pekar minimizer on the same grid"));
        }
        Ok(Self {
            sol,
            templates: sol.filter(|_| opts.projections || !opts.radiation_radii.is_empty()).map(Templates::new),
            opts,
            last_z: None,
            last_y: None,
        })
    }

    fn record(&mut self, step: usize, s: &PolaronState) -> ObservableRecord {
        let obs = electron_observables(&s.psi);
        let mut rec = ObservableRecord {
            step,
            t: s.t,
            energy: s.energy(),
            norm: obs.norm,
            position: obs.position,
            velocity: obs.velocity,
            position_reliable: obs.boundary_mass < crate::spectral::BOUNDARY_MASS_TOL,
            phonon: None,
            electron: None,
            radiation: Vec::new(),
            missing: None,
        };
        let Some(t) = &self.templates else { return rec };
        let po = &self.opts.projection;
        let mut missing = Vec::new();
        let phonon = t
            .project_phonon(&s.phi, self.last_z, po)
            .or_else(|_| t.project_phonon(&s.phi, None, po))
            .and_then(|p| Ok((p, t.phonon_velocity(&s.phi, s.alpha, &p)?)));
        match phonon {
            Ok((p, v)) => {
                self.last_z = Some(p.z);
                rec.phonon = Some(PhononSample {
                    z: p.z,
                    velocity: v,
                    distance: p.distance,
                });
            }
            Err(e) => missing.push(format!("phonon: {e}")),
        }
        if self.opts.projections {
            let electron = t
                .project_electron(&s.psi, Metric::H1, self.last_y, po)
                .or_else(|_| t.project_electron(&s.psi, Metric::H1, None, po));
            match electron {
                Ok(p) => {
                    self.last_y = Some(p.y);
                    rec.electron = Some(ElectronSample {
                        y: p.y,
                        theta: p.theta,
                        distance_h1: p.distance,
                    });
                }
                Err(e) => missing.push(format!("electron: {e}")),
            }
        }
        if let (Some(p), Some(sol)) = (rec.phonon, self.sol) {
            rec.radiation = radiation_profile(&s.phi, sol, p.z, &self.opts.radiation_radii);
        }
        if !missing.is_empty() {
            rec.missing = Some(missing.join("; "));
        }
        rec
    }
}

/// `∫_{|x - z| > R} |φ - φ_P^z|²` for each `R`, with the periodic distance.
pub fn radiation_profile(phi: &ComplexField, sol: &PekarSolution, z: [f64; 3], radii: &[f64]) -> Vec<f64> {
    if radii.is_empty() {
        return Vec::new();
    }
    let g = *phi.grid();
    let centre = translate(&sol.phi, z);
    let l = g.box_length;
    let mut out = vec![0.0; radii.len()];
    for (i, (a, b)) in phi.values().iter().zip(centre.values()).enumerate() {
        let x = g.position(i);
        let r2: f64 = (0..3)
            .map(|k| {
                let d = (x[k] - z[k]).rem_euclid(l);
                let d = if d > 0.5 * l { d - l } else { d };
                d * d
            })
            .sum();
        let w = (a - b).norm_sqr();
        for (o, r) in out.iter_mut().zip(radii) {
            if r2 > r * r {
                *o += w;
            }
        }
    }
    out.iter().map(|v| v * g.cell_volume()).collect()
}

/// Integrates to time `t_end`, recording every `cadence` steps and at the end.
pub fn integrate(
    state: &PolaronState,
    t_end: f64,
    dt: f64,
    cadence: usize,
    observers: &Observers,
    sol: Option<&PekarSolution>,
    mask: Option<AbsorbingMask>,
) -> Result<(PolaronState, ObservableSeries)> {
    if !(t_end > 0.0) {
        return Err(param("T", "integration time must be positive"));
    }
    if cadence == 0 {
        return Err(param("cadence", "must be at least 1"));
    }
    if let Some(s) = sol {
        s.grid.same_as(state.grid())?;
    }
    let n = (t_end / dt - 1e-9).ceil().max(1.0) as usize;
    let stepper = Stepper::new(*state.grid(), state.alpha, t_end / n as f64, mask)?;
    let mut obs = Observer::new(sol, observers)?;
    let mut s = state.clone();
    let mut records = vec![obs.record(0, &s)];
    let mut done = 0;
    while done < n {
        let k = cadence.min(n - done);
        stepper.advance(&mut s, k)?;
        done += k;
        records.push(obs.record(done, &s));
    }
    let series = ObservableSeries {
        alpha: state.alpha,
        dt: stepper.dt(),
        radiation_radii: observers.radiation_radii.clone(),
        masked: stepper.masked(),
        records,
    };
    Ok((s, series))
}

/// Overlap phase `arg⟨ψ_P, ψ⟩`.
pub fn overlap_phase(sol: &PekarSolution, psi: &ComplexField) -> Result<f64> {
    Ok(sol.psi.inner(psi)?.arg())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostOptions {
    pub cadence: usize,
    pub mask: Option<AbsorbingMask>,
    pub radiation_radii: Vec<f64>,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self {
            cadence: 100,
            mask: None,
            radiation_radii: Vec::new(),
        }
    }
}

/// Starts from the standard trial state at velocity `v` and records
/// velocities, energies and the radiated field.
pub fn boost_experiment(
    v: f64,
    alpha: f64,
    t_end: f64,
    dt: f64,
    sol: &PekarSolution,
    opts: &BoostOptions,
) -> Result<ObservableSeries> {
    let trial = crate::mass::trial_state(v, alpha, sol, crate::mass::Variant::Standard)?;
    let observers = Observers {
        projections: true,
        radiation_radii: opts.radiation_radii.clone(),
        projection: ProjectionOptions::default(),
    };
    let (_, series) = integrate(&trial, t_end, dt, opts.cadence, &observers, Some(sol), opts.mask)?;
    Ok(series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::Role;
    use crate::testing::{random_field, small};
    use proptest::prelude::*;

    fn quiet() -> Observers {
        Observers {
            projections: false,
            ..Observers::default()
        }
    }

    fn lumpy_state(seed: u64, alpha: f64) -> PolaronState {
        let s = small();
        let bump = random_field(s.grid, seed).zip_map(&s.psi, |a, b| a * b.re).unwrap().normalized();
        let psi = s.psi.add_scaled(Complex64::new(0.2, 0.1), &bump).unwrap().normalized();
        let phi = s.phi.add_scaled(Complex64::new(0.0, 0.05 * s.phi.norm()), &bump).unwrap();
        PolaronState::new(psi, phi, alpha).unwrap()
    }

    #[test]
    fn frozen_phonon_flow_is_the_exact_rotation() {
        let s = small();
        let (alpha, dt) = (0.7, 0.3);
        let st = Stepper::new(s.grid, alpha, dt, None).unwrap();
        let sigma = sigma_of(&s.psi);
        let mut phi = random_field(s.grid, 2).with_role(Role::Phonon);
        let phi0 = phi.clone();
        st.phonon_half(&mut phi, &sigma);
        st.phonon_half(&mut phi, &sigma);
        let rot = Complex64::from_polar(1.0, -dt / (alpha * alpha));
        let exact = phi0.add_scaled(Complex64::new(1.0, 0.0), &sigma).unwrap().scaled(rot).sub(&sigma).unwrap();
        assert!(phi.sub(&exact).unwrap().norm() < 1e-14 * exact.norm());
    }

    #[test]
    fn steps_preserve_the_norm() {
        let st = lumpy_state(4, 0.8);
        let out = step(&st, 0.5).unwrap();
        assert!((out.psi.norm() - 1.0).abs() < 1e-14);
        assert!((out.t - 0.5).abs() < 1e-15);
    }

    #[test]
    fn stationary_state_only_rotates() {
        let s = small();
        let t_end = 0.5;
        let (end, series) = integrate(&PolaronState::stationary(s, 1.0).unwrap(), t_end, 1e-3, 100, &quiet(), Some(s), None).unwrap();
        let modulus = end.psi.map(|v| Complex64::new(v.norm(), 0.0));
        assert!(modulus.sub(&s.psi).unwrap().norm() < 1e-8);
        assert!(end.phi.sub(&s.phi).unwrap().norm() < 1e-8 * s.phi.norm());
        let phase = overlap_phase(s, &end.psi).unwrap();
        let err = (phase + s.mu_p * t_end + std::f64::consts::PI).rem_euclid(std::f64::consts::TAU) - std::f64::consts::PI;
        assert!(err.abs() < 1e-6);
        assert!(series.max_energy_drift() < 1e-10);
    }

    #[test]
    fn conjugation_runs_time_backwards() {
        let st = lumpy_state(6, 0.6);
        let stepper = Stepper::new(*st.grid(), st.alpha, 0.25, None).unwrap();
        let mut s = st.clone();
        stepper.advance(&mut s, 20).unwrap();
        let mut back = s.conjugated();
        stepper.advance(&mut back, 20).unwrap();
        let back = back.conjugated();
        assert!(back.psi.sub(&st.psi).unwrap().norm() < 1e-12);
        assert!(back.phi.sub(&st.phi).unwrap().norm() < 1e-12 * st.phi.norm());
        assert!(back.t.abs() < 1e-12);
    }

    #[test]
    fn lattice_translations_commute_with_the_flow() {
        let st = lumpy_state(8, 1.0);
        let dx = st.grid().dx();
        let y = [3.0 * dx, -dx, 5.0 * dx];
        let moved = PolaronState::new(translate(&st.psi, y), translate(&st.phi, y), st.alpha).unwrap();
        let a = step(&step(&st, 0.4).unwrap(), 0.4).unwrap();
        let b = step(&step(&moved, 0.4).unwrap(), 0.4).unwrap();
        assert!(translate(&a.psi, y).sub(&b.psi).unwrap().norm() < 1e-13);
        assert!(translate(&a.phi, y).sub(&b.phi).unwrap().norm() < 1e-13 * a.phi.norm());
    }

    #[test]
    fn energy_drift_is_second_order() {
        let s = small();
        let psi = ComplexField::from_fn(s.grid, Role::Electron, |x| {
            let r = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt();
            Complex64::new(crate::testing::radial().psi_at(1.3 * r), 0.0)
        })
        .normalized();
        let st = PolaronState::new(psi, s.phi.clone(), 1.0).unwrap();
        let drift = |dt: f64| integrate(&st, 8.0, dt, 1, &quiet(), None, None).unwrap().1.max_energy_drift();
        let (a, b) = (drift(0.8), drift(0.4));
        let order = (a / b).log2();
        assert!((1.8..=2.2).contains(&order), "{a:e} {b:e} {order}");
    }

    #[test]
    fn integrate_validates_and_records() {
        let s = small();
        let st = PolaronState::stationary(s, 1.0).unwrap();
        assert!(integrate(&st, 0.0, 0.1, 1, &quiet(), None, None).is_err());
        assert!(integrate(&st, 1.0, 0.1, 0, &quiet(), None, None).is_err());
        assert!(integrate(&st, 1.0, 0.1, 1, &Observers::default(), None, None).is_err());
        let (_, series) = integrate(&st, 1.0, 0.15, 3, &Observers::default(), Some(s), None).unwrap();
        let steps: Vec<usize> = series.records.iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![0, 3, 6, 7]);
        assert!(series.records.windows(2).all(|w| w[1].t > w[0].t));
        assert!((series.records.last().unwrap().t - 1.0).abs() < 1e-12);
        assert!(series.records.iter().all(|r| r.phonon.is_some() && r.electron.is_some() && r.missing.is_none()));
    }

    #[test]
    fn refused_projections_are_flagged() {
        let s = small();
        let psi = random_field(s.grid, 9).normalized().with_role(Role::Electron);
        let st = PolaronState::new(psi, s.phi.scaled(Complex64::new(0.3, 0.0)), 1.0).unwrap();
        let obs = Observers {
            radiation_radii: vec![50.0, 100.0],
            ..Observers::default()
        };
        let (_, series) = integrate(&st, 0.2, 0.1, 1, &obs, Some(s), None).unwrap();
        let r = &series.records[0];
        assert!(r.phonon.is_none() && r.electron.is_none());
        assert!(r.missing.as_deref().unwrap().contains("phonon"));
        let mut buf = Vec::new();
        series.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        let header = lines.next().unwrap().split(',').count();
        assert_eq!(header, series.header().len());
        assert!(lines.all(|l| l.split(',').count() == header));
        assert!(text.contains("NaN"));
    }

    #[test]
    fn mask_drains_field_near_the_faces() {
        let s = small();
        let mut phi = s.phi.clone();
        let g = s.grid;
        phi.values_mut().iter_mut().enumerate().for_each(|(i, v)| {
            if g.position(i)[0].abs() > 0.45 * g.box_length {
                *v += Complex64::new(1e-4, 0.0);
            }
        });
        let st = PolaronState::new(s.psi.clone(), phi, 1.0).unwrap();
        let (end, series) = integrate(&st, 2.0, 0.1, 20, &quiet(), None, Some(AbsorbingMask::default())).unwrap();
        assert!(series.masked);
        let (free, _) = integrate(&st, 2.0, 0.1, 20, &quiet(), None, None).unwrap();
        assert!(end.phi.norm_sq() < free.phi.norm_sq());
    }

    #[test]
    fn resting_polaron_does_not_move() {
        let s = small();
        let series = boost_experiment(0.0, 1.0, 1.0, 0.05, s, &BoostOptions { cadence: 5, ..BoostOptions::default() }).unwrap();
        for r in &series.records {
            assert!(r.velocity.iter().all(|v| v.abs() < 1e-8));
            assert!(r.phonon.unwrap().velocity.iter().all(|v| v.abs() < 1e-8));
        }
    }

    #[test]
    fn radiation_vanishes_on_the_manifold() {
        let s = small();
        let z = [4.0, -2.0, 1.0];
        let r = radiation_profile(&translate(&s.phi, z), s, z, &[0.0, 100.0]);
        assert!(r.iter().all(|v| *v < 1e-28));
        assert!(radiation_profile(&s.phi, s, z, &[]).is_empty());
    }

    #[test]
    fn default_step_is_capped() {
        assert_eq!(default_dt(10.0), 1e-3);
        assert!((default_dt(0.1) - 2e-4).abs() < 1e-18);
        assert!(Stepper::new(small().grid, 0.0, 0.1, None).is_err());
        assert!(Stepper::new(small().grid, 1.0, -0.1, None).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]

        #[test]
        fn norm_is_preserved_for_random_data(seed in 0u64..1000, dt in 0.01f64..2.0, alpha in 0.2f64..3.0) {
            let st = lumpy_state(seed, alpha);
            let out = step(&st, dt).unwrap();
            prop_assert!((out.psi.norm() - 1.0).abs() < 1e-13);
        }
    }
}
