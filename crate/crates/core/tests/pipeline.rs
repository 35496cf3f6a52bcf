use polaron_core::dynamics::{integrate, Observers, PolaronState};
use polaron_core::mass::{fit_mass, m_eff, trial_energy, trial_state, v_max, Variant, FIT_FRACTIONS};
use polaron_core::pekar::{solve_radial, LiftOptions, PekarSolution, RadialParams, RefineOptions};
use polaron_core::spectral::snapshot::{read_snapshot, write_snapshot};
use polaron_core::spectral::{energy_g, GridSpec};

fn desk() -> PekarSolution {
    let radial = solve_radial(&RadialParams::default()).unwrap();
    PekarSolution::lift(&radial, GridSpec::new(640.0, 32).unwrap(), &LiftOptions::default())
        .unwrap()
        .refine(&RefineOptions::default())
        .unwrap()
}

#[test]
fn radial_to_mass_fit_pipeline() {
    let sol = desk();
    let shifted = sol.radial.e_p + sol.discrepancy.e_p_torus_shift;
    assert!((sol.e_p - shifted).abs() < 1e-3 * sol.radial.e_p.abs());
    let vm = v_max(sol.scalars.q);
    let alpha = 1.0;
    let pairs: Vec<(f64, f64)> = FIT_FRACTIONS
        .iter()
        .map(|f| {
            let v = f * vm;
            let e = trial_energy(v, alpha, &sol, Variant::Standard).unwrap();
            let (grid, closed) = (e.grid - sol.e_p, e.closed_form - sol.radial.e_p);
            assert!((grid / closed - 1.0).abs() < 1e-3, "{grid} vs {closed}");
            (v, e.grid)
        })
        .collect();
    let fit = fit_mass(&pairs, sol.e_p, false).unwrap();
    let pred = m_eff(alpha, sol.scalars.grad_phi_sq);
    assert!((fit.mass / pred - 1.0).abs() < 1e-3, "{} vs {pred}", fit.mass);

    let state = trial_state(0.02 * vm, alpha, &sol, Variant::Standard).unwrap();
    let direct = energy_g(&state.psi, &state.phi).unwrap().total;
    assert!((direct - pairs[2].1).abs() < 1e-12 * direct.abs());
}

#[test]
fn snapshots_and_dynamics_share_a_grid() {
    let sol = desk();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("psi.bin");
    write_snapshot(&path, &sol.psi).unwrap();
    let psi = read_snapshot(&path).unwrap();
    assert_eq!(psi.values(), sol.psi.values());

    let start = PolaronState::new(psi, sol.phi.clone(), 2.0).unwrap();
    let (_, series) = integrate(&start, 0.2, 1e-3, 50, &Observers::default(), Some(&sol), None).unwrap();
    assert_eq!(series.records.len(), 5);
    for r in &series.records {
        let p = r.phonon.expect("projection near the minimizer");
        assert!(p.z.iter().all(|z| z.abs() < 1e-8));
        assert!(p.distance < 1e-8);
    }
    assert!(series.max_energy_drift() < 1e-10);
}
