use wschaos::gpe::{project_to_ws, run_projected, Field, GpeSettings};
use wschaos::lattice::{integrate, sample_times, Clock, LatticeSystem, Preparation};
use wschaos::units::ModelParams;
use wschaos::ws_basis::{chi_tensor, solve_ws_states, BoundingBox, WsBasis};

fn basis(g: f64) -> WsBasis {
    let params = ModelParams::new(5.0, 0.25, g).unwrap();
    solve_ws_states(&params, &BoundingBox::default()).unwrap()
}

/// Central-well peak with a quadratic phase profile, so the model is far
/// from stationary.
fn peaked() -> Preparation {
    let wells: Vec<i32> = (-6..=5).collect();
    let amplitudes = wells.iter().map(|&n| (-(n * n) as f64 / 4.0).exp()).collect();
    let phases = wells.iter().map(|&n| 0.7 * (n * n) as f64).collect();
    Preparation { wells, amplitudes, phases }
}

/// RMS population difference on wells -1..=1 between the GPE projection and
/// the nearest-neighbor model over `t_end`.
fn cross_solver_rms(basis: &WsBasis, prep: &Preparation, t_end: f64) -> (f64, f64) {
    let field = Field::from_preparation(basis, prep).unwrap();
    let times = sample_times(t_end, 101);
    let (gpe, diag) = run_projected(&field, basis, &GpeSettings::default(), &times).unwrap();
    assert!(diag.norm_drift < 1e-8);
    let chi = chi_tensor(basis, 2).unwrap().nn();
    let sys = LatticeSystem::for_preparation(basis.params, chi, prep, Clock::Raw).unwrap();
    let start = prep.mode_state(sys.first_well, sys.last_well).unwrap();
    let model = integrate(&start, &sys, &times, 1e-10).unwrap();
    let mut sq = 0.0;
    for (k, s) in gpe.iter().enumerate() {
        let m = model.mode(k);
        sq += (-1..=1).map(|n| (s.modes.population(n) - m.population(n)).powi(2)).sum::<f64>();
    }
    let worst = gpe.iter().map(|s| s.completeness).fold(1.0, f64::min);
    ((sq / (3 * gpe.len()) as f64).sqrt(), worst)
}

#[test]
fn prepared_field_lies_in_the_band() {
    let basis = basis(0.25);
    let field = Field::from_preparation(&basis, &Preparation::twelve_wells()).unwrap();
    let c = project_to_ws(&field, &basis).unwrap();
    assert!((c.norm_sqr() - 1.0).abs() < 1e-6);
    assert!((c.population(0) - 1.0 / 12.0).abs() < 1e-8);
}

#[test]
fn model_tracks_gpe_over_one_bloch_period() {
    let basis = basis(0.25);
    let t = basis.params.bloch_period();
    let (rms, _) = cross_solver_rms(&basis, &Preparation::twelve_wells(), t);
    assert!(rms < 0.05, "uniform preparation: {rms}");
    let (rms, worst) = cross_solver_rms(&basis, &peaked(), t);
    println!("peaked preparation: rms {rms:e}, completeness {worst}");
    assert!(rms < 0.05);
    assert!(worst > 0.97);
}

#[test]
fn strong_coupling_keeps_most_weight_in_band() {
    let basis = basis(1.0);
    let (_, worst) = cross_solver_rms(&basis, &peaked(), 10.0);
    println!("g = 1 completeness {worst}");
    assert!(worst > 0.95);
}
