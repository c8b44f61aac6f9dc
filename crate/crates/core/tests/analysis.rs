use std::sync::OnceLock;

use num_complex::Complex64 as C64;
use wschaos::analysis::{
    find_island_family, island_center, lyapunov_max, mode_frequencies, orbit, poincare_section, pulling_fit, resonance_locus,
    Classification, IslandSearch, LaunchPlane, Locus, LyapunovSettings, OrbitStatus, SectionSpec,
};
use wschaos::lattice::{integrate, sample_times, Clock, LatticeSystem, ModeState};
use wschaos::units::ModelParams;
use wschaos::ws_basis::{chi_tensor, solve_ws_states, BoundingBox, NnChi};

fn params() -> ModelParams {
    ModelParams::new(5.0, 0.25, 0.25).unwrap()
}

fn chi() -> NnChi {
    static CHI: OnceLock<NnChi> = OnceLock::new();
    *CHI.get_or_init(|| {
        let basis = solve_ws_states(&params(), &BoundingBox::default()).unwrap();
        chi_tensor(&basis, 1).unwrap().nn()
    })
}

fn three_modes() -> LatticeSystem {
    LatticeSystem::new(params(), chi(), -1..=1, Clock::Rescaled).unwrap()
}

#[test]
fn low_action_orbits_are_regular() {
    let sys = three_modes();
    let spec = SectionSpec::default();
    for x in [0.02, 0.05, 0.1] {
        let o = orbit(&spec, &sys, x).unwrap();
        assert!(matches!(o.status, OrbitStatus::Complete | OrbitStatus::Horizon) && o.points.len() > 100);
        // a thin band in I₀, far narrower than the chaotic sea
        assert!(o.spread() < 0.05, "{x}: spread {}", o.spread());
        let l = lyapunov_max(&spec.plane.launch(x).unwrap(), &sys, &LyapunovSettings::default()).unwrap();
        assert_eq!(l.classification, Classification::Regular, "{x}: λ = {}", l.exponent);
    }
}

#[test]
fn sea_next_to_the_main_resonance_is_chaotic() {
    let sys = three_modes();
    let spec = SectionSpec::default();
    let l = lyapunov_max(&spec.plane.launch(0.5).unwrap(), &sys, &LyapunovSettings::default()).unwrap();
    assert_eq!(l.classification, Classification::Chaotic, "λ = {}", l.exponent);
    assert!(l.exponent > 1e-2);
    let o = orbit(&spec, &sys, 0.5).unwrap();
    assert!(o.spread() > 0.1, "spread {}", o.spread());
}

#[test]
fn main_island_sits_on_the_predicted_locus() {
    let sys = three_modes();
    let spec = SectionSpec { max_crossings: 200, ..SectionSpec::default() };
    let Locus::At(locus) = resonance_locus(1, 1, 0, 1, &sys.rescaled_params().unwrap(), &spec.plane).unwrap() else {
        panic!("no 1:1 locus");
    };
    let c = island_center(&spec, &sys, (0.55, 0.85), 31).unwrap().unwrap();
    assert!((c.launch - locus.scanned).abs() < 0.05, "center {} vs {}", c.launch, locus.scanned);
    assert!(c.spread < 0.01, "{}", c.spread);
}

#[test]
fn chains_of_three_and_five_islands_lock() {
    let sys = three_modes();
    let spec = SectionSpec::default();
    for (q, range) in [(3, (0.39, 0.43)), (5, (0.36, 0.40))] {
        let fam = find_island_family(&spec, &sys, 1, q, range, &IslandSearch { coarse: 17, ..Default::default() }).unwrap();
        assert!(fam.is_found(), "no 1/{q} chain in {range:?}: {:?}", fam.brackets);
        for m in &fam.members {
            assert_eq!(m.clusters, q as usize);
            assert!((m.rotation - 1.0 / q as f64).abs() < 1e-3);
        }
    }
}

#[test]
fn decoupled_section_has_flat_orbits() {
    let sys = three_modes().with_coupling_scale(0.0);
    let launches: Vec<f64> = (1..10).map(|k| 0.09 * k as f64).collect();
    let sec = poincare_section(&SectionSpec::default(), &launches, &sys, 100).unwrap();
    assert_eq!(sec.orbits.len(), launches.len());
    for (o, x) in sec.orbits.iter().zip(&launches) {
        assert_eq!(o.launch, *x);
        assert!(o.spread() < 1e-8, "{x}: {}", o.spread());
        assert!(o.max_residual < 1e-6);
    }
}

#[test]
fn classification_survives_a_tighter_tolerance() {
    let sys = three_modes();
    let plane = LaunchPlane::default();
    let loose = LyapunovSettings { horizon: 5000.0, ..Default::default() };
    let tight = LyapunovSettings { tol: loose.tol / 2.0, ..loose };
    let launches: Vec<f64> = (0..20).map(|k| 0.02 + 0.044 * k as f64).collect();
    let agree = launches
        .iter()
        .filter(|&&x| {
            let c0 = plane.launch(x).unwrap();
            let a = lyapunov_max(&c0, &sys, &loose).unwrap().classification;
            let b = lyapunov_max(&c0, &sys, &tight).unwrap().classification;
            a == b
        })
        .count();
    assert!(agree * 100 >= 95 * launches.len(), "{agree} of {}", launches.len());
}

fn unequal_state(first: i32, pops: &[f64]) -> ModeState {
    ModeState::new(first, pops.iter().enumerate().map(|(k, p)| C64::from_polar(p.sqrt(), 0.3 * k as f64)).collect())
}

#[test]
fn decoupled_frequencies_follow_the_actions() {
    let sys = LatticeSystem::new(params(), chi(), -2..=2, Clock::Rescaled).unwrap().with_coupling_scale(0.0);
    let rp = sys.rescaled_params().unwrap();
    let pops = [0.1, 0.3, 0.15, 0.25, 0.2];
    let traj = integrate(&unequal_state(-2, &pops), &sys, &sample_times(819.1, 8192), 1e-10).unwrap();
    let bin = 2.0 * std::f64::consts::PI / 819.2;
    for ((n, est), i) in mode_frequencies(&traj, &[-2, -1, 0, 1, 2]).unwrap().into_iter().zip(pops) {
        let expected = -(n as f64) * rp.force_rescaled - rp.sigma_g * i;
        assert!((est.omega - expected).abs() < 0.02 * bin, "well {n}: {} vs {expected}", est.omega);
    }
}

#[test]
fn weak_interaction_recovers_the_bloch_ladder() {
    let p = ModelParams::new(5.0, 0.25, 1e-5).unwrap();
    let sys = LatticeSystem::new(p, chi(), -2..=2, Clock::Raw).unwrap();
    let traj = integrate(&unequal_state(-2, &[0.2; 5]), &sys, &sample_times(4095.5, 8192), 1e-10).unwrap();
    let bin = 2.0 * std::f64::consts::PI / 4096.0;
    for (n, est) in mode_frequencies(&traj, &[-2, -1, 0, 1, 2]).unwrap() {
        assert!((est.omega + n as f64 * p.bloch_frequency()).abs() < 0.05 * bin, "well {n}: {}", est.omega);
    }
}

#[test]
fn pulling_slope_matches_the_on_site_coupling() {
    let p = params();
    let chi = chi();
    let sys = LatticeSystem::new(p, chi, -2..=2, Clock::Raw).unwrap().with_coupling_scale(0.01);
    let pops = [0.1, 0.3, 0.15, 0.25, 0.2];
    let traj = integrate(&unequal_state(-2, &pops), &sys, &sample_times(1637.8, 8192), 1e-10).unwrap();
    let freqs = mode_frequencies(&traj, &[-2, -1, 0, 1, 2]).unwrap();
    let samples: Vec<(i32, f64, f64)> = freqs.iter().zip(pops).map(|((n, e), i)| (*n, i, e.omega)).collect();
    let fit = pulling_fit(&samples, p.bloch_frequency()).unwrap();
    let expected = p.pulling_slope(chi.on_site);
    assert!((fit.slope / expected - 1.0).abs() < 0.05, "slope {} vs {expected}", fit.slope);
}
