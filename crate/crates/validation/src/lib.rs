//! Acceptance criteria for the workspace at the reference parameters
//! V₀ = 5, F = 0.25, g = 0.25. Each check returns its measured values, as
//! `Ok` when the criterion holds and `Err` otherwise.

use std::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wschaos::analysis::{
    find_island_family, island_center, lyapunov_map, mode_frequencies, poincare_section, pulling_fit, resonance_locus, Classification,
    IslandSearch, LaunchPlane, Locus, LyapunovSettings, SectionSpec,
};
use wschaos::gpe::{run_projected, Field, GpeSettings};
use wschaos::lattice::{
    hamiltonian, integrable_solution, integrate, integrate_with, rhs_action_angle, rhs_full, rhs_truncated, sample_times, to_action_angle,
    wrap_angle, Clock, Form, IntegrationSettings, LatticeSystem, ModeState, Preparation,
};
use wschaos::units::ModelParams;
use wschaos::ws_basis::{chi_tensor, discretized_hamiltonian, solve_ws_states, BoundingBox, NnChi, WsBasis};

pub type Check = Result<String, String>;

pub struct Fixture {
    pub params: ModelParams,
    pub basis: WsBasis,
    pub chi: NnChi,
}

impl Default for Fixture {
    fn default() -> Self {
        Self::new()
    }
}

impl Fixture {
    pub fn new() -> Self {
        let params = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        let basis = solve_ws_states(&params, &BoundingBox::default()).unwrap();
        let chi = chi_tensor(&basis, 1).unwrap().nn();
        Fixture { params, basis, chi }
    }

    pub fn three_modes(&self) -> LatticeSystem {
        LatticeSystem::new(self.params, self.chi, -1..=1, Clock::Rescaled).unwrap()
    }
}

fn verdict(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Central-well peak with a quadratic phase profile, far from stationary.
pub fn peaked() -> Preparation {
    let wells: Vec<i32> = (-6..=5).collect();
    let amplitudes = wells.iter().map(|&n| (-(n * n) as f64 / 4.0).exp()).collect();
    let phases = wells.iter().map(|&n| 0.7 * (n * n) as f64).collect();
    Preparation { wells, amplitudes, phases }
}

fn random_state(rng: &mut ChaCha8Rng, first: i32, len: usize, floor: f64) -> ModeState {
    let amps: Vec<C64> = (0..len).map(|_| C64::from_polar(floor + rng.gen::<f64>(), 2.0 * PI * rng.gen::<f64>())).collect();
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    ModeState::new(first, amps.into_iter().map(|z| z / norm).collect())
}

pub struct CrossRun {
    pub rms: f64,
    pub completeness: f64,
    pub norm_drift: f64,
}

/// Both solvers from one preparation; RMS population gap on wells -1..=1.
pub fn cross_solver(basis: &WsBasis, prep: &Preparation, t_end: f64, samples: usize) -> Result<CrossRun, String> {
    let field = Field::from_preparation(basis, prep).map_err(err)?;
    let times = sample_times(t_end, samples);
    let (gpe, diag) = run_projected(&field, basis, &GpeSettings::default(), &times).map_err(err)?;
    let chi = chi_tensor(basis, 1).map_err(err)?.nn();
    let sys = LatticeSystem::for_preparation(basis.params, chi, prep, Clock::Raw).map_err(err)?;
    let start = prep.mode_state(sys.first_well, sys.last_well).map_err(err)?;
    let model = integrate(&start, &sys, &times, 1e-10).map_err(err)?;
    let mut sq = 0.0;
    for (k, s) in gpe.iter().enumerate() {
        let m = model.mode(k);
        sq += (-1..=1).map(|n| (s.modes.population(n) - m.population(n)).powi(2)).sum::<f64>();
    }
    Ok(CrossRun {
        rms: (sq / (3 * gpe.len()) as f64).sqrt(),
        completeness: gpe.iter().map(|s| s.completeness).fold(1.0, f64::min),
        norm_drift: diag.norm_drift,
    })
}

pub fn chi_golden(fx: &Fixture) -> Check {
    let c = fx.chi;
    let ok = (c.on_site - 1.99).abs() <= 0.02 && (c.forward + 0.16).abs() <= 0.02 && (c.backward - 0.15).abs() <= 0.02;
    verdict(
        ok,
        format!("chi_000 = {:.6}, chi_001 = {:.6}, chi_00-1 = {:.6} (targets 1.99, -0.16, 0.15 +- 0.02)", c.on_site, c.forward, c.backward),
    )
}

pub fn ws_ladder(fx: &Fixture) -> Check {
    let b = &fx.basis;
    let f = fx.params.force;
    // spacings read straight off the discretized spectrum, one eigenvalue per rung window
    let (_, h) = discretized_hamiltonian(&fx.params, &BoundingBox::default());
    let e0 = b.state(0).ok_or("no state in well 0")?.energy;
    let mut ladder = 0.0f64;
    for n in -5..5 {
        let rung = |m: i32| h.eigenvalues_in(e0 + f * m as f64 - 4e-3, e0 + f * m as f64 + 4e-3);
        let (lo, hi) = (rung(n), rung(n + 1));
        if lo.len() != 1 || hi.len() != 1 {
            return Err(format!("rung {n}: {} and {} eigenvalues in window", lo.len(), hi.len()));
        }
        ladder = ladder.max(((hi[0] - lo[0]) - f).abs() / f);
    }
    ladder = ladder.max(b.ladder_deviation(-5..=5));
    let shift = b.translation_deviation(0).ok_or("no translation pair at 0")?;
    verdict(
        ladder < 1e-3 && shift < 1e-4,
        format!(
            "{} wells, max relative ladder deviation {ladder:.2e} (< 1e-3), max|phi_1(x) - phi_0(x-1)| = {shift:.2e} (< 1e-4)",
            BoundingBox::default().well_count
        ),
    )
}

pub fn integrable_limit(fx: &Fixture) -> Check {
    let sys = fx.three_modes().with_coupling_scale(0.0);
    let rp = sys.rescaled_params().map_err(err)?;
    let plane = LaunchPlane::default();
    let times = sample_times(100.0, 201);
    let (mut di, mut dth) = (0.0f64, 0.0f64);
    for x in [0.05, 0.3, 0.55, 0.8] {
        let c0 = plane.launch(x).map_err(err)?;
        let aa0 = to_action_angle(&c0);
        let traj = integrate(&c0, &sys, &times, 1e-12).map_err(err)?;
        for (k, &t) in times.iter().enumerate() {
            let got = to_action_angle(&traj.mode(k));
            let exact = integrable_solution(&aa0, &rp, t);
            for j in 0..3 {
                di = di.max((got.actions[j] - exact.actions[j]).abs());
                dth = dth.max(wrap_angle(got.angles[j] - exact.angles[j]).abs());
            }
        }
    }
    verdict(di < 1e-8 && dth < 1e-6, format!("epsilon = 0 over t = 100: action drift {di:.2e} (< 1e-8), angle error {dth:.2e} (< 1e-6)"))
}

pub fn conservation(fx: &Fixture) -> Check {
    let sys = fx.three_modes();
    let rp = sys.rescaled_params().map_err(err)?;
    let c0 = LaunchPlane::default().launch(0.5).map_err(err)?;
    let times = sample_times(1000.0, 1001);
    let settings = IntegrationSettings::new(1e-10).with_form(Form::ActionAngle);
    let traj = integrate_with(&c0, &sys, &times, &settings).map_err(err)?;
    let d = traj.diagnostics;
    let h0 = hamiltonian(&to_action_angle(&c0), &rp);
    let h1 = hamiltonian(&to_action_angle(&traj.mode(times.len() - 1)), &rp);
    let h_end = ((h1 - h0) / h0).abs();
    let amp = integrate(&c0, &sys, &times, 1e-10).map_err(err)?.diagnostics;

    let field = Field::from_preparation(&fx.basis, &peaked()).map_err(err)?;
    let (_, gd) = run_projected(&field, &fx.basis, &GpeSettings::default(), &sample_times(50.0, 11)).map_err(err)?;
    verdict(
        d.norm_drift < 1e-9 && d.energy_drift < 1e-6 && h_end < 1e-6 && gd.norm_drift < 1e-8,
        format!(
            "action-angle form: sum I drift {:.2e} (< 1e-9), H drift {:.2e} (< 1e-6); amplitude form: {:.2e}, {:.2e}; GPE norm drift {:.2e} (< 1e-8)",
            d.norm_drift, d.energy_drift, amp.norm_drift, amp.energy_drift, gd.norm_drift
        ),
    )
}

pub fn hamiltonian_structure(fx: &Fixture) -> Check {
    let rp = fx.three_modes().rescaled_params().map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for k in 0..100 {
        let len = 3 + k % 3;
        let aa = to_action_angle(&random_state(&mut rng, -((len / 2) as i32), len, 0.2));
        let (di, dth) = rhs_action_angle(&aa, &rp).map_err(err)?;
        for j in 0..len {
            let at = |da: f64, dt: f64| {
                let mut s = aa.clone();
                s.actions[j] += da;
                s.angles[j] += dt;
                hamiltonian(&s, &rp)
            };
            let dh_dtheta = (at(0.0, h) - at(0.0, -h)) / (2.0 * h);
            let dh_di = (at(h, 0.0) - at(-h, 0.0)) / (2.0 * h);
            worst = worst.max((di[j] - dh_dtheta).abs()).max((dth[j] + dh_di).abs());
        }
    }
    verdict(worst < 1e-6, format!("100 random states, max |rhs - FD gradient| = {worst:.2e} (< 1e-6)"))
}

pub fn cross_solver_check(fx: &Fixture, uniform: &CrossRun, strong: &CrossRun) -> Check {
    verdict(
        uniform.rms < 0.05,
        format!(
            "twelve-well preparation over 3 Bloch periods: RMS {:.2e} (< 0.05); peaked preparation: RMS {:.2e}; GPE norm drift {:.2e}; t_B = {:.4}",
            uniform.rms,
            strong.rms,
            uniform.norm_drift.max(strong.norm_drift),
            fx.params.bloch_period()
        ),
    )
}

pub fn section_structure(fx: &Fixture) -> Check {
    let sys = fx.three_modes();
    let spec = SectionSpec::default();
    let rp = sys.rescaled_params().map_err(err)?;
    let launches: Vec<f64> = (0..50).map(|k| 0.02 + 0.86 * k as f64 / 49.0).collect();
    let section = poincare_section(&spec, &launches, &sys, spec.max_crossings).map_err(err)?;
    let lyap = lyapunov_map(&spec.plane, &launches, &sys, &LyapunovSettings::default()).map_err(err)?;

    // (a) low-I₀ zone, below the first resonance chains
    let low: Vec<usize> = (0..launches.len()).filter(|&k| launches[k] <= 0.2).collect();
    let low_regular = low.iter().all(|&k| lyap[k].1.classification == Classification::Regular);
    let low_spread = low.iter().map(|&k| section.orbits[k].spread()).fold(0.0, f64::max);
    let low_spread_min = low.iter().map(|&k| section.orbits[k].spread()).fold(f64::INFINITY, f64::min);
    let a = low_regular && low_spread < 1e-2;

    // (b) chaotic sea on the low side of the 1:1 island
    let sea: Vec<usize> = (0..launches.len()).filter(|&k| (0.45..=0.6).contains(&launches[k])).collect();
    let max_lambda = sea.iter().map(|&k| lyap[k].1.exponent).fold(0.0, f64::max);
    let chaotic = sea.iter().filter(|&&k| lyap[k].1.classification == Classification::Chaotic && lyap[k].1.exponent > 1e-2).count();
    let b = chaotic > 0;

    // (c) closed form: ω₀ = ω₁ ⇔ I₀ - I₁ = F' with I₁ = 0.9 - I₀
    let predicted = (0.9 + rp.force_rescaled) / 2.0;
    let Locus::At(locus) = resonance_locus(1, 1, 0, 1, &rp, &spec.plane).map_err(err)? else {
        return Err("no 1:1 locus".into());
    };
    let dense = SectionSpec { max_crossings: 200, ..spec.clone() };
    let center = island_center(&dense, &sys, (0.55, 0.85), 31).map_err(err)?.ok_or("no island center")?;
    let c = (locus.scanned - predicted).abs() < 1e-9 && (center.launch - predicted).abs() <= 0.05;

    // (d) 1/3 and 1/5 chains
    let search = IslandSearch { coarse: 17, ..Default::default() };
    let mut d = true;
    let mut chains = Vec::new();
    for (q, range) in [(3u32, (0.39, 0.43)), (5, (0.36, 0.40))] {
        let fam = find_island_family(&spec, &sys, 1, q, range, &search).map_err(err)?;
        let locked = fam.members.iter().all(|m| m.clusters == q as usize && (m.rotation - 1.0 / q as f64).abs() < 1e-3);
        d &= fam.is_found() && locked;
        chains.push(match fam.extent() {
            Some((lo, hi)) => format!("1/{q} at I0 {lo:.4}..{hi:.4} ({} orbits)", fam.members.len()),
            None => format!("1/{q} not found"),
        });
    }

    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    verdict(
        a && b && c && d,
        format!(
            "(a) {}: {} low-I0 orbits, all regular = {low_regular}, I0 spread {low_spread_min:.3}..{low_spread:.3} (< 1e-2); \
             (b) {}: {chaotic} of {} sea orbits with lambda > 1e-2, max {max_lambda:.3}; \
             (c) {}: island center {:.4} vs predicted {predicted:.4}; (d) {}: {}",
            mark(a),
            low.len(),
            mark(b),
            sea.len(),
            mark(c),
            center.launch,
            mark(d),
            chains.join(", ")
        ),
    )
}

pub fn frequency_pulling(fx: &Fixture) -> Check {
    let p = fx.params;
    let sys = LatticeSystem::new(p, fx.chi, -2..=2, Clock::Raw).map_err(err)?.with_coupling_scale(0.01);
    let pops: [f64; 5] = [0.1, 0.3, 0.15, 0.25, 0.2];
    let c0 = ModeState::new(-2, pops.iter().enumerate().map(|(k, i)| C64::from_polar(i.sqrt(), 0.3 * k as f64)).collect());
    let traj = integrate(&c0, &sys, &sample_times(1637.8, 8192), 1e-10).map_err(err)?;
    let freqs = mode_frequencies(&traj, &[-2, -1, 0, 1, 2]).map_err(err)?;
    let samples: Vec<(i32, f64, f64)> = freqs.iter().zip(pops).map(|((n, e), i)| (*n, i, e.omega)).collect();
    let fit = pulling_fit(&samples, p.bloch_frequency()).map_err(err)?;
    let expected = p.pulling_slope(fx.chi.on_site);
    let rel = (fit.slope / expected - 1.0).abs();
    verdict(
        rel < 0.05,
        format!("slope {:.5} vs g chi_000 = {expected:.5} (rel. error {rel:.2e}, < 5%), max residual {:.2e}", fit.slope, fit.max_residual),
    )
}

pub fn completeness(fx: &Fixture, weak: &[&CrossRun]) -> Check {
    let strong_params = ModelParams::new(5.0, 0.25, 1.0).map_err(err)?;
    let strong_basis = solve_ws_states(&strong_params, &BoundingBox::default()).map_err(err)?;
    let t = 3.0 * fx.params.bloch_period();
    let mut g1 = f64::INFINITY;
    for prep in [Preparation::twelve_wells(), peaked()] {
        g1 = g1.min(cross_solver(&strong_basis, &prep, t, 76)?.completeness);
    }
    let g025 = weak.iter().map(|r| r.completeness).fold(f64::INFINITY, f64::min);
    verdict(
        g1 >= 0.95 && g025 >= 0.97,
        format!("min completeness over 3 Bloch periods: g = 1 {g1:.4} (>= 0.95), g = 0.25 {g025:.4} (>= 0.97)"),
    )
}

pub fn truncation(fx: &Fixture) -> Check {
    let p = fx.params;
    let full = chi_tensor(&fx.basis, 3).map_err(err)?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut states: Vec<ModeState> = (0..20).map(|_| random_state(&mut rng, -3, 7, 0.2)).collect();
    let plane = LaunchPlane::default();
    for x in [0.1, 0.5, 0.7] {
        states.push(plane.launch(x).map_err(err)?);
    }
    for prep in [Preparation::twelve_wells(), peaked()] {
        states.push(prep.mode_state(-8, 7).map_err(err)?);
    }
    let (mut total, mut interaction) = (0.0f64, 0.0f64);
    for c in &states {
        let sys = LatticeSystem::new(p, full.nn(), c.first_well..=c.first_well + c.amplitudes.len() as i32 - 1, Clock::Raw).map_err(err)?;
        let a = rhs_full(c, &full, &p);
        let b = rhs_truncated(c, &sys).map_err(err)?;
        let norm = |v: &[C64]| v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let diff: Vec<C64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        // the tilt term is common to both; compare against the interaction part alone as well
        let nl: Vec<C64> = b.iter().zip(c.wells()).map(|(z, n)| z + C64::i() * p.force * n as f64 * c.get(n)).collect();
        total = total.max(norm(&diff) / norm(&b));
        interaction = interaction.max(norm(&diff) / norm(&nl));
    }
    verdict(
        total < 0.05 && interaction < 0.05,
        format!(
            "{} states: max |full - nn| / |nn| = {total:.2e}, relative to the interaction term alone {interaction:.2e} (< 5%)",
            states.len()
        ),
    )
}

/// Runs every criterion in order: `(number, name, outcome)`.
pub fn run_all() -> Vec<(usize, &'static str, Check)> {
    let fx = Fixture::new();
    let t_b3 = 3.0 * fx.params.bloch_period();
    let uniform = cross_solver(&fx.basis, &Preparation::twelve_wells(), t_b3, 76);
    let strong = cross_solver(&fx.basis, &peaked(), t_b3, 76);

    let mut results: Vec<(usize, &'static str, Check)> = vec![
        (1, "chi golden values", chi_golden(&fx)),
        (2, "Wannier-Stark ladder", ws_ladder(&fx)),
        (3, "integrable limit", integrable_limit(&fx)),
        (4, "conservation", conservation(&fx)),
        (5, "Hamiltonian structure", hamiltonian_structure(&fx)),
    ];
    let pair = match (&uniform, &strong) {
        (Ok(u), Ok(s)) => Ok((u, s)),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    };
    results.push((6, "GPE vs mode model", pair.clone().and_then(|(u, s)| cross_solver_check(&fx, u, s))));
    results.push((7, "section structure", section_structure(&fx)));
    results.push((8, "frequency pulling", frequency_pulling(&fx)));
    results.push((9, "completeness", pair.and_then(|(u, s)| completeness(&fx, &[u, s]))));
    results.push((10, "truncation validity", truncation(&fx)));

    results
}
