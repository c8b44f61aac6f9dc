//! Largest Lyapunov exponent by two nearby trajectories with periodic
//! renormalization of their separation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::section::LaunchPlane;
use super::AnalysisError;
use crate::lattice::{LatticeSystem, ModeState};
use crate::ode::{Integrator, Method, Solver, Tolerance, C64};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LyapunovSettings {
    pub horizon: f64,
    /// Time between renormalizations.
    pub interval: f64,
    /// Separation restored after each renormalization.
    pub separation: f64,
    pub tol: f64,
    pub method: Method,
    pub seed: u64,
    /// `|λ|` below this is read as zero.
    pub regular_threshold: f64,
    /// Converged `λ` at or above this is read as chaos.
    pub chaotic_threshold: f64,
    /// Largest relative spread of the running estimate over the second half
    /// that still counts as converged.
    pub max_spread: f64,
}

impl Default for LyapunovSettings {
    fn default() -> Self {
        LyapunovSettings {
            horizon: 20_000.0,
            interval: 1.0,
            separation: 1e-8,
            tol: 1e-10,
            method: Method::Dop853,
            seed: 1,
            regular_threshold: 1e-3,
            chaotic_threshold: 1e-2,
            max_spread: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Regular,
    Chaotic,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LyapunovResult {
    pub exponent: f64,
    /// Running estimate `(t, λ(t))` after every renormalization.
    pub trace: Vec<(f64, f64)>,
    /// `(max - min)/|λ|` of the running estimate over the second half.
    pub spread: f64,
    pub converged: bool,
    pub classification: Classification,
}

/// Random unit direction orthogonal to both the norm-changing direction `c`
/// and the gauge direction `ic`, so only the reduced dynamics is probed.
fn perturbation(c: &[C64], rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut d: Vec<C64> = c.iter().map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let cc: f64 = c.iter().map(|z| z.norm_sqr()).sum();
    if cc > 0.0 {
        // remove the complex projection onto c, which covers both directions
        let proj: C64 = c.iter().zip(&d).map(|(a, b)| a.conj() * b).sum::<C64>() / cc;
        d.iter_mut().zip(c).for_each(|(x, a)| *x -= proj * a);
    }
    let n: f64 = d.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    d.iter_mut().for_each(|z| *z /= n);
    d
}

fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt()
}

/// Exponent per unit of the system's clock.
pub fn lyapunov_max(c0: &ModeState, system: &LatticeSystem, settings: &LyapunovSettings) -> Result<LyapunovResult, AnalysisError> {
    let s = settings;
    if !(s.interval > 0.0 && s.horizon >= 100.0 * s.interval) {
        return Err(AnalysisError::InvalidSpec(format!(
            "horizon {} must cover at least 100 renormalization intervals of {}",
            s.horizon, s.interval
        )));
    }
    if !(s.separation > 0.0 && s.tol > 0.0) {
        return Err(AnalysisError::InvalidSpec("separation and tolerance must be positive".into()));
    }
    system.check_layout(c0)?;
    let sys = *system;
    let rhs = move |_t: f64, y: &[C64], dy: &mut [C64]| sys.eval(y, dy);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let d = perturbation(&c0.amplitudes, &mut rng);
    let shadow0: Vec<C64> = c0.amplitudes.iter().zip(&d).map(|(a, b)| a + b * s.separation).collect();

    let tol = Tolerance::uniform(s.tol);
    let mut main = Solver::new(s.method, rhs, c0.time, c0.amplitudes.clone(), tol);
    let mut shadow = Solver::new(s.method, rhs, c0.time, shadow0, tol);
    let intervals = (s.horizon / s.interval).round() as usize;
    let mut log_sum = 0.0;
    let mut trace = Vec::with_capacity(intervals);
    let mut renorm = vec![C64::new(0.0, 0.0); c0.amplitudes.len()];
    for k in 1..=intervals {
        let t = c0.time + k as f64 * s.interval;
        main.advance_to(t)?;
        shadow.advance_to(t)?;
        let dist = distance(main.y(), shadow.y());
        log_sum += (dist / s.separation).ln();
        let scale = s.separation / dist;
        for ((r, a), b) in renorm.iter_mut().zip(main.y()).zip(shadow.y()) {
            *r = a + (b - a) * scale;
        }
        shadow.reset_state(t, &renorm);
        trace.push((t - c0.time, log_sum / (t - c0.time)));
    }

    let exponent = trace.last().map_or(0.0, |p| p.1);
    let half = &trace[trace.len() / 2..];
    let (lo, hi) = half.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p.1), h.max(p.1)));
    let spread = (hi - lo) / exponent.abs().max(f64::MIN_POSITIVE);
    let converged = spread <= s.max_spread;
    let classification = if exponent.abs() < s.regular_threshold {
        Classification::Regular
    } else if converged && exponent >= s.chaotic_threshold {
        Classification::Chaotic
    } else {
        Classification::Inconclusive
    };
    if classification == Classification::Inconclusive {
        log::info!("Lyapunov estimate {exponent:.3e} inconclusive (spread {spread:.2})");
    }
    Ok(LyapunovResult { exponent, trace, spread, converged, classification })
}

/// Exponents for every launch on `plane`, computed in parallel and
/// returned in launch order.
pub fn lyapunov_map(
    plane: &LaunchPlane,
    launches: &[f64],
    system: &LatticeSystem,
    settings: &LyapunovSettings,
) -> Result<Vec<(f64, LyapunovResult)>, AnalysisError> {
    launches.par_iter().map(|&x| Ok((x, lyapunov_max(&plane.launch(x)?, system, settings)?))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Clock;
    use crate::units::ModelParams;
    use crate::ws_basis::NnChi;

    #[test]
    fn perturbation_is_tangent_to_the_reduced_space() {
        let c = vec![C64::new(0.3, 0.1), C64::new(-0.5, 0.7), C64::new(0.2, -0.3)];
        let d = perturbation(&c, &mut ChaCha8Rng::seed_from_u64(3));
        let dot: C64 = c.iter().zip(&d).map(|(a, b)| a.conj() * b).sum();
        assert!(dot.norm() < 1e-14);
        assert!((distance(&d, &[C64::new(0.0, 0.0); 3]) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn decoupled_flow_has_no_exponential_growth() {
        let chi = NnChi { on_site: 1.99, forward: 0.0, backward: 0.0 };
        let params = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        let sys = LatticeSystem::new(params, chi, -1..=1, Clock::Rescaled).unwrap();
        let c0 = ModeState::new(-1, [0.1f64, 0.3, 0.6].iter().map(|a| C64::new(a.sqrt(), 0.0)).collect());
        let r = lyapunov_max(&c0, &sys, &LyapunovSettings::default()).unwrap();
        assert!(r.exponent.abs() < 1e-3, "{}", r.exponent);
        assert_eq!(r.classification, Classification::Regular);
    }

    #[test]
    fn short_horizon_is_rejected() {
        let chi = NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 };
        let sys = LatticeSystem::new(ModelParams::new(5.0, 0.25, 0.25).unwrap(), chi, -1..=1, Clock::Rescaled).unwrap();
        let c0 = ModeState::new(-1, vec![C64::new(1.0, 0.0); 3]);
        let s = LyapunovSettings { horizon: 50.0, ..Default::default() };
        assert!(lyapunov_max(&c0, &sys, &s).is_err());
    }
}
