//! Surfaces of section of the mode model.
//!
//! An orbit is integrated in amplitude form; every step is scanned for an
//! upward zero of `Im(c_a c*_b e^{-iφ})`, which marks `θ_a - θ_b` passing
//! `φ`. The crossing is then placed by re-integrating the last step with
//! that quantity as the independent variable (Hénon's trick), so the
//! recorded state sits on the plane to integration tolerance.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::lattice::{LatticeSystem, ModeState, I_FLOOR};
use crate::ode::{Integrator, Method, Solver, Tolerance, C64};
use crate::units::RescaledParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    /// `I_n`.
    Action(i32),
    /// `θ_a - θ_b`, wrapped to `(-π, π]`.
    AngleDiff(i32, i32),
}

fn amp(c: &[C64], first: i32, well: i32) -> C64 {
    let i = well - first;
    if i < 0 {
        return C64::new(0.0, 0.0);
    }
    c.get(i as usize).copied().unwrap_or_default()
}

impl Observable {
    pub fn eval(&self, first: i32, c: &[C64]) -> f64 {
        match *self {
            Observable::Action(n) => amp(c, first, n).norm_sqr(),
            Observable::AngleDiff(a, b) => (amp(c, first, a) * amp(c, first, b).conj()).arg(),
        }
    }

    fn wells(&self) -> Vec<i32> {
        match *self {
            Observable::Action(n) => vec![n],
            Observable::AngleDiff(a, b) => vec![a, b],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    #[default]
    Positive,
    Negative,
}

/// Records a crossing whenever `θ_a - θ_b` passes `phase` (mod 2π) in
/// `direction`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Trigger {
    pub a: i32,
    pub b: i32,
    pub phase: f64,
    pub direction: Direction,
}

impl Default for Trigger {
    fn default() -> Self {
        Trigger { a: -1, b: 0, phase: 0.0, direction: Direction::Positive }
    }
}

impl Trigger {
    fn rotated(&self, first: i32, c: &[C64]) -> C64 {
        amp(c, first, self.a) * amp(c, first, self.b).conj() * C64::from_polar(1.0, -self.phase)
    }

    fn sign(&self) -> f64 {
        match self.direction {
            Direction::Positive => 1.0,
            Direction::Negative => -1.0,
        }
    }

    /// Smooth switching function; rises through zero at a crossing.
    pub fn value(&self, first: i32, c: &[C64]) -> f64 {
        self.sign() * self.rotated(first, c).im
    }

    fn rate(&self, first: i32, c: &[C64], dc: &[C64]) -> f64 {
        let rot = C64::from_polar(1.0, -self.phase);
        let (ca, cb) = (amp(c, first, self.a), amp(c, first, self.b));
        let (da, db) = (amp(dc, first, self.a), amp(dc, first, self.b));
        self.sign() * ((da * cb.conj() + ca * db.conj()) * rot).im
    }

    /// Distinguishes `θ_a - θ_b = φ` from the other zero at `φ + π`.
    fn aligned(&self, first: i32, c: &[C64]) -> bool {
        self.rotated(first, c).re > 0.0
    }

    /// Wrapped angular distance from the plane.
    pub fn residual(&self, first: i32, c: &[C64]) -> f64 {
        self.rotated(first, c).arg().abs()
    }
}

/// One-parameter family of launch states: `I[scanned] = x`, fixed actions
/// elsewhere, and `I[balance]` taking up the rest of `total`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LaunchPlane {
    pub first_well: i32,
    pub last_well: i32,
    pub scanned: i32,
    pub balance: i32,
    #[serde(default)]
    pub fixed_actions: Vec<(i32, f64)>,
    /// Angles not listed are zero.
    #[serde(default)]
    pub angles: Vec<(i32, f64)>,
    pub total: f64,
}

impl Default for LaunchPlane {
    fn default() -> Self {
        LaunchPlane { first_well: -1, last_well: 1, scanned: 0, balance: 1, fixed_actions: vec![(-1, 0.1)], angles: Vec::new(), total: 1.0 }
    }
}

impl LaunchPlane {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        let inside = |n: i32| n >= self.first_well && n <= self.last_well;
        let bad = |m: String| Err(AnalysisError::InvalidSpec(m));
        if self.first_well > self.last_well {
            return bad("empty launch well range".into());
        }
        if !inside(self.scanned) || !inside(self.balance) || self.scanned == self.balance {
            return bad("scanned and balance wells must be distinct wells of the plane".into());
        }
        for &(n, a) in &self.fixed_actions {
            if !inside(n) || n == self.scanned || n == self.balance {
                return bad(format!("fixed action on well {n} clashes with the plane"));
            }
            if !(a >= 0.0) {
                return bad(format!("fixed action on well {n} is negative"));
            }
        }
        if !(self.total > 0.0) {
            return bad("total population must be positive".into());
        }
        Ok(())
    }

    /// Upper end of the scanned action, where the balance well empties.
    pub fn span(&self) -> f64 {
        self.total - self.fixed_actions.iter().map(|(_, a)| a).sum::<f64>()
    }

    /// Actions along the line as `p + q·x` for each plane well.
    pub fn affine_actions(&self) -> Vec<(i32, f64, f64)> {
        (self.first_well..=self.last_well)
            .map(|n| {
                if n == self.scanned {
                    (n, 0.0, 1.0)
                } else if n == self.balance {
                    (n, self.span(), -1.0)
                } else {
                    let a = self.fixed_actions.iter().find(|(m, _)| *m == n).map_or(0.0, |(_, a)| *a);
                    (n, a, 0.0)
                }
            })
            .collect()
    }

    pub fn launch(&self, x: f64) -> Result<ModeState, AnalysisError> {
        self.validate()?;
        let rest = self.span() - x;
        if !(x >= 0.0) || !(rest >= -1e-12) {
            return Err(AnalysisError::InvalidLaunch(format!(
                "I[{}] = {x} leaves I[{}] = {rest}; the launch must satisfy 0 ≤ I ≤ {}",
                self.scanned,
                self.balance,
                self.span()
            )));
        }
        let amplitudes = self
            .affine_actions()
            .into_iter()
            .map(|(n, p, q)| {
                let a = (p + q * x).max(0.0);
                let th = self.angles.iter().find(|(m, _)| *m == n).map_or(0.0, |(_, t)| *t);
                C64::from_polar(a.sqrt(), th)
            })
            .collect();
        let state = ModeState::new(self.first_well, amplitudes);
        let norm = state.norm_sqr();
        if (norm - self.total).abs() > 1e-12 {
            return Err(AnalysisError::InvalidLaunch(format!("launch norm {norm} differs from {}", self.total)));
        }
        Ok(state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SectionSpec {
    pub record_axes: [Observable; 2],
    pub trigger: Trigger,
    pub plane: LaunchPlane,
    pub max_crossings: usize,
    pub horizon: f64,
    pub tol: f64,
    pub method: Method,
}

impl Default for SectionSpec {
    fn default() -> Self {
        SectionSpec {
            record_axes: [Observable::Action(0), Observable::AngleDiff(1, 0)],
            trigger: Trigger::default(),
            plane: LaunchPlane::default(),
            max_crossings: 500,
            horizon: 5000.0,
            tol: 1e-10,
            method: Method::Dop853,
        }
    }
}

impl SectionSpec {
    pub fn validate(&self, system: &LatticeSystem) -> Result<(), AnalysisError> {
        self.plane.validate()?;
        if self.plane.first_well != system.first_well || self.plane.last_well != system.last_well {
            return Err(AnalysisError::InvalidSpec(format!(
                "plane wells {}..={} differ from the system's {:?}",
                self.plane.first_well,
                self.plane.last_well,
                system.wells()
            )));
        }
        let mut wells = vec![self.trigger.a, self.trigger.b];
        wells.extend(self.record_axes.iter().flat_map(|o| o.wells()));
        if let Some(n) = wells.iter().find(|&&n| n < system.first_well || n > system.last_well) {
            return Err(AnalysisError::InvalidSpec(format!("well {n} is not part of the system")));
        }
        if self.trigger.a == self.trigger.b {
            return Err(AnalysisError::InvalidSpec("trigger needs two distinct wells".into()));
        }
        if !(self.tol > 0.0) || !(self.horizon > 0.0) {
            return Err(AnalysisError::InvalidSpec("tolerance and horizon must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum OrbitStatus {
    /// Stopped at the requested number of crossings.
    Complete,
    /// Reached the time horizon first.
    Horizon,
    /// No crossing within the horizon.
    Empty,
    /// A well needed by the trigger or the axes emptied out.
    Singular { well: i32, time: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub launch: f64,
    pub points: Vec<[f64; 2]>,
    pub times: Vec<f64>,
    /// Second axis followed continuously, when it is an angle.
    pub unwrapped: Vec<f64>,
    pub max_residual: f64,
    pub status: OrbitStatus,
}

impl Orbit {
    /// Mean advance of the angle axis per crossing in turns, or `None`
    /// without an angle axis or with fewer than two crossings.
    pub fn winding(&self) -> Option<f64> {
        let n = self.unwrapped.len();
        (n >= 2).then(|| (self.unwrapped[n - 1] - self.unwrapped[0]) / (2.0 * PI * (n - 1) as f64))
    }

    /// [`Orbit::winding`] folded into `[0, 1)`.
    pub fn rotation_number(&self) -> Option<f64> {
        self.winding().map(|w| {
            let r = w.rem_euclid(1.0);
            if r >= 1.0 {
                0.0
            } else {
                r
            }
        })
    }

    /// `max - min` of the first axis.
    pub fn spread(&self) -> f64 {
        let (lo, hi) = self.points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p[0]), h.max(p[0])));
        if self.points.is_empty() {
            0.0
        } else {
            hi - lo
        }
    }

    pub fn axis(&self, k: usize) -> Vec<f64> {
        self.points.iter().map(|p| p[k]).collect()
    }
}

/// Number of separate arcs the angles occupy on the circle; 0 when they
/// wrap all the way round. A gap counts as a separation when it exceeds
/// ten median gaps and 0.1 rad.
pub fn cluster_count(angles: &[f64]) -> usize {
    if angles.len() < 2 {
        return angles.len();
    }
    let mut a: Vec<f64> = angles.iter().map(|x| x.rem_euclid(2.0 * PI)).collect();
    a.sort_by(f64::total_cmp);
    let mut gaps: Vec<f64> = a.windows(2).map(|w| w[1] - w[0]).collect();
    gaps.push(a[0] + 2.0 * PI - a[a.len() - 1]);
    let mut sorted = gaps.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let threshold = (10.0 * median).max(0.1);
    gaps.iter().filter(|&&g| g > threshold).count()
}

/// Unwrapped angle samples `(t, θ_a - θ_b)` across one step.
struct Unwrapper {
    a: i32,
    b: i32,
    value: f64,
    samples: Vec<(f64, f64)>,
}

impl Unwrapper {
    fn new(a: i32, b: i32, first: i32, c: &[C64]) -> Self {
        let value = Observable::AngleDiff(a, b).eval(first, c);
        Unwrapper { a, b, value, samples: Vec::new() }
    }

    fn push(&mut self, t: f64, wrapped: f64) {
        self.value += crate::lattice::wrap_angle(wrapped - self.value);
        self.samples.push((t, self.value));
    }

    fn rate(&self, sys: &LatticeSystem, c: &[C64], dc: &mut [C64]) -> f64 {
        let first = sys.first_well;
        sys.eval(c, dc);
        let z = amp(c, first, self.a) * amp(c, first, self.b).conj();
        let dz = amp(dc, first, self.a) * amp(c, first, self.b).conj() + amp(c, first, self.a) * amp(dc, first, self.b).conj();
        if z.norm_sqr() > 0.0 {
            (dz / z).im
        } else {
            0.0
        }
    }

    /// Follow the angle through the last accepted step, on enough dense
    /// output points that each increment stays well below π.
    fn follow<I: Integrator>(&mut self, solver: &I, sys: &LatticeSystem, t0: f64, y0: &[C64], buf: &mut [C64], dbuf: &mut [C64]) {
        let first = sys.first_well;
        let t1 = solver.t();
        let r0 = self.rate(sys, y0, dbuf);
        let r1 = self.rate(sys, solver.y(), dbuf);
        let m = (((t1 - t0) * r0.abs().max(r1.abs())) / (PI / 4.0)).ceil().clamp(2.0, 4096.0) as usize;
        self.samples.clear();
        self.samples.push((t0, self.value));
        for k in 1..m {
            let t = t0 + (t1 - t0) * k as f64 / m as f64;
            solver.dense_output(t, buf);
            self.push(t, Observable::AngleDiff(self.a, self.b).eval(first, buf));
        }
        self.push(t1, Observable::AngleDiff(self.a, self.b).eval(first, solver.y()));
    }

    /// Unwrapped value at `t` inside the last step given its wrapped value.
    fn at(&self, t: f64, wrapped: f64) -> f64 {
        let reference = self.samples.iter().min_by(|x, y| (x.0 - t).abs().total_cmp(&(y.0 - t).abs())).map_or(self.value, |s| s.1);
        reference + crate::lattice::wrap_angle(wrapped - reference)
    }
}

/// Place the crossing inside `[t0, t1]` of the solver's last step.
fn refine<I: Integrator>(
    solver: &I,
    sys: &LatticeSystem,
    trigger: &Trigger,
    method: Method,
    tol: f64,
    t0: f64,
    y0: &[C64],
) -> Result<(f64, Vec<C64>), AnalysisError> {
    let first = sys.first_well;
    let n = y0.len();
    let t1 = solver.t();
    let mut dc = vec![C64::new(0.0, 0.0); n];
    let transversal = |y: &[C64], dc: &mut [C64]| {
        sys.eval(y, dc);
        trigger.rate(first, y, dc) > 0.0
    };
    if transversal(y0, &mut dc) && transversal(solver.y(), &mut dc) {
        let (s, trig) = (*sys, *trigger);
        // state and time as functions of the switching value
        let henon = move |_s: f64, z: &[C64], dz: &mut [C64]| {
            sys_eval_scaled(&s, &trig, z, dz);
        };
        let mut z0 = y0.to_vec();
        z0.push(C64::new(t0, 0.0));
        let s0 = trigger.value(first, y0);
        let mut h = Solver::new(method, henon, s0, z0, Tolerance::uniform(tol));
        if h.advance_to(0.0).is_ok() {
            let z = h.y();
            let tc = z[n].re;
            let span = (t1 - t0).abs();
            if tc.is_finite() && tc >= t0 - 1e-9 * span && tc <= t1 + 1e-9 * span {
                return Ok((tc, z[..n].to_vec()));
            }
        }
        log::debug!("Hénon refinement left the step at t = {t0}; bisecting");
    }
    // bisection on the dense output
    let mut buf = vec![C64::new(0.0, 0.0); n];
    let (mut lo, mut hi) = (t0, t1);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        solver.dense_output(mid, &mut buf);
        if trigger.value(first, &buf) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    solver.dense_output(hi, &mut buf);
    Ok((hi, buf))
}

fn sys_eval_scaled(sys: &LatticeSystem, trigger: &Trigger, z: &[C64], dz: &mut [C64]) {
    let n = z.len() - 1;
    sys.eval(&z[..n], &mut dz[..n]);
    let inv = 1.0 / trigger.rate(sys.first_well, &z[..n], &dz[..n]);
    dz[..n].iter_mut().for_each(|d| *d *= inv);
    dz[n] = C64::new(inv, 0.0);
}

/// Integrate one launch and collect its crossings.
pub fn orbit(spec: &SectionSpec, system: &LatticeSystem, launch: f64) -> Result<Orbit, AnalysisError> {
    spec.validate(system)?;
    let c0 = spec.plane.launch(launch)?;
    system.check_layout(&c0)?;
    let first = system.first_well;
    let sys = *system;
    let rhs = move |_t: f64, y: &[C64], dy: &mut [C64]| sys.eval(y, dy);
    let mut solver = Solver::new(spec.method, rhs, 0.0, c0.amplitudes.clone(), Tolerance::uniform(spec.tol));
    let trigger = spec.trigger;
    let mut tracker = match spec.record_axes[1] {
        Observable::AngleDiff(a, b) => Some(Unwrapper::new(a, b, first, &c0.amplitudes)),
        Observable::Action(_) => None,
    };
    let mut watched: Vec<i32> = vec![trigger.a, trigger.b];
    watched.extend(spec.record_axes.iter().filter(|o| matches!(o, Observable::AngleDiff(..))).flat_map(|o| o.wells()));

    let dim = c0.amplitudes.len();
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut dbuf = vec![C64::new(0.0, 0.0); dim];
    let mut prev_y = c0.amplitudes.clone();
    let mut prev_t = 0.0;
    let mut s_prev = trigger.value(first, &prev_y);
    let mut out =
        Orbit { launch, points: Vec::new(), times: Vec::new(), unwrapped: Vec::new(), max_residual: 0.0, status: OrbitStatus::Empty };

    loop {
        if out.points.len() >= spec.max_crossings {
            out.status = OrbitStatus::Complete;
            break;
        }
        if solver.t() >= spec.horizon {
            out.status = if out.points.is_empty() { OrbitStatus::Empty } else { OrbitStatus::Horizon };
            break;
        }
        solver.step(spec.horizon)?;
        let t1 = solver.t();
        if let Some(tr) = tracker.as_mut() {
            tr.follow(&solver, &sys, prev_t, &prev_y, &mut buf, &mut dbuf);
        }
        if let Some(&well) = watched.iter().find(|&&n| amp(solver.y(), first, n).norm_sqr() <= I_FLOOR) {
            out.status = OrbitStatus::Singular { well, time: t1 };
            break;
        }
        let s1 = trigger.value(first, solver.y());
        if s_prev < 0.0 && s1 >= 0.0 {
            let (tc, yc) = refine(&solver, &sys, &trigger, spec.method, spec.tol, prev_t, &prev_y)?;
            if trigger.aligned(first, &yc) {
                let p = [spec.record_axes[0].eval(first, &yc), spec.record_axes[1].eval(first, &yc)];
                if let Some(tr) = tracker.as_ref() {
                    out.unwrapped.push(tr.at(tc, p[1]));
                }
                out.max_residual = out.max_residual.max(trigger.residual(first, &yc));
                out.points.push(p);
                out.times.push(tc);
            }
        }
        s_prev = s1;
        prev_t = t1;
        prev_y.copy_from_slice(solver.y());
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoincareSection {
    pub spec: SectionSpec,
    pub params: Option<RescaledParams>,
    pub orbits: Vec<Orbit>,
}

/// Orbits for every launch value, computed in parallel and returned in
/// launch order.
pub fn poincare_section(
    spec: &SectionSpec,
    launches: &[f64],
    system: &LatticeSystem,
    crossings_per_orbit: usize,
) -> Result<PoincareSection, AnalysisError> {
    let spec = SectionSpec { max_crossings: crossings_per_orbit, ..spec.clone() };
    spec.validate(system)?;
    let orbits = launches.par_iter().map(|&x| orbit(&spec, system, x)).collect::<Result<Vec<_>, _>>()?;
    Ok(PoincareSection { params: system.rescaled_params().ok(), spec, orbits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Clock;
    use crate::units::ModelParams;
    use crate::ws_basis::NnChi;

    fn system(scale: f64) -> LatticeSystem {
        let chi = NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 };
        let params = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        LatticeSystem::new(params, chi, -1..=1, Clock::Rescaled).unwrap().with_coupling_scale(scale)
    }

    #[test]
    fn launch_respects_the_plane() {
        let plane = LaunchPlane::default();
        let c = plane.launch(0.3).unwrap();
        assert!((c.population(-1) - 0.1).abs() < 1e-15);
        assert!((c.population(0) - 0.3).abs() < 1e-15);
        assert!((c.population(1) - 0.6).abs() < 1e-15);
        assert!(plane.launch(0.95).is_err());
        assert!(plane.launch(-0.1).is_err());
    }

    #[test]
    fn clusters_on_the_circle() {
        let full: Vec<f64> = (0..300).map(|k| k as f64 * 0.618 * 2.0 * PI).collect();
        assert_eq!(cluster_count(&full), 0);
        let three: Vec<f64> = (0..300).map(|k| (k % 3) as f64 * 2.0 * PI / 3.0 + 0.05 * ((k as f64) * 0.37).sin()).collect();
        assert_eq!(cluster_count(&three), 3);
        // one arc straddling the branch cut
        let one: Vec<f64> = (0..100).map(|k| PI - 0.2 + 0.004 * k as f64).collect();
        assert_eq!(cluster_count(&one), 1);
    }

    #[test]
    fn crossings_lie_on_the_plane() {
        let spec = SectionSpec { max_crossings: 40, ..SectionSpec::default() };
        let o = orbit(&spec, &system(1.0), 0.3).unwrap();
        assert_eq!(o.status, OrbitStatus::Complete);
        assert_eq!(o.points.len(), 40);
        assert!(o.max_residual < 1e-6, "{}", o.max_residual);
        assert!(o.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn decoupled_orbits_keep_their_action() {
        // the recorded angle integrates the action error, so it needs a tight tolerance
        let spec = SectionSpec { max_crossings: 50, tol: 1e-13, ..SectionSpec::default() };
        let sys = system(0.0);
        let rp = sys.rescaled_params().unwrap();
        for x in [0.05, 0.3, 0.7] {
            let o = orbit(&spec, &sys, x).unwrap();
            assert!(o.spread() < 1e-8, "{x}: {}", o.spread());
            // crossings every 2π/(ω₋₁ - ω₀); the angle axis turns at ω₁ - ω₀
            let (d_trig, d_rec) = (rp.force_rescaled - (0.1 - x), -rp.force_rescaled - (0.9 - 2.0 * x));
            let expected = d_rec / d_trig;
            assert!((o.winding().unwrap() - expected).abs() < 1e-8, "{x}: {} vs {expected}", o.winding().unwrap());
            let dt = o.times[1] - o.times[0];
            assert!((dt - 2.0 * PI / d_trig).abs() < 1e-7);
        }
    }

    #[test]
    fn negative_direction_reverses_the_trigger() {
        let mut spec = SectionSpec { max_crossings: 5, ..SectionSpec::default() };
        // θ₀ - θ₋₁ falls through zero exactly when θ₋₁ - θ₀ rises through it
        spec.trigger = Trigger { a: 0, b: -1, phase: 0.0, direction: Direction::Negative };
        let a = orbit(&spec, &system(1.0), 0.2).unwrap();
        let b = orbit(&SectionSpec { max_crossings: 5, ..SectionSpec::default() }, &system(1.0), 0.2).unwrap();
        for (x, y) in a.times.iter().zip(&b.times) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn plane_must_match_system() {
        let spec = SectionSpec::default();
        let params = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        let chi = NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 };
        let wide = LatticeSystem::new(params, chi, -2..=2, Clock::Rescaled).unwrap();
        assert!(matches!(orbit(&spec, &wide, 0.3), Err(AnalysisError::InvalidSpec(_))));
    }
}
