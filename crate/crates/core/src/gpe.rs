//! Split-step evolution of the normalized Gross-Pitaevskii equation
//! `iψ_t = -ψ_xx/(2m) + (V₀cos2πx + Fx)ψ + g|ψ|²ψ` on the box grid, and its
//! projection onto the Wannier-Stark basis.
//!
//! The kinetic factor uses the symbol `(1 - cos kh)/(m h²)` of the
//! three-point Laplacian the basis was diagonalized with, so an eigenstate of
//! the discretized `H₀` stays stationary up to the splitting error. The grid is treated as
//! periodic; the empty wall margin is the buffer that keeps the periodic
//! image from mattering, and the leak monitor checks that it stays empty.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{LatticeError, ModeState, Preparation};
use crate::ode::C64;
use crate::units::{ModelParams, MASS};
use crate::ws_basis::{potential, Grid, WsBasis};

pub const DEFAULT_DT: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum GpeError {
    #[error("field grid does not match the basis grid")]
    IncompatibleGrid,
    #[error("norm drifted by {drift:e} at t = {time}; try dt = {suggested_dt:e}")]
    StepSize { drift: f64, time: f64, suggested_dt: f64 },
    #[error("splitting error {error:e} still above {tol:e} at dt = {dt:e}")]
    StepTooCoarse { error: f64, tol: f64, dt: f64 },
    #[error("population {population:e} within {wells} wells of the wall at t = {time}; enlarge the box")]
    BoxLeak { population: f64, wells: usize, time: f64 },
    #[error("field is not normalized: norm² = {0}")]
    NotNormalized(f64),
    #[error("invalid settings: {0}")]
    InvalidSettings(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
}

/// Wave function samples on the box grid; `∫|ψ|² = Σ|ψ_j|² h`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    pub grid: Grid,
    pub samples: Vec<C64>,
    pub time: f64,
}

impl Field {
    pub fn new(grid: Grid, samples: Vec<C64>, time: f64) -> Self {
        assert_eq!(grid.len, samples.len(), "sample count does not match grid");
        Field { grid, samples, time }
    }

    pub fn norm_sqr(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.samples.iter_mut().for_each(|z| *z /= n);
        }
    }

    /// `Σ c_n φ_n` over the wells the basis holds.
    pub fn from_modes(basis: &WsBasis, modes: &ModeState) -> Result<Self, GpeError> {
        let mut samples = vec![C64::new(0.0, 0.0); basis.grid.len];
        for n in modes.wells() {
            let c = modes.get(n);
            if c == C64::new(0.0, 0.0) {
                continue;
            }
            let state = basis.state(n).ok_or_else(|| {
                LatticeError::Layout(format!("well {n} is outside the basis {}..={}", basis.first_well(), basis.last_well()))
            })?;
            for (s, &phi) in samples.iter_mut().zip(&state.samples) {
                *s += c * phi;
            }
        }
        Ok(Field { grid: basis.grid, samples, time: modes.time })
    }

    pub fn from_preparation(basis: &WsBasis, prep: &Preparation) -> Result<Self, GpeError> {
        let (lo, hi) = prep.span();
        Field::from_modes(basis, &prep.mode_state(lo, hi)?)
    }

    /// Complex conjugate, which reverses the direction of time.
    pub fn conjugate(&self) -> Self {
        Field { grid: self.grid, samples: self.samples.iter().map(|z| z.conj()).collect(), time: self.time }
    }

    /// Population within `wells` lattice periods of either wall.
    pub fn wall_population(&self, wells: usize) -> f64 {
        let k = (wells * self.grid.points_per_period).min(self.grid.len / 2);
        let len = self.samples.len();
        let edge = self.samples[..k].iter().chain(&self.samples[len - k..]);
        edge.map(|z| z.norm_sqr()).sum::<f64>() * self.grid.spacing
    }

    pub fn distance(&self, other: &Field) -> f64 {
        let d: f64 = self.samples.iter().zip(&other.samples).map(|(a, b)| (a - b).norm_sqr()).sum();
        (d * self.grid.spacing).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GpeSettings {
    pub dt: f64,
    /// Bound on the doubled-step estimate of the local splitting error.
    pub step_tol: f64,
    /// Steps between splitting-error checks.
    pub check_every: usize,
    pub max_halvings: u32,
    pub norm_tol: f64,
    pub leak_wells: usize,
    pub leak_warn: f64,
    pub leak_error: f64,
}

impl Default for GpeSettings {
    fn default() -> Self {
        GpeSettings {
            dt: DEFAULT_DT,
            step_tol: 1e-8,
            check_every: 1000,
            max_halvings: 6,
            norm_tol: 1e-8,
            leak_wells: 2,
            leak_warn: 1e-4,
            leak_error: 1e-2,
        }
    }
}

impl GpeSettings {
    pub fn validate(&self) -> Result<(), GpeError> {
        let bad = |what: &str| Err(GpeError::InvalidSettings(what.to_string()));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt must be positive");
        }
        if !(self.step_tol > 0.0) || !(self.norm_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.check_every == 0 {
            return bad("check_every must be at least 1");
        }
        if !(self.leak_warn <= self.leak_error) {
            return bad("leak_warn must not exceed leak_error");
        }
        Ok(())
    }
}

/// Precomputed propagator pieces for one grid, parameter set and step.
pub struct SplitStep {
    params: ModelParams,
    dt: f64,
    spacing: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// `exp(-i T(k) dt/2) / len`, the inverse-FFT scale folded in.
    half_kinetic: Vec<C64>,
    kinetic: Vec<f64>,
    potential: Vec<f64>,
    scratch: Vec<C64>,
}

impl SplitStep {
    pub fn new(grid: &Grid, params: &ModelParams, dt: f64) -> Self {
        let len = grid.len;
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let kinetic = kinetic_symbol(grid);
        let scale = 1.0 / len as f64;
        let half_kinetic = kinetic.iter().map(|t| C64::from_polar(scale, -0.5 * t * dt)).collect();
        let potential = grid.positions().iter().map(|&x| potential(params, x)).collect();
        let scratch = vec![C64::new(0.0, 0.0); fwd.get_inplace_scratch_len().max(inv.get_inplace_scratch_len())];
        SplitStep { params: *params, dt, spacing: grid.spacing, fwd, inv, half_kinetic, kinetic, potential, scratch }
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn half_kick(&mut self, psi: &mut [C64]) {
        self.fwd.process_with_scratch(psi, &mut self.scratch);
        psi.iter_mut().zip(&self.half_kinetic).for_each(|(z, k)| *z *= k);
        self.inv.process_with_scratch(psi, &mut self.scratch);
    }

    /// One Strang step: half kinetic, full potential and mean field, half kinetic.
    pub fn step(&mut self, psi: &mut [C64]) {
        self.half_kick(psi);
        let (g, dt) = (self.params.g, self.dt);
        for (z, v) in psi.iter_mut().zip(&self.potential) {
            *z *= C64::from_polar(1.0, -dt * (v + g * z.norm_sqr()));
        }
        self.half_kick(psi);
    }

    /// `⟨ψ|T|ψ⟩ + ⟨ψ|V|ψ⟩ + (g/2)∫|ψ|⁴`.
    pub fn energy(&mut self, psi: &[C64]) -> f64 {
        let h = self.spacing;
        let mut buf = psi.to_vec();
        self.fwd.process_with_scratch(&mut buf, &mut self.scratch);
        // Parseval: Σ|ψ_j|² = Σ|ψ̂_k|²/len
        let kinetic: f64 = buf.iter().zip(&self.kinetic).map(|(z, t)| t * z.norm_sqr()).sum::<f64>() / psi.len() as f64 * h;
        let pot: f64 = psi.iter().zip(&self.potential).map(|(z, v)| v * z.norm_sqr()).sum::<f64>() * h;
        let inter: f64 = psi.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() * h * 0.5 * self.params.g;
        kinetic + pot + inter
    }
}

/// Eigenvalues `(1 - cos k h)/(m h²)` of the periodic three-point kinetic operator.
pub fn kinetic_symbol(grid: &Grid) -> Vec<f64> {
    let len = grid.len;
    let h = grid.spacing;
    (0..len)
        .map(|j| {
            let k = 2.0 * PI * j as f64 / (len as f64 * h);
            (1.0 - (k * h).cos()) / (MASS * h * h)
        })
        .collect()
}

/// Doubled-step estimate of the local error at step `dt`: one `2dt` step
/// against two `dt` steps, scaled by `1/(2³ - 2)` for a second-order method.
pub fn splitting_error(field: &Field, params: &ModelParams, dt: f64) -> f64 {
    let mut one = field.samples.clone();
    SplitStep::new(&field.grid, params, 2.0 * dt).step(&mut one);
    let mut two = field.samples.clone();
    let mut s = SplitStep::new(&field.grid, params, dt);
    s.step(&mut two);
    s.step(&mut two);
    let d: f64 = one.iter().zip(&two).map(|(a, b)| (a - b).norm_sqr()).sum();
    (d * field.grid.spacing).sqrt() / 6.0
}

/// Largest `dt ≤ requested` (by halving) that passes the splitting check.
pub fn checked_dt(field: &Field, params: &ModelParams, settings: &GpeSettings) -> Result<f64, GpeError> {
    let mut dt = settings.dt;
    for _ in 0..=settings.max_halvings {
        let err = splitting_error(field, params, dt);
        if err <= settings.step_tol {
            return Ok(dt);
        }
        log::warn!("splitting error {err:.2e} above {:.2e} at dt = {dt:e}; halving", settings.step_tol);
        dt *= 0.5;
    }
    let error = splitting_error(field, params, dt);
    Err(GpeError::StepTooCoarse { error, tol: settings.step_tol, dt })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GpeDiagnostics {
    pub norm_drift: f64,
    pub energy_drift: f64,
    pub wall_population: f64,
    pub dt_used: f64,
    pub halvings: u32,
}

/// Runs split-step evolution with step control and box monitoring.
pub struct GpeEvolver<'a> {
    params: ModelParams,
    settings: GpeSettings,
    basis: Option<&'a WsBasis>,
}

impl<'a> GpeEvolver<'a> {
    pub fn new(params: ModelParams, settings: GpeSettings) -> Result<Self, GpeError> {
        settings.validate()?;
        Ok(GpeEvolver { params, settings, basis: None })
    }

    /// Enables projections at sample times.
    pub fn with_basis(mut self, basis: &'a WsBasis) -> Self {
        self.basis = Some(basis);
        self
    }

    /// Advance to each of `times` (ascending, `≥ field.time`), calling
    /// `observe` on the field at every sample.
    pub fn run(&self, field: &mut Field, times: &[f64], mut observe: impl FnMut(&Field)) -> Result<GpeDiagnostics, GpeError> {
        let norm0 = field.norm_sqr();
        if (norm0 - 1.0).abs() > 1e-6 {
            return Err(GpeError::NotNormalized(norm0));
        }
        let s = &self.settings;
        let mut dt = checked_dt(field, &self.params, s)?;
        let mut halvings = (s.dt / dt).log2().round() as u32;
        let mut stepper = SplitStep::new(&field.grid, &self.params, dt);
        let e0 = stepper.energy(&field.samples);
        let mut diag = GpeDiagnostics { dt_used: dt, halvings, ..Default::default() };
        let mut warned = false;
        let mut since_check = 0usize;

        let mut monitor = |field: &Field, stepper: &mut SplitStep, diag: &mut GpeDiagnostics| -> Result<(), GpeError> {
            let drift = (field.norm_sqr() - norm0).abs();
            diag.norm_drift = diag.norm_drift.max(drift);
            if drift > s.norm_tol {
                return Err(GpeError::StepSize { drift, time: field.time, suggested_dt: 0.5 * stepper.dt() });
            }
            let e = stepper.energy(&field.samples);
            diag.energy_drift = diag.energy_drift.max((e - e0).abs() / e0.abs().max(1e-300));
            let wall = field.wall_population(s.leak_wells);
            diag.wall_population = diag.wall_population.max(wall);
            if wall > s.leak_error {
                return Err(GpeError::BoxLeak { population: wall, wells: s.leak_wells, time: field.time });
            }
            if wall > s.leak_warn && !warned {
                log::warn!("population {wall:.2e} within {} wells of the wall at t = {}", s.leak_wells, field.time);
                warned = true;
            }
            Ok(())
        };

        for &target in times {
            if target < field.time - 1e-12 {
                return Err(GpeError::InvalidSettings(format!("sample time {target} precedes field time {}", field.time)));
            }
            while field.time < target - 1e-12 {
                let remaining = target - field.time;
                if remaining < dt * (1.0 - 1e-9) {
                    // short final step to land on the sample
                    SplitStep::new(&field.grid, &self.params, remaining).step(&mut field.samples);
                    field.time = target;
                } else {
                    stepper.step(&mut field.samples);
                    field.time += dt;
                    if (field.time - target).abs() < 1e-9 * dt {
                        field.time = target;
                    }
                }
                since_check += 1;
                if since_check >= s.check_every {
                    since_check = 0;
                    let err = splitting_error(field, &self.params, dt);
                    if err > s.step_tol {
                        if halvings >= s.max_halvings {
                            return Err(GpeError::StepTooCoarse { error: err, tol: s.step_tol, dt });
                        }
                        dt *= 0.5;
                        halvings += 1;
                        log::warn!("splitting error {err:.2e} at t = {}; dt halved to {dt:e}", field.time);
                        stepper = SplitStep::new(&field.grid, &self.params, dt);
                        diag.dt_used = dt;
                        diag.halvings = halvings;
                    }
                }
            }
            monitor(field, &mut stepper, &mut diag)?;
            observe(field);
        }
        Ok(diag)
    }
}

/// `field` advanced by `steps·dt`, with the default checks.
pub fn evolve_gpe(field: &Field, params: &ModelParams, dt: f64, steps: usize) -> Result<Field, GpeError> {
    let settings = GpeSettings { dt, ..GpeSettings::default() };
    let mut out = field.clone();
    let end = field.time + dt * steps as f64;
    GpeEvolver::new(*params, settings)?.run(&mut out, &[end], |_| {})?;
    Ok(out)
}

/// `c_n = ⟨φ_n|ψ⟩` for every well in the basis.
pub fn project_to_ws(field: &Field, basis: &WsBasis) -> Result<ModeState, GpeError> {
    if !field.grid.compatible(&basis.grid) {
        return Err(GpeError::IncompatibleGrid);
    }
    let h = field.grid.spacing;
    let amplitudes = basis.states.iter().map(|s| s.samples.iter().zip(&field.samples).map(|(phi, z)| z * *phi).sum::<C64>() * h).collect();
    let mut modes = ModeState::new(basis.first_well(), amplitudes);
    modes.time = field.time;
    Ok(modes)
}

/// Weight of the field inside the lowest-band span, `Σ_n |c_n|²`.
pub fn completeness(field: &Field, basis: &WsBasis) -> Result<f64, GpeError> {
    Ok(project_to_ws(field, basis)?.norm_sqr())
}

/// One GPE sample: projected populations on a well window plus completeness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpeSample {
    pub time: f64,
    pub modes: ModeState,
    pub completeness: f64,
}

/// Evolve and project at each sample time.
pub fn run_projected(
    field: &Field,
    basis: &WsBasis,
    settings: &GpeSettings,
    times: &[f64],
) -> Result<(Vec<GpeSample>, GpeDiagnostics), GpeError> {
    if !field.grid.compatible(&basis.grid) {
        return Err(GpeError::IncompatibleGrid);
    }
    let mut f = field.clone();
    let mut samples = Vec::with_capacity(times.len());
    let mut failure = None;
    let diag = GpeEvolver::new(basis.params, *settings)?.with_basis(basis).run(&mut f, times, |f| match project_to_ws(f, basis) {
        Ok(modes) => {
            let completeness = modes.norm_sqr();
            samples.push(GpeSample { time: f.time, modes, completeness });
        }
        Err(e) => failure = Some(e),
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((samples, diag))
}
