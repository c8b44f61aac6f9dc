//! Discrete mode model of the condensate on the Wannier-Stark ladder.
//!
//! Amplitudes obey `iċ_n = nF c_n + g Σ χ_{klm} c*_{n+k} c_{n+l} c_{n+m}`.
//! Keeping only the on-site and nearest-neighbor couplings gives the
//! production equation, integrated in amplitude form. The action-angle form
//! `c_n = √I_n e^{iθ_n}` serves the Hamiltonian, the integrable limit and the
//! section coordinates.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ode::{Integrator, Method, OdeError, Solver, StepStats, Tolerance, C64};
use crate::units::{rescale, ModelParams, RescaledParams, UnitsError};
use crate::ws_basis::{ChiTensor, NnChi};

/// Actions at or below this are too close to the `1/√I` singularity of the
/// angle equations.
pub const I_FLOOR: f64 = 1e-8;

/// Extra wells kept on each side of a preparation.
pub const DEFAULT_MARGIN: i32 = 4;

/// Population on an outermost retained well that triggers a warning.
pub const MARGIN_WARN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum LatticeError {
    #[error("invalid lattice system: {0}")]
    InvalidSystem(String),
    #[error("negative action {action} in well {well}")]
    NegativeAction { well: i32, action: f64 },
    #[error("action {action:e} in well {well} is at or below the floor {I_FLOOR:e}; use the amplitude form")]
    NearSingular { well: i32, action: f64 },
    #[error("mode layout mismatch: {0}")]
    Layout(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// Complex amplitudes `c_n` on the contiguous wells `first_well..`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeState {
    pub first_well: i32,
    pub amplitudes: Vec<C64>,
    pub time: f64,
}

impl ModeState {
    pub fn new(first_well: i32, amplitudes: Vec<C64>) -> Self {
        ModeState { first_well, amplitudes, time: 0.0 }
    }

    pub fn zeros(first_well: i32, last_well: i32) -> Self {
        let len = (last_well - first_well + 1).max(0) as usize;
        Self::new(first_well, vec![C64::new(0.0, 0.0); len])
    }

    pub fn last_well(&self) -> i32 {
        self.first_well + self.amplitudes.len() as i32 - 1
    }

    pub fn wells(&self) -> std::ops::RangeInclusive<i32> {
        self.first_well..=self.last_well()
    }

    fn index(&self, well: i32) -> Option<usize> {
        let i = well - self.first_well;
        (i >= 0 && (i as usize) < self.amplitudes.len()).then_some(i as usize)
    }

    /// Zero outside the stored wells.
    pub fn get(&self, well: i32) -> C64 {
        self.index(well).map_or(C64::new(0.0, 0.0), |i| self.amplitudes[i])
    }

    pub fn set(&mut self, well: i32, value: C64) {
        let i = self.index(well).expect("well outside the mode layout");
        self.amplitudes[i] = value;
    }

    pub fn population(&self, well: i32) -> f64 {
        self.get(well).norm_sqr()
    }

    pub fn populations(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    /// Same amplitudes laid out on `first..=last`, dropping wells outside.
    pub fn relayout(&self, first: i32, last: i32) -> Self {
        let mut out = Self::zeros(first, last);
        for n in first..=last {
            out.amplitudes[(n - first) as usize] = self.get(n);
        }
        out.time = self.time;
        out
    }
}

/// Initial superposition over a set of wells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preparation {
    pub wells: Vec<i32>,
    pub amplitudes: Vec<f64>,
    #[serde(default)]
    pub phases: Vec<f64>,
}

impl Preparation {
    /// Equal weights with zero phases on `wells`.
    pub fn uniform(wells: impl IntoIterator<Item = i32>) -> Self {
        let wells: Vec<i32> = wells.into_iter().collect();
        let a = 1.0 / (wells.len() as f64).sqrt();
        Preparation { amplitudes: vec![a; wells.len()], phases: vec![0.0; wells.len()], wells }
    }

    /// Twelve neighboring wells `-6..=5` with equal weight.
    pub fn twelve_wells() -> Self {
        Self::uniform(-6..=5)
    }

    pub fn validate(&self) -> Result<(), LatticeError> {
        if self.wells.is_empty() {
            return Err(LatticeError::InvalidSystem("preparation has no wells".into()));
        }
        if self.amplitudes.len() != self.wells.len() {
            return Err(LatticeError::InvalidSystem("one amplitude per prepared well is required".into()));
        }
        if !self.phases.is_empty() && self.phases.len() != self.wells.len() {
            return Err(LatticeError::InvalidSystem("phases must be empty or one per prepared well".into()));
        }
        let mut sorted = self.wells.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.wells.len() {
            return Err(LatticeError::InvalidSystem("prepared wells must be distinct".into()));
        }
        let norm: f64 = self.amplitudes.iter().map(|a| a * a).sum();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(LatticeError::InvalidSystem("prepared amplitudes must not all vanish".into()));
        }
        Ok(())
    }

    pub fn span(&self) -> (i32, i32) {
        let lo = *self.wells.iter().min().expect("validated");
        let hi = *self.wells.iter().max().expect("validated");
        (lo, hi)
    }

    /// Unit-normalized complex weights in well order of `self.wells`.
    pub fn weights(&self) -> Vec<(i32, C64)> {
        let norm: f64 = self.amplitudes.iter().map(|a| a * a).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            log::warn!("preparation renormalized (norm was {norm:.8})");
        }
        self.wells
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let phase = self.phases.get(i).copied().unwrap_or(0.0);
                (n, C64::from_polar(self.amplitudes[i] / norm, phase))
            })
            .collect()
    }

    pub fn mode_state(&self, first: i32, last: i32) -> Result<ModeState, LatticeError> {
        self.validate()?;
        let (lo, hi) = self.span();
        if lo < first || hi > last {
            return Err(LatticeError::Layout(format!("prepared wells {lo}..={hi} exceed {first}..={last}")));
        }
        let mut state = ModeState::zeros(first, last);
        for (n, w) in self.weights() {
            state.set(n, w);
        }
        Ok(state)
    }
}

/// Which clock and force units the equations run in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    /// Normalized time `t`, force `F`.
    Raw,
    /// `τ = |g|χ₀₀₀ t`, force `F/(|g|χ₀₀₀)`.
    Rescaled,
}

/// Effective coefficients of the nearest-neighbor equation in one clock:
/// `iċ_n = f n c_n + a|c_n|²c_n + (b c*_{n-1} + φ c*_{n+1})c_n² + ...`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Couplings {
    pub force: f64,
    pub on_site: f64,
    pub forward: f64,
    pub backward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeSystem {
    pub params: ModelParams,
    pub chi: NnChi,
    pub first_well: i32,
    pub last_well: i32,
    pub clock: Clock,
}

impl LatticeSystem {
    pub fn new(params: ModelParams, chi: NnChi, wells: std::ops::RangeInclusive<i32>, clock: Clock) -> Result<Self, LatticeError> {
        let (first_well, last_well) = wells.into_inner();
        if first_well > last_well {
            return Err(LatticeError::InvalidSystem("empty well range".into()));
        }
        if !(chi.on_site > 0.0) {
            return Err(LatticeError::Units(UnitsError::NonPositiveOnSite(chi.on_site)));
        }
        if clock == Clock::Rescaled && params.g == 0.0 {
            return Err(LatticeError::Units(UnitsError::RescalingUndefined));
        }
        Ok(LatticeSystem { params, chi, first_well, last_well, clock })
    }

    /// Prepared wells plus [`DEFAULT_MARGIN`] on each side.
    pub fn for_preparation(params: ModelParams, chi: NnChi, prep: &Preparation, clock: Clock) -> Result<Self, LatticeError> {
        prep.validate()?;
        let (lo, hi) = prep.span();
        Self::new(params, chi, (lo - DEFAULT_MARGIN)..=(hi + DEFAULT_MARGIN), clock)
    }

    pub fn len(&self) -> usize {
        (self.last_well - self.first_well + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        self.first_well > self.last_well
    }

    pub fn wells(&self) -> std::ops::RangeInclusive<i32> {
        self.first_well..=self.last_well
    }

    pub fn with_clock(self, clock: Clock) -> Result<Self, LatticeError> {
        Self::new(self.params, self.chi, self.wells(), clock)
    }

    /// Copy with the inter-well couplings multiplied by `factor`.
    pub fn with_coupling_scale(self, factor: f64) -> Self {
        LatticeSystem { chi: self.chi.scaled_coupling(factor), ..self }
    }

    pub fn rescaled_params(&self) -> Result<RescaledParams, LatticeError> {
        Ok(rescale(&self.params, &self.chi)?)
    }

    /// Raw time per unit of this system's clock.
    pub fn time_scale(&self) -> f64 {
        match self.clock {
            Clock::Raw => 1.0,
            Clock::Rescaled => 1.0 / (self.params.g.abs() * self.chi.on_site),
        }
    }

    pub fn couplings(&self) -> Couplings {
        let g = self.params.g;
        let raw = Couplings {
            force: self.params.force,
            on_site: g * self.chi.on_site,
            forward: g * self.chi.forward,
            backward: g * self.chi.backward,
        };
        match self.clock {
            Clock::Raw => raw,
            Clock::Rescaled => {
                let s = self.time_scale();
                Couplings { force: raw.force * s, on_site: raw.on_site * s, forward: raw.forward * s, backward: raw.backward * s }
            }
        }
    }

    pub fn check_layout(&self, c: &ModeState) -> Result<(), LatticeError> {
        if c.first_well != self.first_well || c.amplitudes.len() != self.len() {
            return Err(LatticeError::Layout(format!("state covers {:?}, system {:?}", c.wells(), self.wells())));
        }
        Ok(())
    }

    /// `dc/dt` of the nearest-neighbor equation on raw slices laid out like
    /// the system.
    pub fn eval(&self, c: &[C64], dc: &mut [C64]) {
        eval_nn(&self.couplings(), self.first_well, c, dc);
    }

    /// Energy whose Wirtinger gradient drives the flow, `iċ_n = ∂E/∂c*_n`.
    pub fn energy(&self, c: &[C64]) -> f64 {
        energy_nn(&self.couplings(), self.first_well, c)
    }

    /// Population summed over the outermost `k` wells at each end.
    pub fn edge_population(&self, c: &[C64], k: usize) -> f64 {
        let n = c.len();
        let k = k.min(n / 2);
        c[..k].iter().chain(&c[n - k..]).map(|z| z.norm_sqr()).sum()
    }
}

fn eval_nn(k: &Couplings, first_well: i32, c: &[C64], dc: &mut [C64]) {
    let n = c.len();
    let zero = C64::new(0.0, 0.0);
    for j in 0..n {
        let cn = c[j];
        let prev = if j > 0 { c[j - 1] } else { zero };
        let next = if j + 1 < n { c[j + 1] } else { zero };
        let pn = cn.norm_sqr();
        let well = (first_well + j as i32) as f64;
        let rhs = cn * (k.force * well + k.on_site * pn)
            + (prev.conj() * k.backward + next.conj() * k.forward) * cn * cn
            + (prev * k.backward + next * k.forward) * (2.0 * pn)
            + prev * (k.forward * prev.norm_sqr())
            + next * (k.backward * next.norm_sqr());
        // ċ = -i · rhs
        dc[j] = C64::new(rhs.im, -rhs.re);
    }
}

fn energy_nn(k: &Couplings, first_well: i32, c: &[C64]) -> f64 {
    let mut e = 0.0;
    for (j, cn) in c.iter().enumerate() {
        let p = cn.norm_sqr();
        e += k.force * (first_well + j as i32) as f64 * p + 0.5 * k.on_site * p * p;
        if let Some(next) = c.get(j + 1) {
            let pair = cn.conj() * next;
            e += 2.0 * (k.forward * p + k.backward * next.norm_sqr()) * pair.re;
        }
    }
    e
}

/// `dc/dt` of the nearest-neighbor equation in the system's clock.
pub fn rhs_truncated(c: &ModeState, system: &LatticeSystem) -> Result<Vec<C64>, LatticeError> {
    system.check_layout(c)?;
    let mut dc = vec![C64::new(0.0, 0.0); c.amplitudes.len()];
    system.eval(&c.amplitudes, &mut dc);
    Ok(dc)
}

/// Ordered triples with their coupling, expanded from the canonical storage.
fn ordered_triples(chi: &ChiTensor) -> Vec<([i32; 3], f64)> {
    let mut out = Vec::new();
    for (t, v) in chi.entries() {
        let perms =
            [[t[0], t[1], t[2]], [t[0], t[2], t[1]], [t[1], t[0], t[2]], [t[1], t[2], t[0]], [t[2], t[0], t[1]], [t[2], t[1], t[0]]];
        let mut seen: Vec<[i32; 3]> = Vec::with_capacity(6);
        for p in perms {
            if !seen.contains(&p) {
                seen.push(p);
                out.push((p, v));
            }
        }
    }
    out
}

/// Raw-clock `dc/dt` with every coupling stored in `chi`, using the
/// translation-reduced tensor `χⁿ_{n+k,n+l,n+m} = χ_{klm}`; wells outside the
/// state are empty.
pub fn rhs_full(c: &ModeState, chi: &ChiTensor, params: &ModelParams) -> Vec<C64> {
    let triples = ordered_triples(chi);
    c.wells()
        .map(|n| {
            let mut sum = C64::new(0.0, 0.0);
            for ([k, l, m], v) in &triples {
                sum += c.get(n + k).conj() * c.get(n + l) * c.get(n + m) * *v;
            }
            let rhs = c.get(n) * (params.force * n as f64) + sum * params.g;
            C64::new(rhs.im, -rhs.re)
        })
        .collect()
}

/// `(I_n, θ_n)` with unwrapped angles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionAngleState {
    pub first_well: i32,
    pub actions: Vec<f64>,
    pub angles: Vec<f64>,
    pub time: f64,
}

impl ActionAngleState {
    pub fn last_well(&self) -> i32 {
        self.first_well + self.actions.len() as i32 - 1
    }

    fn index(&self, well: i32) -> Option<usize> {
        let i = well - self.first_well;
        (i >= 0 && (i as usize) < self.actions.len()).then_some(i as usize)
    }

    pub fn action(&self, well: i32) -> f64 {
        self.index(well).map_or(0.0, |i| self.actions[i])
    }

    pub fn angle(&self, well: i32) -> f64 {
        self.index(well).map_or(0.0, |i| self.angles[i])
    }

    /// The phase of an empty well is meaningless; it is stored as 0.
    pub fn angle_defined(&self, well: i32) -> bool {
        self.action(well) > 0.0
    }
}

pub fn to_action_angle(c: &ModeState) -> ActionAngleState {
    let actions = c.amplitudes.iter().map(|z| z.norm_sqr()).collect();
    let angles = c.amplitudes.iter().map(|z| if z.norm_sqr() > 0.0 { z.arg() } else { 0.0 }).collect();
    ActionAngleState { first_well: c.first_well, actions, angles, time: c.time }
}

pub fn from_action_angle(aa: &ActionAngleState) -> Result<ModeState, LatticeError> {
    let mut amplitudes = Vec::with_capacity(aa.actions.len());
    for (i, (&a, &th)) in aa.actions.iter().zip(&aa.angles).enumerate() {
        if a < 0.0 {
            return Err(LatticeError::NegativeAction { well: aa.first_well + i as i32, action: a });
        }
        amplitudes.push(C64::from_polar(a.sqrt(), th));
    }
    Ok(ModeState { first_well: aa.first_well, amplitudes, time: aa.time })
}

/// `(İ_n, θ̇_n)` in rescaled time, from Hamilton's equations of [`hamiltonian`].
pub fn rhs_action_angle(aa: &ActionAngleState, rp: &RescaledParams) -> Result<(Vec<f64>, Vec<f64>), LatticeError> {
    for (i, &a) in aa.actions.iter().enumerate() {
        if a <= I_FLOOR {
            return Err(LatticeError::NearSingular { well: aa.first_well + i as i32, action: a });
        }
    }
    let (s, eps, beta) = (rp.sigma_g, rp.epsilon, rp.beta);
    let n = aa.actions.len();
    let mut di = vec![0.0; n];
    let mut dth = vec![0.0; n];
    for j in 0..n {
        let well = aa.first_well + j as i32;
        let (i0, t0) = (aa.actions[j], aa.angles[j]);
        let (ip, tp) = (aa.action(well + 1), aa.angle(well + 1));
        let (im, tm) = (aa.action(well - 1), aa.angle(well - 1));
        let (sp, sm, s0) = (ip.sqrt(), im.sqrt(), i0.sqrt());
        di[j] = 2.0 * eps * s * s0 * (sp * (ip + beta * i0) * (tp - t0).sin() + sm * (i0 + beta * im) * (tm - t0).sin());
        dth[j] = -(well as f64) * rp.force_rescaled
            - s * i0
            - eps * s / s0 * (sp * (ip + 3.0 * beta * i0) * (tp - t0).cos() + sm * (3.0 * i0 + beta * im) * (tm - t0).cos());
    }
    Ok((di, dth))
}

/// `H = Σ nF I_n + (σ/2)I_n² + 2σε√(I_n I_{n+1})(βI_n + I_{n+1})cos(θ_{n+1} - θ_n)`.
pub fn hamiltonian(aa: &ActionAngleState, rp: &RescaledParams) -> f64 {
    let (s, eps, beta) = (rp.sigma_g, rp.epsilon, rp.beta);
    let mut h = 0.0;
    for (j, &i0) in aa.actions.iter().enumerate() {
        let well = aa.first_well + j as i32;
        h += well as f64 * rp.force_rescaled * i0 + 0.5 * s * i0 * i0;
        if j + 1 < aa.actions.len() {
            let ip = aa.actions[j + 1];
            let dth = aa.angles[j + 1] - aa.angles[j];
            h += 2.0 * s * eps * (i0 * ip).sqrt() * (beta * i0 + ip) * dth.cos();
        }
    }
    h
}

/// Closed-form flow of the decoupled system, `θ_n += (-nF - σI_n) t`.
pub fn integrable_solution(aa0: &ActionAngleState, rp: &RescaledParams, t: f64) -> ActionAngleState {
    let angles = aa0
        .actions
        .iter()
        .zip(&aa0.angles)
        .enumerate()
        .map(|(j, (&i0, &th))| {
            let well = aa0.first_well + j as i32;
            th + (-(well as f64) * rp.force_rescaled - rp.sigma_g * i0) * t
        })
        .collect();
    ActionAngleState { first_well: aa0.first_well, actions: aa0.actions.clone(), angles, time: aa0.time + t }
}

/// Wrap into `(-π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max |Σ|c|² - Σ|c(0)|²|`.
    pub norm_drift: f64,
    /// `max |E - E(0)| / max(|E(0)|, 1e-300)`.
    pub energy_drift: f64,
    /// Largest population seen on the outermost retained well at either end.
    pub edge_population: f64,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub first_well: i32,
    pub clock: Clock,
    pub times: Vec<f64>,
    pub states: Vec<Vec<C64>>,
    pub diagnostics: Diagnostics,
}

impl Trajectory {
    pub fn mode(&self, k: usize) -> ModeState {
        ModeState { first_well: self.first_well, amplitudes: self.states[k].clone(), time: self.times[k] }
    }

    /// Time series of `c_n`.
    pub fn amplitude_series(&self, well: i32) -> Vec<C64> {
        let i = (well - self.first_well) as usize;
        self.states.iter().map(|s| s.get(i).copied().unwrap_or_default()).collect()
    }

    pub fn population_series(&self, well: i32) -> Vec<f64> {
        self.amplitude_series(well).iter().map(|c| c.norm_sqr()).collect()
    }
}

/// Evenly spaced sample times `0, dt, ..., t_end` (last one clamped).
pub fn sample_times(t_end: f64, count: usize) -> Vec<f64> {
    if count <= 1 || t_end == 0.0 {
        return vec![0.0];
    }
    (0..count).map(|k| t_end * k as f64 / (count - 1) as f64).collect()
}

/// Which variables the integrator advances.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Form {
    /// Complex amplitudes; regular everywhere.
    #[default]
    Amplitude,
    /// `(I_n, θ_n)`; keeps `Σ I_n` to round-off because the exchange terms
    /// telescope, but needs every action above [`I_FLOOR`].
    ActionAngle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationSettings {
    pub tol: f64,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub form: Form,
}

impl IntegrationSettings {
    pub fn new(tol: f64) -> Self {
        IntegrationSettings { tol, method: Method::default(), form: Form::default() }
    }

    pub fn with_form(self, form: Form) -> Self {
        IntegrationSettings { form, ..self }
    }

    pub fn with_method(self, method: Method) -> Self {
        IntegrationSettings { method, ..self }
    }
}

impl LatticeSystem {
    /// `(İ_n, θ̇_n)` in this system's clock, packed as `I + iθ` per well.
    pub fn eval_action_angle(&self, y: &[C64], dy: &mut [C64]) {
        let k = self.couplings();
        let n = y.len();
        for j in 0..n {
            let (i0, t0) = (y[j].re, y[j].im);
            let (ip, tp) = if j + 1 < n { (y[j + 1].re, y[j + 1].im) } else { (0.0, 0.0) };
            let (im, tm) = if j > 0 { (y[j - 1].re, y[j - 1].im) } else { (0.0, 0.0) };
            let (s0, sp, sm) = (i0.sqrt(), ip.sqrt(), im.sqrt());
            let well = (self.first_well + j as i32) as f64;
            let di = 2.0
                * s0
                * (sp * (k.backward * ip + k.forward * i0) * (tp - t0).sin() + sm * (k.backward * i0 + k.forward * im) * (tm - t0).sin());
            let dth = -well * k.force
                - k.on_site * i0
                - (sp * (k.backward * ip + 3.0 * k.forward * i0) * (tp - t0).cos()
                    + sm * (3.0 * k.backward * i0 + k.forward * im) * (tm - t0).cos())
                    / s0;
            dy[j] = C64::new(di, dth);
        }
    }
}

fn pack_action_angle(c: &ModeState) -> Result<Vec<C64>, LatticeError> {
    let aa = to_action_angle(c);
    for (j, &a) in aa.actions.iter().enumerate() {
        if a <= I_FLOOR {
            return Err(LatticeError::NearSingular { well: c.first_well + j as i32, action: a });
        }
    }
    Ok(aa.actions.iter().zip(&aa.angles).map(|(a, t)| C64::new(*a, *t)).collect())
}

/// Integrate the nearest-neighbor equation in amplitude form with the
/// default 8th-order Dormand-Prince pair, reading off dense output at `times`
/// (ascending, starting at or after `c0.time`).
pub fn integrate(c0: &ModeState, system: &LatticeSystem, times: &[f64], tol: f64) -> Result<Trajectory, LatticeError> {
    integrate_with(c0, system, times, &IntegrationSettings::new(tol))
}

pub fn integrate_with(
    c0: &ModeState,
    system: &LatticeSystem,
    times: &[f64],
    settings: &IntegrationSettings,
) -> Result<Trajectory, LatticeError> {
    let tol = settings.tol;
    if !(tol > 0.0) {
        return Err(LatticeError::InvalidSystem(format!("tolerance must be positive, got {tol}")));
    }
    system.check_layout(c0)?;
    let sys = *system;
    let form = settings.form;
    let y0 = match form {
        Form::Amplitude => c0.amplitudes.clone(),
        Form::ActionAngle => pack_action_angle(c0)?,
    };
    let rhs = move |_t: f64, y: &[C64], dy: &mut [C64]| match form {
        Form::Amplitude => sys.eval(y, dy),
        Form::ActionAngle => sys.eval_action_angle(y, dy),
    };
    let mut solver = Solver::new(settings.method, rhs, c0.time, y0, Tolerance::uniform(tol));

    let first_well = c0.first_well;
    let to_amplitudes = |y: &[C64], out: &mut [C64]| match form {
        Form::Amplitude => out.copy_from_slice(y),
        Form::ActionAngle => {
            for (o, z) in out.iter_mut().zip(y) {
                *o = C64::from_polar(z.re.max(0.0).sqrt(), z.im);
            }
        }
    };
    let check_floor = |y: &[C64], t: f64| -> Result<(), LatticeError> {
        if form == Form::ActionAngle {
            if let Some((j, z)) = y.iter().enumerate().find(|(_, z)| z.re <= I_FLOOR) {
                log::warn!("action in well {} fell to {:e} at t = {t}", first_well + j as i32, z.re);
                return Err(LatticeError::NearSingular { well: first_well + j as i32, action: z.re });
            }
        }
        Ok(())
    };

    let norm0 = c0.norm_sqr();
    let e0 = system.energy(&c0.amplitudes);
    let mut diag = Diagnostics::default();
    let record = |c: &[C64], diag: &mut Diagnostics| {
        // action-angle runs conserve Σ I_n exactly in their own variables
        let norm: f64 = c.iter().map(|z| z.norm_sqr()).sum();
        diag.norm_drift = diag.norm_drift.max((norm - norm0).abs());
        let e = system.energy(c);
        diag.energy_drift = diag.energy_drift.max((e - e0).abs() / e0.abs().max(1e-300));
        let edge = c[0].norm_sqr().max(c[c.len() - 1].norm_sqr());
        diag.edge_population = diag.edge_population.max(edge);
    };

    let mut out_t = Vec::with_capacity(times.len());
    let mut out_y = Vec::with_capacity(times.len());
    let dim = c0.amplitudes.len();
    let mut buf = vec![C64::new(0.0, 0.0); dim];
    let mut amps = vec![C64::new(0.0, 0.0); dim];
    let t_end = times.last().copied().unwrap_or(c0.time);
    let mut next = 0;
    while next < times.len() && times[next] <= c0.time {
        out_t.push(times[next]);
        out_y.push(c0.amplitudes.clone());
        next += 1;
    }
    record(&c0.amplitudes, &mut diag);
    while next < times.len() {
        solver.step(t_end)?;
        check_floor(solver.y(), solver.t())?;
        to_amplitudes(solver.y(), &mut amps);
        record(&amps, &mut diag);
        while next < times.len() && times[next] <= solver.t() {
            if times[next] == solver.t() {
                buf.copy_from_slice(solver.y());
            } else {
                solver.dense_output(times[next], &mut buf);
            }
            let mut c = vec![C64::new(0.0, 0.0); dim];
            to_amplitudes(&buf, &mut c);
            out_t.push(times[next]);
            out_y.push(c);
            next += 1;
        }
    }
    let StepStats { accepted, rejected, .. } = solver.stats();
    diag.accepted_steps = accepted;
    diag.rejected_steps = rejected;
    if diag.edge_population > MARGIN_WARN {
        log::warn!("population {:.3e} reached the outermost retained wells; widen the well range", diag.edge_population);
    }
    Ok(Trajectory { first_well, clock: system.clock, times: out_t, states: out_y, diagnostics: diag })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rounded_chi() -> NnChi {
        NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 }
    }

    fn system(first: i32, last: i32, clock: Clock) -> LatticeSystem {
        let p = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        LatticeSystem::new(p, rounded_chi(), first..=last, clock).unwrap()
    }

    fn pseudo_random_state(first: i32, len: usize, seed: u64) -> ModeState {
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let amps = (0..len).map(|_| C64::from_polar(0.2 + next(), 2.0 * PI * next())).collect::<Vec<_>>();
        let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        ModeState::new(first, amps.into_iter().map(|z| z / norm).collect())
    }

    #[test]
    fn zero_state_is_fixed() {
        let sys = system(-2, 2, Clock::Raw);
        let zero = ModeState::zeros(-2, 2);
        assert!(rhs_truncated(&zero, &sys).unwrap().iter().all(|z| z.norm() == 0.0));
        let chi = ChiTensor::nearest_neighbor(&rounded_chi());
        assert!(rhs_full(&zero, &chi, &sys.params).iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn single_mode_rotates() {
        let sys = system(-2, 2, Clock::Raw);
        let mut c = ModeState::zeros(-2, 2);
        c.set(0, C64::new(1.0, 0.0));
        let d = rhs_truncated(&c, &sys).unwrap();
        // iċ₀ = gχ₀₀₀ c₀
        assert!((d[2] - C64::new(0.0, -0.25 * 1.99)).norm() < 1e-15);
        // the neighbors are driven only through the cubic tail terms
        assert!((d[3] - C64::new(0.0, 0.25 * 0.16)).norm() < 1e-15);
        assert!((d[1] - C64::new(0.0, -0.25 * 0.15)).norm() < 1e-15);
        assert_eq!(d[0].norm() + d[4].norm(), 0.0);
    }

    #[test]
    fn rescaled_coefficients() {
        let sys = system(-1, 1, Clock::Rescaled);
        let rp = sys.rescaled_params().unwrap();
        let k = sys.couplings();
        assert!((k.force - rp.force_rescaled).abs() < 1e-15);
        assert!((k.on_site - 1.0).abs() < 1e-15);
        assert!((k.backward - rp.epsilon).abs() < 1e-15);
        assert!((k.forward - rp.epsilon * rp.beta).abs() < 1e-15);
    }

    #[test]
    fn polar_decomposition() {
        let c0 = C64::new(1.0, 1.0) / 2f64.sqrt() * 0.5f64.sqrt();
        let aa = to_action_angle(&ModeState::new(0, vec![c0, C64::new(0.0, 0.0)]));
        assert!((aa.actions[0] - 0.5).abs() < 1e-15);
        assert!((aa.angles[0] - PI / 4.0).abs() < 1e-15);
        assert_eq!(aa.angles[1], 0.0);
        assert!(!aa.angle_defined(1));
    }

    #[test]
    fn negative_action_rejected() {
        let aa = ActionAngleState { first_well: 0, actions: vec![0.5, -1e-3], angles: vec![0.0; 2], time: 0.0 };
        assert!(matches!(from_action_angle(&aa), Err(LatticeError::NegativeAction { well: 1, .. })));
    }

    #[test]
    fn floor_guards_angle_equations() {
        let rp = system(0, 1, Clock::Rescaled).rescaled_params().unwrap();
        let aa = ActionAngleState { first_well: 0, actions: vec![1.0, 0.0], angles: vec![0.0; 2], time: 0.0 };
        assert!(matches!(rhs_action_angle(&aa, &rp), Err(LatticeError::NearSingular { well: 1, .. })));
    }

    #[test]
    fn decoupled_frequencies() {
        let rp = system(-1, 1, Clock::Rescaled).rescaled_params().unwrap().integrable();
        let aa = ActionAngleState { first_well: -1, actions: vec![0.2, 0.3, 0.5], angles: vec![0.1, 0.2, 0.3], time: 0.0 };
        let (di, dth) = rhs_action_angle(&aa, &rp).unwrap();
        for j in 0..3 {
            assert_eq!(di[j], 0.0);
            let n = (j as i32 - 1) as f64;
            assert!((dth[j] - (-n * rp.force_rescaled - aa.actions[j])).abs() < 1e-15);
        }
    }

    #[test]
    fn balanced_pair_has_no_exchange() {
        let mut rp = system(0, 1, Clock::Rescaled).rescaled_params().unwrap();
        rp.beta = -1.0;
        let aa = ActionAngleState { first_well: 0, actions: vec![0.5, 0.5], angles: vec![0.7, 0.7], time: 0.0 };
        let (di, _) = rhs_action_angle(&aa, &rp).unwrap();
        assert_eq!(di[0], 0.0);
    }

    #[test]
    fn single_well_hamiltonian() {
        let rp = system(0, 0, Clock::Rescaled).rescaled_params().unwrap().integrable();
        let aa = ActionAngleState { first_well: 0, actions: vec![1.0], angles: vec![0.0], time: 0.0 };
        assert_eq!(hamiltonian(&aa, &rp), 0.5);
    }

    #[test]
    fn closed_form_advance() {
        let rp = system(0, 0, Clock::Rescaled).rescaled_params().unwrap();
        let aa = ActionAngleState { first_well: 0, actions: vec![0.3], angles: vec![0.0], time: 0.0 };
        assert_eq!(integrable_solution(&aa, &rp, 0.0), aa);
        let later = integrable_solution(&aa, &rp, 10.0);
        assert!((later.angles[0] + 3.0).abs() < 1e-14);
    }

    #[test]
    fn energy_matches_hamiltonian_in_rescaled_clock() {
        let sys = system(-2, 2, Clock::Rescaled);
        let rp = sys.rescaled_params().unwrap();
        let c = pseudo_random_state(-2, 5, 3);
        let h = hamiltonian(&to_action_angle(&c), &rp);
        assert!((sys.energy(&c.amplitudes) - h).abs() < 1e-14);
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
    }

    #[test]
    fn preparation_layout() {
        let prep = Preparation::twelve_wells();
        let sys = LatticeSystem::for_preparation(ModelParams::new(5.0, 0.25, 0.25).unwrap(), rounded_chi(), &prep, Clock::Raw).unwrap();
        assert_eq!(sys.wells(), -10..=9);
        let c = prep.mode_state(sys.first_well, sys.last_well).unwrap();
        assert!((c.norm_sqr() - 1.0).abs() < 1e-15);
        assert!((c.population(-6) - 1.0 / 12.0).abs() < 1e-15);
        assert_eq!(c.population(6), 0.0);
    }

    #[test]
    fn zero_horizon_keeps_initial_sample() {
        let sys = system(-1, 1, Clock::Raw);
        let c = pseudo_random_state(-1, 3, 9);
        let traj = integrate(&c, &sys, &[0.0], 1e-10).unwrap();
        assert_eq!(traj.states, vec![c.amplitudes]);
    }

    proptest! {
        #[test]
        fn norm_is_stationary(seed in any::<u64>()) {
            let sys = system(-2, 2, Clock::Raw);
            let c = pseudo_random_state(-2, 5, seed);
            let d = rhs_truncated(&c, &sys).unwrap();
            let rate: f64 = c.amplitudes.iter().zip(&d).map(|(a, b)| (a.conj() * b).re).sum();
            prop_assert!(rate.abs() < 1e-14);
        }

        #[test]
        fn round_trip_is_identity(seed in any::<u64>()) {
            let c = pseudo_random_state(-3, 7, seed);
            let back = from_action_angle(&to_action_angle(&c)).unwrap();
            for (a, b) in c.amplitudes.iter().zip(&back.amplitudes) {
                prop_assert!((a - b).norm() < 1e-14);
            }
        }

        #[test]
        fn gauge_covariance(seed in any::<u64>(), shift in -10.0f64..10.0) {
            let rp = system(-2, 2, Clock::Rescaled).rescaled_params().unwrap();
            let aa = to_action_angle(&pseudo_random_state(-2, 5, seed));
            let mut moved = aa.clone();
            moved.angles.iter_mut().for_each(|t| *t += shift);
            let (di0, dt0) = rhs_action_angle(&aa, &rp).unwrap();
            let (di1, dt1) = rhs_action_angle(&moved, &rp).unwrap();
            for j in 0..5 {
                prop_assert!((di0[j] - di1[j]).abs() < 1e-12);
                prop_assert!((dt0[j] - dt1[j]).abs() < 1e-12);
            }
        }
    }
}
