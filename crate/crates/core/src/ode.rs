//! Embedded Dormand-Prince integrators with step-size control and dense
//! output, on complex state vectors.
//!
//! Coefficients and step controllers follow Hairer, Nørsett & Wanner,
//! "Solving Ordinary Differential Equations I", routines DOPRI5 and DOP853.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

mod dop853;

pub use dop853::Dop853;

pub type C64 = Complex64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at t = {t} (h = {h:e}); the problem looks stiff")]
    StepUnderflow { t: f64, h: f64, state: Vec<C64> },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

/// Right-hand side `dy/dt = f(t, y)`.
pub trait Rhs {
    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64]);
}

impl<F: Fn(f64, &[C64], &mut [C64])> Rhs for F {
    fn eval(&self, t: f64, y: &[C64], dy: &mut [C64]) {
        self(t, y, dy)
    }
}

/// Step-by-step interface shared by the integrators.
pub trait Integrator {
    fn t(&self) -> f64;
    fn y(&self) -> &[C64];
    fn stats(&self) -> StepStats;
    /// Replace the state (e.g. after a renormalization); the step size is kept.
    fn reset_state(&mut self, t: f64, y: &[C64]);
    /// Take one accepted step without passing `t_limit`.
    fn step(&mut self, t_limit: f64) -> Result<(), OdeError>;
    /// Interpolated state inside the last accepted step.
    fn dense_output(&self, t: f64, out: &mut [C64]);
    /// Start time of the last accepted step.
    fn last_step_start(&self) -> Option<f64>;

    /// Integrate exactly to `t_end`.
    fn advance_to(&mut self, t_end: f64) -> Result<(), OdeError> {
        while (t_end - self.t()).abs() > 0.0 {
            self.step(t_end)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dopri5,
    #[default]
    Dop853,
}

/// Either integrator behind one type.
pub enum Solver<F> {
    Dopri5(DormandPrince<F>),
    Dop853(Dop853<F>),
}

impl<F: Rhs> Solver<F> {
    pub fn new(method: Method, f: F, t0: f64, y0: Vec<C64>, tol: Tolerance) -> Self {
        match method {
            Method::Dopri5 => Solver::Dopri5(DormandPrince::new(f, t0, y0, tol)),
            Method::Dop853 => Solver::Dop853(Dop853::new(f, t0, y0, tol)),
        }
    }

    pub fn with_max_step(self, h_max: f64) -> Self {
        match self {
            Solver::Dopri5(s) => Solver::Dopri5(s.with_max_step(h_max)),
            Solver::Dop853(s) => Solver::Dop853(s.with_max_step(h_max)),
        }
    }

    pub fn rhs(&self) -> &F {
        match self {
            Solver::Dopri5(s) => s.rhs(),
            Solver::Dop853(s) => s.rhs(),
        }
    }
}

macro_rules! delegate {
    ($self:ident, $s:ident => $e:expr) => {
        match $self {
            Solver::Dopri5($s) => $e,
            Solver::Dop853($s) => $e,
        }
    };
}

impl<F: Rhs> Integrator for Solver<F> {
    fn t(&self) -> f64 {
        delegate!(self, s => s.t())
    }
    fn y(&self) -> &[C64] {
        delegate!(self, s => s.y())
    }
    fn stats(&self) -> StepStats {
        delegate!(self, s => s.stats())
    }
    fn reset_state(&mut self, t: f64, y: &[C64]) {
        delegate!(self, s => s.reset_state(t, y))
    }
    fn step(&mut self, t_limit: f64) -> Result<(), OdeError> {
        delegate!(self, s => s.step(t_limit))
    }
    fn dense_output(&self, t: f64, out: &mut [C64]) {
        delegate!(self, s => s.dense_output(t, out))
    }
    fn last_step_start(&self) -> Option<f64> {
        delegate!(self, s => s.last_step_start())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
}

impl Tolerance {
    pub fn uniform(tol: f64) -> Self {
        Tolerance { rtol: tol, atol: tol }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;
const BETA: f64 = 0.04;

/// Quartic interpolant over the last accepted step.
#[derive(Debug, Clone)]
struct Dense {
    t0: f64,
    h: f64,
    r: [Vec<C64>; 5],
}

pub struct DormandPrince<F> {
    f: F,
    tol: Tolerance,
    t: f64,
    y: Vec<C64>,
    h: f64,
    h_min: f64,
    h_max: f64,
    k: [Vec<C64>; 7],
    y_new: Vec<C64>,
    scratch: Vec<C64>,
    fsal_valid: bool,
    fac_old: f64,
    last_rejected: bool,
    dense: Option<Dense>,
    stats: StepStats,
}

impl<F: Rhs> DormandPrince<F> {
    pub fn new(f: F, t0: f64, y0: Vec<C64>, tol: Tolerance) -> Self {
        let n = y0.len();
        let z = || vec![C64::new(0.0, 0.0); n];
        DormandPrince {
            f,
            tol,
            t: t0,
            y: y0,
            h: 0.0,
            h_min: 0.0,
            h_max: f64::INFINITY,
            k: [z(), z(), z(), z(), z(), z(), z()],
            y_new: z(),
            scratch: z(),
            fsal_valid: false,
            fac_old: 1e-4,
            last_rejected: false,
            dense: None,
            stats: StepStats::default(),
        }
    }

    pub fn with_max_step(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn y(&self) -> &[C64] {
        &self.y
    }

    pub fn step_size(&self) -> f64 {
        self.h
    }

    pub fn stats(&self) -> StepStats {
        self.stats
    }

    pub fn rhs(&self) -> &F {
        &self.f
    }

    /// Replace the state (e.g. after a renormalization); the step size is kept.
    pub fn reset_state(&mut self, t: f64, y: &[C64]) {
        self.t = t;
        self.y.copy_from_slice(y);
        self.fsal_valid = false;
        self.dense = None;
    }

    fn error_norm(&self, err: &[C64]) -> f64 {
        let n = self.y.len().max(1) as f64;
        let sum: f64 = err
            .iter()
            .zip(&self.y)
            .zip(&self.y_new)
            .map(|((e, a), b)| {
                let sc = self.tol.atol + self.tol.rtol * a.norm().max(b.norm());
                e.norm_sqr() / (sc * sc)
            })
            .sum();
        (sum / n).sqrt()
    }

    fn initial_step(&mut self, direction: f64) -> f64 {
        let n = self.y.len();
        let scale = |v: &C64| self.tol.atol + self.tol.rtol * v.norm();
        let d0 = (self.y.iter().map(|v| v.norm_sqr() / scale(v).powi(2)).sum::<f64>() / n as f64).sqrt();
        let d1 = (self.k[0].iter().zip(&self.y).map(|(f, v)| f.norm_sqr() / scale(v).powi(2)).sum::<f64>() / n as f64).sqrt();
        let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
        h0 = h0.min(self.h_max);
        for i in 0..n {
            self.scratch[i] = self.y[i] + self.k[0][i] * (direction * h0);
        }
        let (k0, rest) = self.k.split_at_mut(1);
        self.f.eval(self.t + direction * h0, &self.scratch, &mut rest[0]);
        self.stats.evaluations += 1;
        let d2 = (rest[0].iter().zip(&k0[0]).zip(&self.y).map(|((a, b), v)| (a - b).norm_sqr() / scale(v).powi(2)).sum::<f64>() / n as f64)
            .sqrt()
            / h0;
        let dm = d1.max(d2);
        let h1 = if dm <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dm).powf(0.2) };
        (100.0 * h0).min(h1).min(self.h_max)
    }

    /// Take one accepted step without passing `t_limit`.
    pub fn step(&mut self, t_limit: f64) -> Result<(), OdeError> {
        let direction = if t_limit >= self.t { 1.0 } else { -1.0 };
        let n = self.y.len();
        if !self.fsal_valid {
            let (k0, _) = self.k.split_at_mut(1);
            self.f.eval(self.t, &self.y, &mut k0[0]);
            self.stats.evaluations += 1;
            self.fsal_valid = true;
        }
        if self.h == 0.0 {
            self.h = self.initial_step(direction);
        }
        let span = (t_limit - self.t).abs();
        let mut h = self.h.abs().min(self.h_max);
        let mut clamped = false;
        if h >= span {
            h = span;
            clamped = true;
        }
        loop {
            let hs = direction * h;
            if h < self.h_min.max(1e-14 * self.t.abs().max(1.0)) && !clamped {
                return Err(OdeError::StepUnderflow { t: self.t, h, state: self.y.clone() });
            }
            self.stages(hs);
            let mut err = std::mem::take(&mut self.scratch);
            for i in 0..n {
                err[i] =
                    (self.k[0][i] * E1 + self.k[2][i] * E3 + self.k[3][i] * E4 + self.k[4][i] * E5 + self.k[5][i] * E6 + self.k[6][i] * E7)
                        * hs;
            }
            let e = self.error_norm(&err);
            self.scratch = err;
            if !e.is_finite() {
                if h < 1e-14 {
                    return Err(OdeError::NonFinite { t: self.t });
                }
                h *= FAC_MIN;
                clamped = false;
                self.stats.rejected += 1;
                self.last_rejected = true;
                continue;
            }
            let fac11 = e.powf(0.2 - BETA * 0.75);
            if e <= 1.0 {
                let mut fac = fac11 / self.fac_old.powf(BETA);
                fac = (fac / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
                let mut h_new = h / fac;
                if self.last_rejected {
                    h_new = h_new.min(h);
                }
                self.fac_old = e.max(1e-4);
                self.accept(hs);
                self.last_rejected = false;
                // a clamped final step says nothing about the natural step size
                if !clamped || h_new < self.h.abs() {
                    self.h = h_new.min(self.h_max);
                }
                self.stats.accepted += 1;
                return Ok(());
            }
            h /= (fac11 / SAFETY).min(1.0 / FAC_MIN);
            clamped = false;
            self.stats.rejected += 1;
            self.last_rejected = true;
        }
    }

    fn stages(&mut self, h: f64) {
        let n = self.y.len();
        let t = self.t;
        let y = &self.y;
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.y_new;
        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        self.f.eval(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        self.f.eval(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        self.f.eval(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        self.f.eval(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        self.f.eval(t + h, tmp, k6);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        self.f.eval(t + h, tmp, k7);
        self.stats.evaluations += 6;
    }

    fn accept(&mut self, h: f64) {
        let n = self.y.len();
        let mut r: [Vec<C64>; 5] = std::array::from_fn(|_| Vec::with_capacity(n));
        for i in 0..n {
            let y0 = self.y[i];
            let y1 = self.y_new[i];
            let dy = y1 - y0;
            let bspl = self.k[0][i] * h - dy;
            r[0].push(y0);
            r[1].push(dy);
            r[2].push(bspl);
            r[3].push(dy - self.k[6][i] * h - bspl);
            r[4].push(
                (self.k[0][i] * D1 + self.k[2][i] * D3 + self.k[3][i] * D4 + self.k[4][i] * D5 + self.k[5][i] * D6 + self.k[6][i] * D7) * h,
            );
        }
        self.dense = Some(Dense { t0: self.t, h, r });
        std::mem::swap(&mut self.y, &mut self.y_new);
        let (k0, rest) = self.k.split_at_mut(1);
        k0[0].copy_from_slice(&rest[5]);
        self.t += h;
    }

    /// Interpolated state inside the last accepted step.
    pub fn dense_output(&self, t: f64, out: &mut [C64]) {
        let d = self.dense.as_ref().expect("dense output requires an accepted step");
        let s = (t - d.t0) / d.h;
        let s1 = 1.0 - s;
        for (i, o) in out.iter_mut().enumerate() {
            *o = d.r[0][i] + (d.r[1][i] + (d.r[2][i] + (d.r[3][i] + d.r[4][i] * s1) * s) * s1) * s;
        }
    }

    /// Start time of the last accepted step.
    pub fn last_step_start(&self) -> Option<f64> {
        self.dense.as_ref().map(|d| d.t0)
    }

    /// Integrate exactly to `t_end`.
    pub fn advance_to(&mut self, t_end: f64) -> Result<(), OdeError> {
        while (t_end - self.t).abs() > 0.0 {
            self.step(t_end)?;
        }
        Ok(())
    }
}

impl<F: Rhs> Integrator for DormandPrince<F> {
    fn t(&self) -> f64 {
        DormandPrince::t(self)
    }
    fn y(&self) -> &[C64] {
        DormandPrince::y(self)
    }
    fn stats(&self) -> StepStats {
        DormandPrince::stats(self)
    }
    fn reset_state(&mut self, t: f64, y: &[C64]) {
        DormandPrince::reset_state(self, t, y)
    }
    fn step(&mut self, t_limit: f64) -> Result<(), OdeError> {
        DormandPrince::step(self, t_limit)
    }
    fn dense_output(&self, t: f64, out: &mut [C64]) {
        DormandPrince::dense_output(self, t, out)
    }
    fn last_step_start(&self) -> Option<f64> {
        DormandPrince::last_step_start(self)
    }
}

/// States at each of the ascending `times` (first entry may equal `t0`),
/// using the default method.
pub fn integrate_samples<F: Rhs>(f: F, t0: f64, y0: &[C64], times: &[f64], tol: Tolerance) -> Result<(Vec<Vec<C64>>, StepStats), OdeError> {
    integrate_samples_with(Method::default(), f, t0, y0, times, tol)
}

pub fn integrate_samples_with<F: Rhs>(
    method: Method,
    f: F,
    t0: f64,
    y0: &[C64],
    times: &[f64],
    tol: Tolerance,
) -> Result<(Vec<Vec<C64>>, StepStats), OdeError> {
    let mut solver = Solver::new(method, f, t0, y0.to_vec(), tol);
    let t_end = times.last().copied().unwrap_or(t0);
    let mut out = Vec::with_capacity(times.len());
    let mut buf = vec![C64::new(0.0, 0.0); y0.len()];
    let mut next = 0;
    while next < times.len() && times[next] <= t0 {
        out.push(y0.to_vec());
        next += 1;
    }
    while next < times.len() {
        solver.step(t_end)?;
        while next < times.len() && times[next] <= solver.t() {
            if times[next] == solver.t() {
                out.push(solver.y().to_vec());
            } else {
                solver.dense_output(times[next], &mut buf);
                out.push(buf.clone());
            }
            next += 1;
        }
    }
    Ok((out, solver.stats()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_rotation() {
        // y' = -i w y, exact y = exp(-i w t)
        let w = 1.3;
        let f = move |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -C64::i() * w * y[0];
        let times: Vec<f64> = (0..=100).map(|k| k as f64 * 0.37).collect();
        for method in [Method::Dopri5, Method::Dop853] {
            let y0 = [C64::new(1.0, 0.0)];
            let (ys, stats) = integrate_samples_with(method, f, 0.0, &y0, &times, Tolerance::uniform(1e-10)).unwrap();
            for (t, y) in times.iter().zip(&ys) {
                let exact = C64::from_polar(1.0, -w * t);
                assert!((y[0] - exact).norm() < 1e-8, "{method:?} t = {t}");
            }
            assert!(stats.accepted > 10);
        }
    }

    #[test]
    fn fifth_order_convergence() {
        // y' = y cos t, exact exp(sin t); fixed-ish error vs tolerance
        let f = |t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * t.cos();
        let err = |tol: f64| {
            let (ys, _) = integrate_samples(f, 0.0, &[C64::new(1.0, 0.0)], &[10.0], Tolerance::uniform(tol)).unwrap();
            (ys[0][0].re - 10f64.sin().exp()).abs()
        };
        let e1 = err(1e-6);
        let e2 = err(1e-9);
        assert!(e2 < e1);
        assert!(e2 < 1e-7);
    }

    #[test]
    fn dense_output_is_accurate() {
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| {
            dy[0] = y[1];
            dy[1] = -y[0];
        };
        let mut s = DormandPrince::new(f, 0.0, vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)], Tolerance::uniform(1e-10));
        let mut buf = vec![C64::new(0.0, 0.0); 2];
        for _ in 0..50 {
            s.step(100.0).unwrap();
            let t0 = s.last_step_start().unwrap();
            let tm = 0.5 * (t0 + s.t());
            s.dense_output(tm, &mut buf);
            assert!((buf[0].re - tm.sin()).abs() < 1e-8);
        }
    }

    #[test]
    fn advance_hits_end_exactly() {
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = -y[0];
        let mut s = DormandPrince::new(f, 0.0, vec![C64::new(1.0, 0.0)], Tolerance::uniform(1e-9));
        s.advance_to(2.5).unwrap();
        assert_eq!(s.t(), 2.5);
        assert!((s.y()[0].re - (-2.5f64).exp()).abs() < 1e-8);
        s.advance_to(0.0).unwrap();
        assert!((s.y()[0].re - 1.0).abs() < 1e-7);
    }

    #[test]
    fn blowup_reports_underflow() {
        // y' = y², y(0) = 1 blows up at t = 1
        let f = |_t: f64, y: &[C64], dy: &mut [C64]| dy[0] = y[0] * y[0];
        let mut s = DormandPrince::new(f, 0.0, vec![C64::new(1.0, 0.0)], Tolerance::uniform(1e-8));
        let r = s.advance_to(2.0);
        assert!(matches!(r, Err(OdeError::StepUnderflow { .. }) | Err(OdeError::NonFinite { .. })), "{r:?}");
    }
}
