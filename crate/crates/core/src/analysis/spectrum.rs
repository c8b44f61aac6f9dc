//! Dominant frequencies of mode amplitudes from windowed spectra.

use std::f64::consts::PI;

use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::AnalysisError;
use crate::lattice::Trajectory;
use crate::ode::C64;

/// Shortest series accepted by [`mode_frequencies`].
pub const MIN_SAMPLES: usize = 1 << 12;

const PAD: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyEstimate {
    /// Angular frequency `ω` of the strongest component `e^{iωt}`.
    pub omega: f64,
    pub power: f64,
    /// Other peaks within 3 dB of the strongest, as `(ω, power)`.
    pub rivals: Vec<(f64, f64)>,
}

impl FrequencyEstimate {
    pub fn is_ambiguous(&self) -> bool {
        !self.rivals.is_empty()
    }
}

/// Hann-windowed, zero-padded spectrum of `signal` sampled every `dt`; the
/// peak is placed by a parabola through the log power of three bins.
pub fn dominant_frequency(signal: &[C64], dt: f64) -> Result<FrequencyEstimate, AnalysisError> {
    let n = signal.len();
    if n < 8 || !(dt > 0.0) {
        return Err(AnalysisError::Spectrum(format!("need at least 8 samples and dt > 0, got {n} and {dt}")));
    }
    let len = n * PAD;
    let mut buf = vec![C64::new(0.0, 0.0); len];
    for (j, (b, z)) in buf.iter_mut().zip(signal).enumerate() {
        let w = 0.5 * (1.0 - (2.0 * PI * j as f64 / n as f64).cos());
        *b = z * w;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut buf);
    // the forward transform uses e^{-i...}, so e^{iωt} peaks at bin ω·len·dt/2π
    let power: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let omega_of = |bin: f64| {
        let b = if bin > len as f64 / 2.0 { bin - len as f64 } else { bin };
        2.0 * PI * b / (len as f64 * dt)
    };
    let refine = |k: usize| {
        let (l, c, r) = (power[(k + len - 1) % len], power[k], power[(k + 1) % len]);
        let (l, c, r) = (l.max(1e-300).ln(), c.max(1e-300).ln(), r.max(1e-300).ln());
        let denom = l - 2.0 * c + r;
        let delta = if denom < 0.0 { 0.5 * (l - r) / denom } else { 0.0 };
        (k as f64 + delta.clamp(-0.5, 0.5), (c - 0.25 * (l - r) * delta).exp())
    };
    let peaks: Vec<usize> = (0..len)
        .filter(|&k| {
            let (l, r) = (power[(k + len - 1) % len], power[(k + 1) % len]);
            power[k] > l && power[k] >= r
        })
        .collect();
    let &top =
        peaks.iter().max_by(|a, b| power[**a].total_cmp(&power[**b])).ok_or_else(|| AnalysisError::Spectrum("flat spectrum".into()))?;
    let (bin, p) = refine(top);
    // Hann main lobe is four raw bins wide
    let lobe = 2 * PAD;
    let rivals = peaks
        .iter()
        .filter(|&&k| {
            let d = (k as i64 - top as i64).rem_euclid(len as i64) as usize;
            d.min(len - d) > lobe && power[k] >= 0.5 * power[top]
        })
        .map(|&k| {
            let (b, q) = refine(k);
            (omega_of(b), q)
        })
        .collect();
    Ok(FrequencyEstimate { omega: omega_of(bin), power: p, rivals })
}

/// Dominant frequency of `c_n(t)` for each requested well.
pub fn mode_frequencies(traj: &Trajectory, wells: &[i32]) -> Result<Vec<(i32, FrequencyEstimate)>, AnalysisError> {
    let t = &traj.times;
    if t.len() < MIN_SAMPLES {
        return Err(AnalysisError::Spectrum(format!("{} samples; at least {MIN_SAMPLES} are needed", t.len())));
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(1.0)) {
        return Err(AnalysisError::Spectrum("samples are not uniformly spaced".into()));
    }
    wells
        .iter()
        .map(|&n| {
            let last = traj.first_well + traj.states.first().map_or(0, |s| s.len()) as i32 - 1;
            if n < traj.first_well || n > last {
                return Err(AnalysisError::Spectrum(format!("well {n} is not in the trajectory")));
            }
            let est = dominant_frequency(&traj.amplitude_series(n), dt)?;
            if est.is_ambiguous() {
                log::warn!("well {n}: {} spectral peaks within 3 dB", est.rivals.len() + 1);
            }
            Ok((n, est))
        })
        .collect()
}

/// Straight-line fit of frequency offsets from the ladder against actions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PullingFit {
    /// `d(offset)/dI`, with the offset measured as `-(ω_n + n f)` so that a
    /// repulsive condensate gives a positive slope.
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
}

/// `samples` holds `(n, I_n, ω_n)`; `force` is the ladder spacing `f` in the
/// same clock, with the decoupled phases turning at `-n f`.
pub fn pulling_fit(samples: &[(i32, f64, f64)], force: f64) -> Result<PullingFit, AnalysisError> {
    if samples.len() < 2 {
        return Err(AnalysisError::Spectrum("a fit needs at least two wells".into()));
    }
    let pts: Vec<(f64, f64)> = samples.iter().map(|&(n, i, w)| (i, -(w + n as f64 * force))).collect();
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::Spectrum("all wells carry the same action".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let max_residual = pts.iter().map(|p| (p.1 - intercept - slope * p.0).abs()).fold(0.0, f64::max);
    Ok(PullingFit { slope, intercept, max_residual })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_tone_off_grid() {
        let dt = 0.1;
        for omega in [0.7311, -1.234, 0.0123] {
            let s: Vec<C64> = (0..4096).map(|j| C64::from_polar(0.4, omega * j as f64 * dt + 0.3)).collect();
            let est = dominant_frequency(&s, dt).unwrap();
            let bin = 2.0 * PI / (4096.0 * dt);
            assert!((est.omega - omega).abs() < 0.02 * bin, "{omega}: {}", est.omega);
            assert!(!est.is_ambiguous());
        }
    }

    #[test]
    fn two_equal_tones_are_flagged() {
        let dt = 0.1;
        let s: Vec<C64> =
            (0..4096).map(|j| C64::from_polar(1.0, 0.5 * j as f64 * dt) + C64::from_polar(0.95, -1.1 * j as f64 * dt)).collect();
        let est = dominant_frequency(&s, dt).unwrap();
        assert!(est.is_ambiguous());
        assert!((est.omega - 0.5).abs() < 1e-3);
        assert!((est.rivals[0].0 + 1.1).abs() < 1e-3);
    }

    #[test]
    fn weak_sideband_is_not_a_rival() {
        let dt = 0.1;
        let s: Vec<C64> =
            (0..4096).map(|j| C64::from_polar(1.0, 0.5 * j as f64 * dt) + C64::from_polar(0.3, 2.0 * j as f64 * dt)).collect();
        assert!(!dominant_frequency(&s, dt).unwrap().is_ambiguous());
    }

    #[test]
    fn fit_recovers_a_line() {
        // ω_n = -n f - 0.5 I_n
        let f = 0.25;
        let samples: Vec<(i32, f64, f64)> =
            [(-1, 0.2), (0, 0.5), (1, 0.3)].iter().map(|&(n, i)| (n, i, -(n as f64) * f - 0.5 * i)).collect();
        let fit = pulling_fit(&samples, f).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12);
        assert!(fit.intercept.abs() < 1e-12);
    }
}
