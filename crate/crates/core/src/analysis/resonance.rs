//! Resonance conditions of the decoupled flow, where `ω_n = -nF - σI_n`.

use serde::{Deserialize, Serialize};

use super::section::{Direction, LaunchPlane, Observable, SectionSpec};
use super::AnalysisError;
use crate::units::RescaledParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocusSolution {
    /// Value of the scanned action on the launch line.
    pub scanned: f64,
    /// `(well, I)` for every plane well at that point.
    pub actions: Vec<(i32, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Locus {
    At(LocusSolution),
    /// The condition has no solution with all actions inside `[0, total]`.
    None {
        reason: String,
    },
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Decoupled frequency of well `k` along the line, as `α + γ·x`.
fn omega(plane: &LaunchPlane, rp: &RescaledParams, well: i32) -> (f64, f64) {
    let (_, p, q) = plane.affine_actions().into_iter().find(|(n, _, _)| *n == well).unwrap_or((well, 0.0, 0.0));
    (-(well as f64) * rp.force_rescaled - rp.sigma_g * p, -rp.sigma_g * q)
}

fn solution(plane: &LaunchPlane, x: f64) -> Locus {
    let actions: Vec<(i32, f64)> = plane.affine_actions().into_iter().map(|(n, p, q)| (n, p + q * x)).collect();
    if x.is_finite() && actions.iter().all(|&(_, a)| (-1e-12..=plane.total + 1e-12).contains(&a)) {
        Locus::At(LocusSolution { scanned: x, actions })
    } else {
        Locus::None { reason: format!("solution I[{}] = {x} leaves the physical simplex", plane.scanned) }
    }
}

/// Point on the launch line where `ω_n/ω_m = a/b`, i.e. `b·ω_n = a·ω_m`.
/// For `a = b = 1`, `n = 0`, `m = 1` this is `F = σ(I₀ - I₁)`.
pub fn resonance_locus(a: u32, b: u32, n: i32, m: i32, rp: &RescaledParams, plane: &LaunchPlane) -> Result<Locus, AnalysisError> {
    if a == 0 || b == 0 || gcd(a, b) != 1 {
        return Err(AnalysisError::InvalidSpec(format!("{a}:{b} is not a ratio of coprime positive integers")));
    }
    plane.validate()?;
    let (an, gn) = omega(plane, rp, n);
    let (am, gm) = omega(plane, rp, m);
    let (a, b) = (a as f64, b as f64);
    // b(α_n + γ_n x) = a(α_m + γ_m x)
    let denom = b * gn - a * gm;
    if denom == 0.0 {
        return Ok(Locus::None { reason: "the frequency ratio does not vary along the launch line".into() });
    }
    Ok(solution(plane, (a * am - b * an) / denom))
}

/// Winding per crossing of the recorded angle in the decoupled flow: the
/// recorded difference turns at `ω_c - ω_d` while crossings recur every
/// `2π/|ω_a - ω_b|`.
pub fn integrable_rotation(spec: &SectionSpec, rp: &RescaledParams, x: f64) -> Option<f64> {
    let (num, den) = rotation_parts(spec, rp)?;
    let d = den.0 + den.1 * x;
    (d != 0.0).then(|| (num.0 + num.1 * x) / d.abs())
}

type Affine = (f64, f64);

fn rotation_parts(spec: &SectionSpec, rp: &RescaledParams) -> Option<(Affine, Affine)> {
    let Observable::AngleDiff(c, d) = spec.record_axes[1] else {
        return None;
    };
    let plane = &spec.plane;
    let diff = |p: i32, q: i32| {
        let (x, y) = (omega(plane, rp, p), omega(plane, rp, q));
        (x.0 - y.0, x.1 - y.1)
    };
    let mut trig = diff(spec.trigger.a, spec.trigger.b);
    if spec.trigger.direction == Direction::Negative {
        trig = (-trig.0, -trig.1);
    }
    Some((diff(c, d), trig))
}

/// Launch values where the decoupled rotation number equals `p/q` modulo 1.
/// Only stretches of the line where crossings happen in the requested
/// direction are searched.
pub fn rotation_locus(p: u32, q: u32, spec: &SectionSpec, rp: &RescaledParams) -> Vec<f64> {
    let Some((num, den)) = rotation_parts(spec, rp) else {
        return Vec::new();
    };
    let span = spec.plane.span();
    // keep the interval where the trigger speed has the right sign
    let (lo, hi) = {
        let (d0, d1) = (den.0, den.0 + den.1 * span);
        match (d0 > 0.0, d1 > 0.0) {
            (true, true) => (0.0, span),
            (false, false) => return Vec::new(),
            _ => {
                let root = -den.0 / den.1;
                if d0 > 0.0 {
                    (0.0, root)
                } else {
                    (root, span)
                }
            }
        }
    };
    let nu = |x: f64| (num.0 + num.1 * x) / (den.0 + den.1 * x);
    let eps = 1e-12 * span;
    let (a, b) = (nu(lo + eps), nu(hi - eps));
    let (rmin, rmax) = (a.min(b), a.max(b));
    let target = p as f64 / q as f64;
    let mut out = Vec::new();
    let k_start = (rmin - target).ceil() as i64;
    let k_end = (rmax - target).floor() as i64;
    for k in k_start..=k_end.min(k_start + 10_000) {
        let r = target + k as f64;
        // num(x) = r·den(x)
        let x = (r * den.0 - num.0) / (num.1 - r * den.1);
        if x.is_finite() && x > lo && x < hi {
            out.push(x);
        }
    }
    out.sort_by(f64::total_cmp);
    out
}

/// Best rational approximation with denominator at most `q_max`,
/// by brute force over denominators.
pub fn ratio_approx(x: f64, q_max: u32) -> (u32, u32, f64) {
    let mut best = (0, 1, f64::INFINITY);
    for q in 1..=q_max.max(1) {
        let p = (x * q as f64).round().max(0.0) as u32;
        let err = (x - p as f64 / q as f64).abs();
        if err < best.2 - 1e-15 {
            best = (p, q, err);
        }
    }
    best
}
