//! Detection of island chains around a rational rotation number.
//!
//! A coarse sweep of the launch line brackets every place where the
//! rotation number passes `p/q`; each bracket is then resampled finely and
//! an orbit is taken as part of the chain when its rotation locks to `p/q`
//! and its angle coordinates gather into exactly `q` arcs. A torus that only
//! passes near `p/q` can look the same over a finite orbit, so a bracket is
//! kept only when its candidates form a plateau: their rotation must vary
//! with launch far more slowly than across the bracket as a whole.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::section::{cluster_count, orbit, Orbit, OrbitStatus, SectionSpec};
use super::AnalysisError;
use crate::lattice::LatticeSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IslandSearch {
    /// Launch values on the coarse grid.
    pub coarse: usize,
    /// Launch values inside each bracket.
    pub fine: usize,
    /// Largest `|ρ - p/q|` that counts as locked.
    pub lock_tol: f64,
    /// Largest ratio of the plateau slope to the bracket slope.
    pub max_slope_ratio: f64,
}

impl Default for IslandSearch {
    fn default() -> Self {
        IslandSearch { coarse: 81, fine: 41, lock_tol: 1e-3, max_slope_ratio: 0.25 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandOrbit {
    pub launch: f64,
    pub rotation: f64,
    pub clusters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bracket {
    pub lo: f64,
    pub hi: f64,
    /// `dρ/dx` between the bracket ends.
    pub slope: f64,
    /// `dρ/dx` fitted through the locked candidates, when there are enough.
    pub plateau_slope: Option<f64>,
    pub candidates: Vec<IslandOrbit>,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IslandFamily {
    pub p: u32,
    pub q: u32,
    /// Coarse-grid launches whose rotation numbers bracket `p/q`.
    pub brackets: Vec<Bracket>,
    /// Orbits that lock to `p/q` with `q` clusters, in launch order.
    pub members: Vec<IslandOrbit>,
}

impl IslandFamily {
    pub fn is_found(&self) -> bool {
        !self.members.is_empty()
    }

    /// Launch range covered by the members.
    pub fn extent(&self) -> Option<(f64, f64)> {
        Some((self.members.first()?.launch, self.members.last()?.launch))
    }
}

fn sweep(spec: &SectionSpec, system: &LatticeSystem, xs: &[f64]) -> Result<Vec<Orbit>, AnalysisError> {
    xs.par_iter().map(|&x| orbit(spec, system, x)).collect()
}

fn slope(points: &[IslandOrbit]) -> Option<f64> {
    if points.len() < 3 {
        return None;
    }
    let m = points.len() as f64;
    let mx = points.iter().map(|o| o.launch).sum::<f64>() / m;
    let my = points.iter().map(|o| o.rotation).sum::<f64>() / m;
    let sxx: f64 = points.iter().map(|o| (o.launch - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|o| (o.launch - mx) * (o.rotation - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let n = n.max(2);
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

/// Search `range` of the launch line for the `p/q` island chain.
pub fn find_island_family(
    spec: &SectionSpec,
    system: &LatticeSystem,
    p: u32,
    q: u32,
    range: (f64, f64),
    search: &IslandSearch,
) -> Result<IslandFamily, AnalysisError> {
    if q == 0 || p >= q {
        return Err(AnalysisError::InvalidSpec(format!("{p}/{q} is not a rotation number in [0, 1)")));
    }
    if !(range.0 < range.1) || search.coarse < 2 || search.fine < 2 {
        return Err(AnalysisError::InvalidSpec("island search needs a nonempty range and at least two points per grid".into()));
    }
    let target = p as f64 / q as f64;
    let offset = |o: &Orbit| match o.status {
        OrbitStatus::Complete | OrbitStatus::Horizon => o.rotation_number().map(|r| r - target),
        _ => None,
    };

    let xs = grid(range.0, range.1, search.coarse);
    let coarse = sweep(spec, system, &xs)?;
    let mut brackets = Vec::new();
    for (w, x) in coarse.windows(2).zip(xs.windows(2)) {
        if let (Some(a), Some(b)) = (offset(&w[0]), offset(&w[1])) {
            // a jump across the fold at 0/1 is not a passage through p/q
            if a.signum() != b.signum() && (a - b).abs() < 0.25 {
                brackets.push(Bracket {
                    lo: x[0],
                    hi: x[1],
                    slope: (b - a) / (x[1] - x[0]),
                    plateau_slope: None,
                    candidates: Vec::new(),
                    accepted: false,
                });
            }
        }
    }

    let mut members = Vec::new();
    for br in &mut brackets {
        for o in sweep(spec, system, &grid(br.lo, br.hi, search.fine))? {
            let Some(d) = offset(&o) else { continue };
            let clusters = cluster_count(&o.axis(1));
            if d.abs() < search.lock_tol && clusters == q as usize {
                br.candidates.push(IslandOrbit { launch: o.launch, rotation: d + target, clusters });
            }
        }
        br.plateau_slope = slope(&br.candidates);
        br.accepted = br.plateau_slope.is_some_and(|s| s.abs() <= search.max_slope_ratio * br.slope.abs());
        if br.accepted {
            members.extend(br.candidates.iter().cloned());
        }
    }
    members.sort_by(|a, b| a.launch.total_cmp(&b.launch));
    members.dedup_by(|a, b| a.launch == b.launch);
    Ok(IslandFamily { p, q, brackets, members })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IslandCenter {
    pub launch: f64,
    /// Spread of the first axis on the orbit launched there.
    pub spread: f64,
}

/// Launch with the smallest first-axis spread on `range`, on a grid of
/// `count` points refined once around the best one. Near the elliptic orbit
/// at the heart of an island the crossings shrink onto a single point.
pub fn island_center(
    spec: &SectionSpec,
    system: &LatticeSystem,
    range: (f64, f64),
    count: usize,
) -> Result<Option<IslandCenter>, AnalysisError> {
    if !(range.0 < range.1) || count < 3 {
        return Err(AnalysisError::InvalidSpec("center search needs a nonempty range and at least three points".into()));
    }
    let best = |xs: &[f64]| -> Result<Option<IslandCenter>, AnalysisError> {
        Ok(sweep(spec, system, xs)?
            .iter()
            .filter(|o| o.status == OrbitStatus::Complete)
            .map(|o| IslandCenter { launch: o.launch, spread: o.spread() })
            .min_by(|a, b| a.spread.total_cmp(&b.spread)))
    };
    let Some(coarse) = best(&grid(range.0, range.1, count))? else {
        return Ok(None);
    };
    let h = (range.1 - range.0) / (count - 1) as f64;
    let fine = best(&grid((coarse.launch - h).max(range.0), (coarse.launch + h).min(range.1), count))?;
    Ok(fine.filter(|f| f.spread < coarse.spread).or(Some(coarse)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Clock;
    use crate::units::ModelParams;
    use crate::ws_basis::NnChi;

    #[test]
    fn decoupled_flow_has_no_chain() {
        let chi = NnChi { on_site: 1.99, forward: 0.0, backward: 0.0 };
        let sys = LatticeSystem::new(ModelParams::new(5.0, 0.25, 0.25).unwrap(), chi, -1..=1, Clock::Rescaled).unwrap();
        let spec = SectionSpec { max_crossings: 100, ..SectionSpec::default() };
        let search = IslandSearch { coarse: 21, fine: 11, ..Default::default() };
        let seed = crate::analysis::rotation_locus(1, 3, &spec, &sys.rescaled_params().unwrap())[0];
        let fam = find_island_family(&spec, &sys, 1, 3, (seed - 0.01, seed + 0.01), &search).unwrap();
        // the rotation passes 1/3 but tori of a decoupled flow fill the circle
        assert!(!fam.brackets.is_empty());
        assert!(!fam.is_found());
    }

    #[test]
    fn rejects_improper_fractions() {
        let chi = NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 };
        let sys = LatticeSystem::new(ModelParams::new(5.0, 0.25, 0.25).unwrap(), chi, -1..=1, Clock::Rescaled).unwrap();
        assert!(find_island_family(&SectionSpec::default(), &sys, 3, 3, (0.1, 0.2), &IslandSearch::default()).is_err());
    }
}
