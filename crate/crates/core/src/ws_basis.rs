//! Lowest-band Wannier-Stark states of the tilted lattice and their quartic
//! overlap tensor.
//!
//! The single-particle Hamiltonian `-∂²/(2m) + V₀cos(2πx) + Fx` is
//! discretized with second-order central differences inside a hard-walled
//! box. Each eigenvector is assigned to the well nearest its position
//! expectation; for every interior well the candidate with the lowest
//! Stark-shifted energy `E - nF` is its lowest-band state.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tridiag::SymTridiagonal;
use crate::units::{ModelParams, MASS};

#[derive(Debug, Error)]
pub enum BasisError {
    #[error("invalid bounding box: {0}")]
    InvalidBox(String),
    #[error("box too small: {interior} interior wells, need at least {required}")]
    BoxTooSmall { interior: usize, required: usize },
    #[error("no localized lowest band in well {well}: energy {energy:.6} is not below the barrier top {barrier:.6} (lattice too shallow)")]
    NoLocalizedBand { well: i32, energy: f64, barrier: f64 },
    #[error("no eigenstate is localized in well {well}; with zero tilt the states are extended Bloch waves")]
    Unassigned { well: i32 },
    #[error("cutoff radius {cutoff} needs well {well}, which is not in the basis")]
    CutoffTooLarge { cutoff: usize, well: i32 },
    #[error("translation check not applicable at well {0}: needed neighbors lie outside the basis")]
    NotApplicable(i32),
    #[error("basis file: {0}")]
    File(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Interior wells required for a usable basis.
pub const MIN_INTERIOR_WELLS: usize = 5;
pub const MIN_POINTS_PER_PERIOD: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoundingBox {
    pub well_count: usize,
    pub points_per_period: usize,
    /// Wells next to each wall that are excluded from the basis.
    pub margin: usize,
}

impl Default for BoundingBox {
    fn default() -> Self {
        BoundingBox { well_count: 41, points_per_period: 64, margin: 5 }
    }
}

impl BoundingBox {
    pub fn new(well_count: usize, points_per_period: usize) -> Self {
        BoundingBox { well_count, points_per_period, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), BasisError> {
        if self.well_count % 2 == 0 {
            return Err(BasisError::InvalidBox(format!("well_count must be odd, got {}", self.well_count)));
        }
        if self.points_per_period < MIN_POINTS_PER_PERIOD {
            return Err(BasisError::InvalidBox(format!(
                "points_per_period must be at least {MIN_POINTS_PER_PERIOD}, got {}",
                self.points_per_period
            )));
        }
        let interior = self.well_count.saturating_sub(2 * self.margin);
        if interior < MIN_INTERIOR_WELLS {
            return Err(BasisError::BoxTooSmall { interior, required: MIN_INTERIOR_WELLS });
        }
        Ok(())
    }

    pub fn half_width(&self) -> i32 {
        (self.well_count / 2) as i32
    }

    /// Largest well index kept in the basis.
    pub fn interior_radius(&self) -> i32 {
        self.half_width() - self.margin as i32
    }

    /// Wells with `|n| ≤ well_count/4`.
    pub fn central_radius(&self) -> i32 {
        (self.well_count / 4) as i32
    }
}

/// Uniform periodic grid spanning the box. Node 0 sits on the wall, which is
/// also the periodic image of the right wall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin: f64,
    pub spacing: f64,
    pub len: usize,
    pub points_per_period: usize,
}

impl Grid {
    pub fn for_box(bbox: &BoundingBox, v0: f64) -> Self {
        let origin = -(bbox.half_width() as f64) + well_center_offset(v0) - 0.5;
        Grid {
            origin,
            spacing: 1.0 / bbox.points_per_period as f64,
            len: bbox.well_count * bbox.points_per_period,
            points_per_period: bbox.points_per_period,
        }
    }

    pub fn x(&self, j: usize) -> f64 {
        self.origin + j as f64 * self.spacing
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.len).map(|j| self.x(j)).collect()
    }

    pub fn length(&self) -> f64 {
        self.len as f64 * self.spacing
    }

    pub fn compatible(&self, other: &Grid) -> bool {
        self.len == other.len
            && self.points_per_period == other.points_per_period
            && (self.origin - other.origin).abs() < 1e-12
            && (self.spacing - other.spacing).abs() < 1e-15
    }
}

/// Minimum of `V₀cos(2πx)` inside cell `n` sits at `n + offset`.
pub fn well_center_offset(v0: f64) -> f64 {
    if v0 >= 0.0 {
        0.5
    } else {
        0.0
    }
}

pub fn potential(params: &ModelParams, x: f64) -> f64 {
    params.v0 * (2.0 * PI * x).cos() + params.force * x
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsState {
    pub well_index: i32,
    pub energy: f64,
    /// Real samples on the full grid (zero on the wall node), unit norm.
    pub samples: Vec<f64>,
}

impl WsState {
    pub fn position_expectation(&self, grid: &Grid) -> f64 {
        self.samples.iter().enumerate().map(|(j, v)| grid.x(j) * v * v).sum::<f64>() * grid.spacing
    }

    pub fn norm_sqr(&self, grid: &Grid) -> f64 {
        self.samples.iter().map(|v| v * v).sum::<f64>() * grid.spacing
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsBasis {
    pub params: ModelParams,
    pub bbox: BoundingBox,
    pub grid: Grid,
    /// Ordered by well index, contiguous.
    pub states: Vec<WsState>,
}

impl WsBasis {
    pub fn first_well(&self) -> i32 {
        self.states[0].well_index
    }

    pub fn last_well(&self) -> i32 {
        self.states[self.states.len() - 1].well_index
    }

    pub fn state(&self, well: i32) -> Option<&WsState> {
        let idx = well - self.first_well();
        if idx < 0 {
            return None;
        }
        self.states.get(idx as usize)
    }

    pub fn contains(&self, well: i32) -> bool {
        self.state(well).is_some()
    }

    pub fn central_wells(&self) -> impl Iterator<Item = i32> {
        let r = self.bbox.central_radius().min(self.bbox.interior_radius());
        -r..=r
    }

    /// Largest `|E_{n+1} - E_n - F| / |F|` over consecutive wells in `wells`.
    pub fn ladder_deviation(&self, wells: std::ops::RangeInclusive<i32>) -> f64 {
        let f = self.params.force;
        let (lo, hi) = wells.into_inner();
        (lo..hi)
            .filter_map(|n| Some((self.state(n)?, self.state(n + 1)?)))
            .map(|(a, b)| ((b.energy - a.energy) - f).abs() / f.abs().max(f64::MIN_POSITIVE))
            .fold(0.0, f64::max)
    }

    /// `max_x |φ_{n+1}(x) - φ_n(x - 1)|`.
    pub fn translation_deviation(&self, n: i32) -> Option<f64> {
        let a = self.state(n)?;
        let b = self.state(n + 1)?;
        let shift = self.grid.points_per_period;
        let len = self.grid.len;
        let dev = (0..len - shift).map(|j| (b.samples[j + shift] - a.samples[j]).abs()).fold(0.0, f64::max);
        Some(dev)
    }

    /// `⟨φ_n|φ_m⟩` by grid quadrature.
    pub fn overlap(&self, n: i32, m: i32) -> Option<f64> {
        let a = self.state(n)?;
        let b = self.state(m)?;
        Some(a.samples.iter().zip(&b.samples).map(|(x, y)| x * y).sum::<f64>() * self.grid.spacing)
    }

    /// `∫ φ_a φ_b φ_c φ_d dx`.
    pub fn quartic_overlap(&self, wells: [i32; 4]) -> Option<f64> {
        let s = [self.state(wells[0])?, self.state(wells[1])?, self.state(wells[2])?, self.state(wells[3])?];
        let sum: f64 = (0..self.grid.len).map(|j| s[0].samples[j] * s[1].samples[j] * s[2].samples[j] * s[3].samples[j]).sum();
        Some(sum * self.grid.spacing)
    }

    pub fn content_hash(&self) -> String {
        content_hash(&self.params, &self.bbox)
    }
}

/// Finite-difference `H₀` on the interior nodes `1..len` of the box grid.
pub fn discretized_hamiltonian(params: &ModelParams, bbox: &BoundingBox) -> (Grid, SymTridiagonal) {
    let grid = Grid::for_box(bbox, params.v0);
    let h = grid.spacing;
    let kinetic = 1.0 / (2.0 * MASS * h * h);
    let diag: Vec<f64> = (1..grid.len).map(|j| 2.0 * kinetic + potential(params, grid.x(j))).collect();
    let off = vec![-kinetic; diag.len() - 1];
    (grid, SymTridiagonal::new(diag, off))
}

pub fn solve_ws_states(params: &ModelParams, bbox: &BoundingBox) -> Result<WsBasis, BasisError> {
    bbox.validate()?;
    let (grid, hamiltonian) = discretized_hamiltonian(params, bbox);
    let h = grid.spacing;
    let offset = well_center_offset(params.v0);
    // unknowns are nodes 1..len; node 0 and node len are the wall
    let xs: Vec<f64> = (1..grid.len).map(|j| grid.x(j)).collect();

    let radius = bbox.interior_radius();
    let barrier = |n: i32| {
        let center = n as f64 + offset;
        potential(params, center - 0.5).min(potential(params, center + 0.5))
    };
    let e_max = (-radius..=radius).map(barrier).fold(f64::NEG_INFINITY, f64::max);
    let v_min = xs.iter().map(|&x| potential(params, x)).fold(f64::INFINITY, f64::min);
    let pairs = hamiltonian.eigenpairs_in(v_min - 1.0, e_max);

    // (shifted energy, energy, vector) of the best candidate per well
    let mut best: BTreeMap<i32, (f64, f64, Vec<f64>)> = BTreeMap::new();
    for (energy, v) in pairs {
        let mean_x: f64 = xs.iter().zip(&v).map(|(x, c)| x * c * c).sum();
        let well = (mean_x - offset).round() as i32;
        if well.abs() > radius {
            continue;
        }
        let shifted = energy - params.force * well as f64;
        let replace = match best.get(&well) {
            None => true,
            Some((s, e, _)) => shifted < *s || (shifted == *s && energy < *e),
        };
        if replace {
            best.insert(well, (shifted, energy, v));
        }
    }

    let mut states = Vec::with_capacity((2 * radius + 1) as usize);
    for n in -radius..=radius {
        let Some((_, energy, v)) = best.remove(&n) else {
            return Err(BasisError::Unassigned { well: n });
        };
        if energy >= barrier(n) {
            return Err(BasisError::NoLocalizedBand { well: n, energy, barrier: barrier(n) });
        }
        let peak = v.iter().copied().fold(0.0f64, |m, c| if c.abs() > m.abs() { c } else { m });
        let sign = peak.signum();
        let scale = sign / h.sqrt();
        let mut samples = Vec::with_capacity(grid.len);
        samples.push(0.0);
        samples.extend(v.iter().map(|c| c * scale));
        states.push(WsState { well_index: n, energy, samples });
    }

    Ok(WsBasis { params: *params, bbox: *bbox, grid, states })
}

/// The three couplings kept by the nearest-neighbor model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NnChi {
    /// `χ₀₀₀`.
    pub on_site: f64,
    /// `χ₀₀₁`.
    pub forward: f64,
    /// `χ₀₀₋₁`.
    pub backward: f64,
}

impl NnChi {
    /// Same on-site term, inter-well couplings multiplied by `factor`.
    pub fn scaled_coupling(&self, factor: f64) -> Self {
        NnChi { on_site: self.on_site, forward: self.forward * factor, backward: self.backward * factor }
    }
}

/// `χ_{klm} = ∫ φ₀ φ_k φ_l φ_m dx`, stored for sorted triples only.
#[derive(Debug, Clone, PartialEq)]
pub struct ChiTensor {
    pub cutoff_radius: usize,
    entries: BTreeMap<[i32; 3], f64>,
}

pub fn canonical(k: i32, l: i32, m: i32) -> [i32; 3] {
    let mut t = [k, l, m];
    t.sort_unstable();
    t
}

impl ChiTensor {
    pub fn from_entries(cutoff_radius: usize, entries: impl IntoIterator<Item = ([i32; 3], f64)>) -> Self {
        let entries = entries.into_iter().map(|(t, v)| (canonical(t[0], t[1], t[2]), v)).collect();
        ChiTensor { cutoff_radius, entries }
    }

    /// Tensor holding only the nearest-neighbor couplings; the `(±1, ±1, ±1)`
    /// entries follow from translation, `χ₁₁₁ = χ₀₀₋₁` and `χ₋₁₋₁₋₁ = χ₀₀₁`.
    pub fn nearest_neighbor(nn: &NnChi) -> Self {
        Self::from_entries(
            1,
            [
                ([0, 0, 0], nn.on_site),
                ([0, 0, 1], nn.forward),
                ([0, 0, -1], nn.backward),
                ([1, 1, 1], nn.backward),
                ([-1, -1, -1], nn.forward),
            ],
        )
    }

    /// Zero for triples not stored.
    pub fn get(&self, k: i32, l: i32, m: i32) -> f64 {
        self.entries.get(&canonical(k, l, m)).copied().unwrap_or(0.0)
    }

    pub fn entries(&self) -> impl Iterator<Item = ([i32; 3], f64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nn(&self) -> NnChi {
        NnChi { on_site: self.get(0, 0, 0), forward: self.get(0, 0, 1), backward: self.get(0, 0, -1) }
    }
}

fn canonical_triples(radius: i32) -> Vec<[i32; 3]> {
    let mut out = Vec::new();
    for k in -radius..=radius {
        for l in k..=radius {
            for m in l..=radius {
                out.push([k, l, m]);
            }
        }
    }
    out
}

fn tensor_around(basis: &WsBasis, center: i32, cutoff: usize) -> Result<BTreeMap<[i32; 3], f64>, BasisError> {
    let r = cutoff as i32;
    for w in [center - r, center + r] {
        if !basis.contains(w) {
            return Err(BasisError::CutoffTooLarge { cutoff, well: w });
        }
    }
    Ok(canonical_triples(r)
        .into_iter()
        .map(|t| {
            let v = basis.quartic_overlap([center, center + t[0], center + t[1], center + t[2]]).expect("wells checked above");
            (t, v)
        })
        .collect())
}

pub fn chi_tensor(basis: &WsBasis, cutoff_radius: usize) -> Result<ChiTensor, BasisError> {
    if cutoff_radius == 0 {
        return Err(BasisError::InvalidBox("cutoff radius must be at least 1".into()));
    }
    let entries = tensor_around(basis, 0, cutoff_radius)?;
    Ok(ChiTensor { cutoff_radius, entries })
}

/// `max |χⁿ_{k+n,l+n,m+n} - χ_{klm}|` over the stored triples, with the left
/// side integrated directly from the states around well `n`.
pub fn verify_translation_identity(basis: &WsBasis, chi: &ChiTensor, n: i32) -> Result<f64, BasisError> {
    let r = chi.cutoff_radius as i32;
    if !basis.contains(n - r) || !basis.contains(n + r) {
        return Err(BasisError::NotApplicable(n));
    }
    let shifted = tensor_around(basis, n, chi.cutoff_radius)?;
    Ok(shifted.iter().map(|(t, v)| (v - chi.get(t[0], t[1], t[2])).abs()).fold(0.0, f64::max))
}

/// SHA-256 over the canonical JSON of `(params, bbox)`.
pub fn content_hash(params: &ModelParams, bbox: &BoundingBox) -> String {
    let payload = serde_json::to_vec(&(params, bbox)).expect("plain data serializes");
    hex::encode(Sha256::digest(&payload))
}

pub const BASIS_FORMAT: &str = "wschaos-basis/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiRecord {
    pub k: i32,
    pub l: i32,
    pub m: i32,
    pub value: f64,
}

/// On-disk form of a basis and its tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BasisFile {
    pub format: String,
    pub content_hash: String,
    pub params: ModelParams,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub grid: Grid,
    pub states: Vec<WsState>,
    pub chi_cutoff_radius: usize,
    pub chi: Vec<ChiRecord>,
}

impl BasisFile {
    pub fn new(basis: &WsBasis, chi: &ChiTensor) -> Self {
        BasisFile {
            format: BASIS_FORMAT.to_string(),
            content_hash: basis.content_hash(),
            params: basis.params,
            bbox: basis.bbox,
            grid: basis.grid,
            states: basis.states.clone(),
            chi_cutoff_radius: chi.cutoff_radius,
            chi: chi.entries().map(|(t, value)| ChiRecord { k: t[0], l: t[1], m: t[2], value }).collect(),
        }
    }

    pub fn into_parts(self) -> Result<(WsBasis, ChiTensor), BasisError> {
        if self.format != BASIS_FORMAT {
            return Err(BasisError::File(format!("unknown format `{}`", self.format)));
        }
        if self.content_hash != content_hash(&self.params, &self.bbox) {
            return Err(BasisError::File("content hash does not match params and box".into()));
        }
        if self.states.iter().any(|s| s.samples.len() != self.grid.len) {
            return Err(BasisError::File("state length does not match grid".into()));
        }
        let chi = ChiTensor::from_entries(self.chi_cutoff_radius, self.chi.iter().map(|r| ([r.k, r.l, r.m], r.value)));
        let basis = WsBasis { params: self.params, bbox: self.bbox, grid: self.grid, states: self.states };
        Ok((basis, chi))
    }

    pub fn write(&self, path: &Path) -> Result<(), BasisError> {
        fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, BasisError> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}
