//! Parameter model and unit conversions.
//!
//! Normalized units: lengths in lattice periods `d = λ_L/2`, energies in
//! recoil energies `E_R`, times in `ħ/E_R`, forces in `2E_R/λ_L`, with
//! `ħ = 1`. The kinetic mass in these units is `π²/2`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ws_basis::NnChi;

/// Kinetic mass `m = π²/2` of the normalized wave equation.
pub const MASS: f64 = PI * PI / 2.0;

/// Default ceiling on `|g|` below which the single-band projection is trusted.
pub const DEFAULT_G_MAX: f64 = 1.0;

/// Rescaled runs with `epsilon` at or above this value are not quasi-integrable.
pub const EPSILON_WARN: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UnitsError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
    #[error("rescaling is undefined for g = 0; use raw-clock units")]
    RescalingUndefined,
    #[error("on-site overlap chi_000 must be positive, got {0}")]
    NonPositiveOnSite(f64),
}

/// Laboratory description of a quasi-1D condensate in a tilted lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabParams {
    /// s-wave scattering length `a_s` in meters.
    pub scattering_length: f64,
    pub atom_count: u64,
    /// Transverse size `L` of the cigar-shaped cloud in meters.
    pub transverse_length: f64,
    /// Lattice laser wavelength `λ_L` in meters.
    pub laser_wavelength: f64,
    /// Lattice depth `V₀` in recoil energies.
    pub lattice_depth: f64,
    /// Tilt `F` in units of `2E_R/λ_L`.
    pub tilt_force: f64,
}

impl LabParams {
    pub fn validate(&self) -> Result<(), UnitsError> {
        positive("scattering_length", self.scattering_length)?;
        positive("transverse_length", self.transverse_length)?;
        positive("laser_wavelength", self.laser_wavelength)?;
        finite("lattice_depth", self.lattice_depth)?;
        finite("tilt_force", self.tilt_force)
    }

    /// Lattice wave number `k_L = 2π/λ_L` in 1/m.
    pub fn wave_number(&self) -> f64 {
        2.0 * PI / self.laser_wavelength
    }
}

/// Normalized model parameters; the single source of truth for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub v0: f64,
    pub force: f64,
    pub g: f64,
    #[serde(default = "default_g_max")]
    pub g_max: f64,
}

fn default_g_max() -> f64 {
    DEFAULT_G_MAX
}

impl ModelParams {
    pub fn new(v0: f64, force: f64, g: f64) -> Result<Self, UnitsError> {
        Self::with_g_max(v0, force, g, DEFAULT_G_MAX)
    }

    pub fn with_g_max(v0: f64, force: f64, g: f64, g_max: f64) -> Result<Self, UnitsError> {
        let params = ModelParams { v0, force, g, g_max };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<(), UnitsError> {
        finite("v0", self.v0)?;
        finite("force", self.force)?;
        finite("g", self.g)?;
        positive("g_max", self.g_max)?;
        if self.g.abs() > self.g_max {
            return Err(UnitsError::InvalidParameter {
                name: "g",
                reason: format!("|g| = {} exceeds g_max = {}", self.g.abs(), self.g_max),
            });
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        MASS
    }

    /// Bloch angular frequency `ω_B = F d/ħ`, which is `F` in normalized units.
    pub fn bloch_frequency(&self) -> f64 {
        self.force
    }

    pub fn bloch_period(&self) -> f64 {
        2.0 * PI / self.force.abs()
    }

    /// Frequency-pulling slope `U₀χ₀₀₀/ħ`; `U₀` is `g` in normalized units.
    pub fn pulling_slope(&self, chi000: f64) -> f64 {
        self.g * chi000
    }
}

/// Quantities of the rescaled action-angle equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RescaledParams {
    /// `F/(|g|χ₀₀₀)`.
    pub force_rescaled: f64,
    pub sigma_g: f64,
    /// `χ₀₀₁/χ₀₀₋₁`.
    pub beta: f64,
    /// `χ₀₀₋₁/χ₀₀₀`.
    pub epsilon: f64,
    /// Raw time per unit of rescaled time, `1/(|g|χ₀₀₀)`.
    pub time_scale: f64,
}

impl RescaledParams {
    pub fn to_raw_time(&self, rescaled: f64) -> f64 {
        rescaled * self.time_scale
    }

    pub fn to_rescaled_time(&self, raw: f64) -> f64 {
        raw / self.time_scale
    }

    pub fn is_quasi_integrable(&self) -> bool {
        self.epsilon.abs() < EPSILON_WARN
    }

    /// Copy with all inter-well couplings switched off.
    pub fn integrable(&self) -> Self {
        RescaledParams { epsilon: 0.0, ..*self }
    }
}

/// `g = 8 a_s N/(L² k_L)`; depth and tilt pass through unchanged.
pub fn lab_to_normalized(lab: &LabParams) -> Result<ModelParams, UnitsError> {
    lab_to_normalized_with_ceiling(lab, DEFAULT_G_MAX)
}

pub fn lab_to_normalized_with_ceiling(lab: &LabParams, g_max: f64) -> Result<ModelParams, UnitsError> {
    lab.validate()?;
    let g = 8.0 * lab.scattering_length * lab.atom_count as f64 / (lab.transverse_length.powi(2) * lab.wave_number());
    ModelParams::with_g_max(lab.lattice_depth, lab.tilt_force, g, g_max)
}

pub fn rescale(params: &ModelParams, chi: &NnChi) -> Result<RescaledParams, UnitsError> {
    if params.g == 0.0 {
        return Err(UnitsError::RescalingUndefined);
    }
    if !(chi.on_site > 0.0) {
        return Err(UnitsError::NonPositiveOnSite(chi.on_site));
    }
    let unit = params.g.abs() * chi.on_site;
    // with both inter-well couplings switched off beta is irrelevant
    let beta = if chi.forward == 0.0 && chi.backward == 0.0 { 0.0 } else { chi.forward / chi.backward };
    let rp = RescaledParams {
        force_rescaled: params.force / unit,
        sigma_g: params.g.signum(),
        beta,
        epsilon: chi.backward / chi.on_site,
        time_scale: 1.0 / unit,
    };
    if !rp.is_quasi_integrable() {
        log::warn!("epsilon = {:.4} is not small; the quasi-integrable picture does not apply", rp.epsilon);
    }
    Ok(rp)
}

fn positive(name: &'static str, value: f64) -> Result<(), UnitsError> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(UnitsError::InvalidParameter { name, reason: format!("must be positive, got {value}") })
    }
}

fn finite(name: &'static str, value: f64) -> Result<(), UnitsError> {
    if value.is_finite() {
        Ok(())
    } else {
        Err(UnitsError::InvalidParameter { name, reason: format!("must be finite, got {value}") })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Rb-87 in an 852 nm lattice with a 20 µm transverse size.
    pub(crate) fn rubidium(atom_count: u64) -> LabParams {
        LabParams {
            scattering_length: 5.3e-9,
            atom_count,
            transverse_length: 20e-6,
            laser_wavelength: 852e-9,
            lattice_depth: 5.0,
            tilt_force: 0.25,
        }
    }

    fn rounded_chi() -> NnChi {
        NnChi { on_site: 1.99, forward: -0.16, backward: 0.15 }
    }

    #[test]
    fn no_atoms_no_interaction() {
        let p = lab_to_normalized(&rubidium(0)).unwrap();
        assert_eq!(p.g, 0.0);
        assert_eq!(p.v0, 5.0);
        assert_eq!(p.force, 0.25);
    }

    #[test]
    fn g_is_linear_in_atom_count() {
        let a = lab_to_normalized(&rubidium(30_000)).unwrap();
        let b = lab_to_normalized(&rubidium(60_000)).unwrap();
        assert_relative_eq!(b.g, 2.0 * a.g, max_relative = 1e-15);
    }

    #[test]
    fn typical_condensate_gives_unit_nonlinearity() {
        // 8 * 5.3e-9 * 7e4 / ((20e-6)^2 * 2π/852e-9) = 1.00449...
        let p = lab_to_normalized_with_ceiling(&rubidium(70_000), 1.1).unwrap();
        let k = 2.0 * PI / 852e-9;
        let expected = 8.0 * 5.3e-9 * 7.0e4 / (400e-12 * k);
        assert_relative_eq!(p.g, expected, max_relative = 1e-14);
        assert!((p.g - 1.0).abs() < 0.01, "g = {}", p.g);
    }

    #[test]
    fn non_positive_lengths_rejected() {
        let mut lab = rubidium(1000);
        lab.transverse_length = 0.0;
        assert!(matches!(lab_to_normalized(&lab), Err(UnitsError::InvalidParameter { name: "transverse_length", .. })));
        let mut lab = rubidium(1000);
        lab.laser_wavelength = -1.0;
        assert!(lab_to_normalized(&lab).is_err());
    }

    #[test]
    fn g_ceiling_enforced() {
        assert!(ModelParams::new(5.0, 0.25, 1.5).is_err());
        assert!(ModelParams::with_g_max(5.0, 0.25, 1.5, 2.0).is_ok());
        assert_eq!(ModelParams::new(5.0, 0.25, -1.0).unwrap().mass(), PI * PI / 2.0);
    }

    #[test]
    fn rescaled_reference_values() {
        let p = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        let rp = rescale(&p, &rounded_chi()).unwrap();
        assert_relative_eq!(rp.force_rescaled, 0.25 / (0.25 * 1.99), max_relative = 1e-15);
        assert!((rp.force_rescaled - 0.5025).abs() < 1e-4);
        assert!((rp.epsilon - 0.0754).abs() < 1e-4);
        assert!((rp.beta + 1.0667).abs() < 1e-4);
        assert_eq!(rp.sigma_g, 1.0);
        assert!(rp.is_quasi_integrable());
    }

    #[test]
    fn attractive_sign() {
        let p = ModelParams::new(5.0, 0.25, -0.25).unwrap();
        assert_eq!(rescale(&p, &rounded_chi()).unwrap().sigma_g, -1.0);
    }

    #[test]
    fn zero_g_cannot_rescale() {
        let p = ModelParams::new(5.0, 0.25, 0.0).unwrap();
        assert_eq!(rescale(&p, &rounded_chi()), Err(UnitsError::RescalingUndefined));
    }

    #[test]
    fn decoupled_chi_has_finite_beta() {
        let p = ModelParams::new(5.0, 0.25, 0.25).unwrap();
        let rp = rescale(&p, &rounded_chi().scaled_coupling(0.0)).unwrap();
        assert_eq!((rp.epsilon, rp.beta), (0.0, 0.0));
    }

    #[test]
    fn clock_round_trip() {
        let p = ModelParams::new(5.0, 0.25, 0.37).unwrap();
        let rp = rescale(&p, &rounded_chi()).unwrap();
        for raw in [0.0, 1e-3, 1.0, 123.456, 1e5] {
            let back = rp.to_raw_time(rp.to_rescaled_time(raw));
            assert_relative_eq!(back, raw, max_relative = 1e-15);
        }
    }
}
