//! Phase-space cartography of the mode model: surfaces of section, largest
//! Lyapunov exponents, resonance loci and spectral frequency estimates.

use thiserror::Error;

use crate::lattice::LatticeError;
use crate::ode::OdeError;

mod islands;
mod lyapunov;
mod resonance;
mod section;
mod spectrum;

pub use islands::{find_island_family, island_center, Bracket, IslandCenter, IslandFamily, IslandOrbit, IslandSearch};
pub use lyapunov::{lyapunov_map, lyapunov_max, Classification, LyapunovResult, LyapunovSettings};
pub use resonance::{integrable_rotation, ratio_approx, resonance_locus, rotation_locus, Locus, LocusSolution};
pub use section::{
    cluster_count, orbit, poincare_section, Direction, LaunchPlane, Observable, Orbit, OrbitStatus, PoincareSection, SectionSpec, Trigger,
};
pub use spectrum::{dominant_frequency, mode_frequencies, pulling_fit, FrequencyEstimate, PullingFit};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("invalid launch: {0}")]
    InvalidLaunch(String),
    #[error("invalid section spec: {0}")]
    InvalidSpec(String),
    #[error("spectral analysis: {0}")]
    Spectrum(String),
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error(transparent)]
    Ode(#[from] OdeError),
}
