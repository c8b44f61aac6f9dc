//! Run configuration: one TOML file per study, with dotted-key overrides
//! applied on top before it is checked.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wschaos::analysis::{IslandSearch, LaunchPlane, LyapunovSettings, SectionSpec};
use wschaos::gpe::GpeSettings;
use wschaos::lattice::{Form, Preparation};
use wschaos::ode::Method;
use wschaos::units::{lab_to_normalized_with_ceiling, LabParams, ModelParams, DEFAULT_G_MAX};
use wschaos::ws_basis::{BoundingBox, NnChi};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Normalized parameters; exactly one of `params` and `lab` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lab: Option<LabParams>,
    /// Interaction ceiling applied when converting `lab`.
    #[serde(default = "default_g_max")]
    pub g_max: f64,
    #[serde(rename = "box", default)]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub basis: BasisConfig,
    #[serde(default = "Preparation::twelve_wells")]
    pub preparation: Preparation,
    #[serde(default)]
    pub run: RunSettings,
    #[serde(default)]
    pub section: SectionConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub resonances: ResonanceConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

fn default_g_max() -> f64 {
    DEFAULT_G_MAX
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Basis file to load instead of diagonalizing; relative paths are
    /// taken from the output directory.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    pub chi_cutoff: usize,
    /// Fixed couplings for the mode model in place of the computed ones.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chi: Option<NnChi>,
}

impl Default for BasisConfig {
    fn default() -> Self {
        BasisConfig { file: None, chi_cutoff: 2, chi: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Model,
    Gpe,
    Both,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSettings {
    pub solver: SolverChoice,
    /// End time in normalized units; overrides `bloch_periods`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    pub bloch_periods: f64,
    /// Sample count including `t = 0`.
    pub samples: usize,
    pub tol: f64,
    pub method: Method,
    pub form: Form,
    /// Mode window `[first, last]`; by default the preparation plus two
    /// wells on each side.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wells: Option<[i32; 2]>,
    /// Wells in the solver comparison.
    pub report_wells: Vec<i32>,
    pub coupling_scale: f64,
    pub gpe: GpeSettings,
}

impl Default for RunSettings {
    fn default() -> Self {
        RunSettings {
            solver: SolverChoice::Model,
            horizon: None,
            bloch_periods: 3.0,
            samples: 301,
            tol: 1e-10,
            method: Method::Dop853,
            form: Form::Amplitude,
            wells: None,
            report_wells: vec![-1, 0, 1],
            coupling_scale: 1.0,
            gpe: GpeSettings::default(),
        }
    }
}

impl RunSettings {
    pub fn horizon(&self, params: &ModelParams) -> f64 {
        self.horizon.unwrap_or(self.bloch_periods * params.bloch_period())
    }
}

/// Launch values: an explicit list, or `count` evenly spaced points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Launches {
    pub from: f64,
    pub to: f64,
    pub count: usize,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub values: Vec<f64>,
}

impl Default for Launches {
    fn default() -> Self {
        Launches { from: 0.02, to: 0.88, count: 44, values: Vec::new() }
    }
}

impl Launches {
    pub fn values(&self) -> Vec<f64> {
        if !self.values.is_empty() {
            return self.values.clone();
        }
        match self.count {
            0 => Vec::new(),
            1 => vec![self.from],
            n => (0..n).map(|k| self.from + (self.to - self.from) * k as f64 / (n - 1) as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IslandQuery {
    pub p: u32,
    pub q: u32,
    pub from: f64,
    pub to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SectionConfig {
    pub spec: SectionSpec,
    pub launches: Launches,
    pub coupling_scale: f64,
    pub islands: Vec<IslandQuery>,
    pub island_search: IslandSearch,
}

impl Default for SectionConfig {
    fn default() -> Self {
        SectionConfig {
            spec: SectionSpec::default(),
            launches: Launches::default(),
            coupling_scale: 1.0,
            islands: Vec::new(),
            island_search: IslandSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LyapunovConfig {
    pub settings: LyapunovSettings,
    pub plane: LaunchPlane,
    pub launches: Launches,
    pub coupling_scale: f64,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        LyapunovConfig {
            settings: LyapunovSettings::default(),
            plane: LaunchPlane::default(),
            launches: Launches { count: 12, ..Launches::default() },
            coupling_scale: 1.0,
        }
    }
}

/// `ω_n/ω_m = a/b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrequencyRatio {
    pub a: u32,
    pub b: u32,
    pub n: i32,
    pub m: i32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResonanceConfig {
    pub ratios: Vec<FrequencyRatio>,
    /// Section rotation numbers `[p, q]` to locate in the decoupled flow.
    pub rotations: Vec<[u32; 2]>,
}

impl Default for ResonanceConfig {
    fn default() -> Self {
        ResonanceConfig { ratios: vec![FrequencyRatio { a: 1, b: 1, n: 0, m: 1 }], rotations: vec![[1, 3], [1, 5]] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Two-column files per orbit next to the section table.
    pub plot_files: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { dir: PathBuf::from("out"), plot_files: true }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        Self::with_overrides(text, &[])
    }

    /// Parse `text`, apply `key.path=value` overrides, then validate.
    pub fn with_overrides(text: &str, overrides: &[String]) -> Result<Self, CliError> {
        let mut table: toml::Table = text.parse().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table).try_into().map_err(|e| CliError::Usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        Self::with_overrides(&text, overrides)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        match (&self.params, &self.lab) {
            (Some(_), Some(_)) => return Err(CliError::Usage("give either [params] or [lab], not both".into())),
            (None, None) => return Err(CliError::Usage("missing [params] or [lab]".into())),
            _ => {}
        }
        self.model_params()?;
        self.preparation.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let r = &self.run;
        if !(r.tol > 0.0) {
            return Err(CliError::Usage("run.tol must be positive".into()));
        }
        if r.horizon.is_some_and(|h| !(h >= 0.0)) || !(r.bloch_periods >= 0.0) {
            return Err(CliError::Usage("run horizon must be non-negative".into()));
        }
        if r.samples == 0 {
            return Err(CliError::Usage("run.samples must be at least 1".into()));
        }
        if let Some([lo, hi]) = r.wells {
            if lo > hi {
                return Err(CliError::Usage(format!("run.wells [{lo}, {hi}] is empty")));
            }
        }
        r.gpe.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(())
    }

    pub fn model_params(&self) -> Result<ModelParams, CliError> {
        let p = match (&self.params, &self.lab) {
            (Some(p), _) => {
                p.validate().map_err(|e| CliError::Usage(e.to_string()))?;
                *p
            }
            (None, Some(lab)) => lab_to_normalized_with_ceiling(lab, self.g_max).map_err(|e| CliError::Usage(e.to_string()))?,
            (None, None) => return Err(CliError::Usage("missing [params] or [lab]".into())),
        };
        Ok(p)
    }

    /// Mode window for model runs.
    pub fn model_wells(&self) -> (i32, i32) {
        self.run.wells.map(|[a, b]| (a, b)).unwrap_or_else(|| {
            let (lo, hi) = self.preparation.span();
            (lo - 2, hi + 2)
        })
    }
}

fn parse_value(raw: &str) -> toml::Value {
    match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set a dotted key, creating intermediate tables as needed. Values are
/// read as TOML and fall back to plain strings.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| CliError::Usage(format!("override `{spec}` is not key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("override key `{key}` is malformed")));
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry.as_table_mut().ok_or_else(|| CliError::Usage(format!("override `{key}`: `{part}` is not a table")))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}
