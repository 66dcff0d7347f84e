//! Experiment configuration: a human-editable TOML document resolved into
//! the domain objects of [`fim_core`].
//!
//! Every field has a default, and the defaults reproduce the reference
//! simulation setup in full: an empty document is a valid, complete
//! configuration. The JSON sidecar written next to the results embeds the
//! resolved configuration, so any emitted artifact can be re-run verbatim.

use fim_core::{
    AoConfig, BeamformerKind, FimGeometry, MmseConfig, MorphConfig, ScenarioGeometry,
    SPEED_OF_LIGHT,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Carrier and receiver-noise description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub noise_density_dbm_per_hz: f64,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 28e9,
            bandwidth_hz: 1e8,
            noise_density_dbm_per_hz: -174.0,
        }
    }
}

/// Array layout and morphing range, with lengths in carrier wavelengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SurfaceConfig {
    pub n_x: usize,
    pub n_z: usize,
    pub dx_wavelengths: f64,
    pub dz_wavelengths: f64,
    pub morphing_range_wavelengths: f64,
}

impl Default for SurfaceConfig {
    fn default() -> Self {
        Self {
            n_x: 2,
            n_z: 3,
            dx_wavelengths: 0.5,
            dz_wavelengths: 0.5,
            morphing_range_wavelengths: 1.0,
        }
    }
}

/// Base-station placement and the served user region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub bs_height_m: f64,
    pub region_center_distance_m: f64,
    pub region_radius_m: f64,
    pub users: usize,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            bs_height_m: 5.0,
            region_center_distance_m: 20.0,
            region_radius_m: 10.0,
            users: 4,
        }
    }
}

/// Multipath count and large-scale fading law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelConfig {
    pub paths: usize,
    pub path_loss_exponent: f64,
    pub reference_distance_m: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            paths: 8,
            path_loss_exponent: 2.2,
            reference_distance_m: 1.0,
        }
    }
}

/// Per-user SINR requirement (identical for all users).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetConfig {
    pub sinr_db: f64,
}

impl Default for TargetConfig {
    fn default() -> Self {
        Self { sinr_db: 5.0 }
    }
}

/// The quantity varied across sweep points. `None` runs the single base
/// configuration and records per-iteration convergence traces instead of a
/// sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "axis", content = "values", rename_all = "kebab-case")]
pub enum Sweep {
    SinrDb(Vec<f64>),
    Paths(Vec<usize>),
    MorphingRange(Vec<f64>),
    #[default]
    None,
}

/// A transmit scheme: beamformer kind × whether the surface morphs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    MmseRigid,
    MmseFim,
    ZfRigid,
    ZfFim,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::MmseRigid,
        Scheme::MmseFim,
        Scheme::ZfRigid,
        Scheme::ZfFim,
    ];

    pub fn beamformer(self) -> BeamformerKind {
        match self {
            Scheme::MmseRigid | Scheme::MmseFim => BeamformerKind::Mmse,
            Scheme::ZfRigid | Scheme::ZfFim => BeamformerKind::Zf,
        }
    }

    pub fn morphs(self) -> bool {
        matches!(self, Scheme::MmseFim | Scheme::ZfFim)
    }

    pub fn name(self) -> &'static str {
        match self {
            Scheme::MmseRigid => "mmse-rigid",
            Scheme::MmseFim => "mmse-fim",
            Scheme::ZfRigid => "zf-rigid",
            Scheme::ZfFim => "zf-fim",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Trial count, seeding, and the schemes to run per trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub schemes: Vec<Scheme>,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schemes: Scheme::ALL.to_vec(),
            trials: 100,
            base_seed: 1,
        }
    }
}

/// Numeric knobs of the alternating optimizer; the beamformer kind and
/// morphing switch come from the scheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub max_outer_iters: usize,
    pub convergence_db: f64,
    pub initial_step: f64,
    pub backtrack_factor: f64,
    pub armijo_constant: f64,
    pub max_backtracks: usize,
    pub max_ascent_iters: usize,
    pub grad_tol: f64,
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        let ao = AoConfig::default();
        let morph = MorphConfig::default();
        let mmse = MmseConfig::default();
        Self {
            max_outer_iters: ao.max_outer_iters,
            convergence_db: ao.convergence_db,
            initial_step: morph.initial_step,
            backtrack_factor: morph.backtrack_factor,
            armijo_constant: morph.armijo_constant,
            max_backtracks: morph.max_backtracks,
            max_ascent_iters: morph.max_ascent_iters,
            grad_tol: morph.grad_tol,
            fp_tol: mmse.fp_tol,
            fp_max_iter: mmse.fp_max_iter,
        }
    }
}

impl OptimizerConfig {
    /// Assembles the optimizer configuration for one scheme.
    pub fn ao_config(&self, scheme: Scheme) -> AoConfig {
        AoConfig {
            beamformer: scheme.beamformer(),
            morph_enabled: scheme.morphs(),
            max_outer_iters: self.max_outer_iters,
            convergence_db: self.convergence_db,
            mmse: MmseConfig {
                fp_tol: self.fp_tol,
                fp_max_iter: self.fp_max_iter,
            },
            morph: MorphConfig {
                initial_step: self.initial_step,
                backtrack_factor: self.backtrack_factor,
                armijo_constant: self.armijo_constant,
                max_backtracks: self.max_backtracks,
                max_ascent_iters: self.max_ascent_iters,
                grad_tol: self.grad_tol,
            },
        }
    }
}

/// One resolved sweep point: the base configuration with the swept quantity
/// substituted. `label` is the value written to the `sweep_value` column.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub label: f64,
    pub sinr_db: f64,
    pub paths: usize,
    pub morphing_range_wavelengths: f64,
}

/// The complete experiment description. Defaults for every field; an empty
/// document reproduces the reference setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub surface: SurfaceConfig,
    pub scenario: ScenarioConfig,
    pub channel: ChannelConfig,
    pub targets: TargetConfig,
    pub sweep: Sweep,
    pub run: RunConfig,
    pub optimizer: OptimizerConfig,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |msg: String| Err(ConfigError::Invalid(msg));
        for (name, value) in [
            ("system.carrier_hz", self.system.carrier_hz),
            ("system.bandwidth_hz", self.system.bandwidth_hz),
            ("surface.dx_wavelengths", self.surface.dx_wavelengths),
            ("surface.dz_wavelengths", self.surface.dz_wavelengths),
            ("scenario.bs_height_m", self.scenario.bs_height_m),
            (
                "scenario.region_center_distance_m",
                self.scenario.region_center_distance_m,
            ),
            ("scenario.region_radius_m", self.scenario.region_radius_m),
            (
                "channel.path_loss_exponent",
                self.channel.path_loss_exponent,
            ),
            (
                "channel.reference_distance_m",
                self.channel.reference_distance_m,
            ),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return invalid(format!("{name} must be positive, got {value}"));
            }
        }
        let range = self.surface.morphing_range_wavelengths;
        if !(range.is_finite() && range >= 0.0) {
            return invalid(format!(
                "surface.morphing_range_wavelengths must be non-negative, got {range}"
            ));
        }
        if !self.targets.sinr_db.is_finite() {
            return invalid(format!(
                "targets.sinr_db must be finite, got {}",
                self.targets.sinr_db
            ));
        }
        for (name, value) in [
            ("surface.n_x", self.surface.n_x),
            ("surface.n_z", self.surface.n_z),
            ("scenario.users", self.scenario.users),
            ("channel.paths", self.channel.paths),
            ("run.trials", self.run.trials),
        ] {
            if value == 0 {
                return invalid(format!("{name} must be at least 1"));
            }
        }
        if self.run.schemes.is_empty() {
            return invalid("run.schemes must name at least one scheme".into());
        }
        for (i, scheme) in self.run.schemes.iter().enumerate() {
            if self.run.schemes[..i].contains(scheme) {
                return invalid(format!("run.schemes lists {scheme} twice"));
            }
        }
        match &self.sweep {
            Sweep::SinrDb(values) => {
                if values.is_empty() {
                    return invalid("sweep.values must be non-empty".into());
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return invalid("sweep.values must be finite".into());
                }
            }
            Sweep::Paths(values) => {
                if values.is_empty() {
                    return invalid("sweep.values must be non-empty".into());
                }
                if values.contains(&0) {
                    return invalid("sweep.values must be at least 1".into());
                }
            }
            Sweep::MorphingRange(values) => {
                if values.is_empty() {
                    return invalid("sweep.values must be non-empty".into());
                }
                if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                    return invalid("sweep.values must be non-negative".into());
                }
            }
            Sweep::None => {}
        }
        // Surface optimizer-field errors now rather than on the first trial.
        self.optimizer
            .ao_config(Scheme::MmseFim)
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.system.carrier_hz
    }

    pub fn geometry(&self) -> Result<FimGeometry, ConfigError> {
        let lambda = self.wavelength();
        FimGeometry::new(
            self.surface.n_x,
            self.surface.n_z,
            self.surface.dx_wavelengths * lambda,
            self.surface.dz_wavelengths * lambda,
            lambda,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn scenario_geometry(&self) -> Result<ScenarioGeometry, ConfigError> {
        ScenarioGeometry::new(
            self.scenario.bs_height_m,
            self.scenario.region_center_distance_m,
            self.scenario.region_radius_m,
            self.scenario.users,
        )
        .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    /// Whether this run records convergence traces instead of a sweep table.
    pub fn is_convergence_run(&self) -> bool {
        matches!(self.sweep, Sweep::None)
    }

    /// The resolved sweep points; a convergence run yields the single base
    /// point with a NaN label (nothing prints it).
    pub fn sweep_points(&self) -> Vec<SweepPoint> {
        let base = SweepPoint {
            label: f64::NAN,
            sinr_db: self.targets.sinr_db,
            paths: self.channel.paths,
            morphing_range_wavelengths: self.surface.morphing_range_wavelengths,
        };
        match &self.sweep {
            Sweep::SinrDb(values) => values
                .iter()
                .map(|&v| SweepPoint {
                    label: v,
                    sinr_db: v,
                    ..base
                })
                .collect(),
            Sweep::Paths(values) => values
                .iter()
                .map(|&v| SweepPoint {
                    label: v as f64,
                    paths: v,
                    ..base
                })
                .collect(),
            Sweep::MorphingRange(values) => values
                .iter()
                .map(|&v| SweepPoint {
                    label: v,
                    morphing_range_wavelengths: v,
                    ..base
                })
                .collect(),
            Sweep::None => vec![base],
        }
    }
}
