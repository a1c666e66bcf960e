//! Flat experiment configuration: documented `key = value` lines under
//! section headers, parsed as TOML. The only environment override honored
//! anywhere is `BDLAB_OUT` for the output directory.

use crate::error::{CoreError, Result};
use crate::rates::RateParams;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Scenario selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scenario {
    #[serde(rename = "bd-relax")]
    BdRelax,
    #[serde(rename = "bd-rescaled")]
    BdRescaled,
    #[serde(rename = "lsw")]
    Lsw,
    #[serde(rename = "converge")]
    Converge,
    #[serde(rename = "quasistat")]
    Quasistat,
    #[serde(rename = "network")]
    Network,
}

impl Scenario {
    pub fn tag(&self) -> &'static str {
        match self {
            Scenario::BdRelax => "bd-relax",
            Scenario::BdRescaled => "bd-rescaled",
            Scenario::Lsw => "lsw",
            Scenario::Converge => "converge",
            Scenario::Quasistat => "quasistat",
            Scenario::Network => "network",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RescaleConfig {
    /// Strictly decreasing ladder of scale parameters.
    pub eps_ladder: Vec<f64>,
    /// Cutoff exponent `x` in `(0, 1/2)`.
    pub cutoff_exponent: f64,
}

impl Default for RescaleConfig {
    fn default() -> Self {
        Self {
            eps_ladder: vec![0.2, 0.1, 0.05],
            cutoff_exponent: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    /// `equilibrium-bump`, `pure-monomer`, `log-uniform-particles`, or
    /// `bd-projected`.
    pub family: String,
    /// Excess mass carried by the bump or the particle cloud.
    pub excess_mass: f64,
    /// Bump center and half-width on the macroscopic size axis.
    pub bump_center: f64,
    pub bump_width: f64,
    /// Total mass of the pure-monomer family.
    pub rho_0: f64,
    /// Atom count for the log-uniform particle family.
    pub particle_count: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Dust cut for the bd-projected family: atoms below this size are
    /// dropped from the imported ensemble.
    pub lambda_cut: f64,
    /// When set, the lsw scenario reads its initial ensemble from this CSV
    /// snapshot (columns `lambda,mass`) instead of a generated family.
    #[serde(default)]
    pub ensemble_file: String,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self {
            family: "equilibrium-bump".into(),
            excess_mass: 40.0,
            bump_center: 2.5,
            bump_width: 1.0,
            rho_0: 2.0,
            particle_count: 24,
            lambda_lo: 0.5,
            lambda_hi: 4.0,
            lambda_cut: 0.4,
            ensemble_file: String::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntegratorConfig {
    pub t_final: f64,
    pub dt_init: f64,
    pub dt_min: f64,
    /// 0 means automatic: `t_final / 1024`.
    pub dt_max: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub sample_count: usize,
    /// Truncation length of the cluster system.
    pub truncation: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        Self {
            t_final: 3.0,
            dt_init: 1e-6,
            dt_min: 1e-13,
            dt_max: 0.0,
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            sample_count: 240,
            truncation: 320,
        }
    }
}

impl IntegratorConfig {
    pub fn step_controls(&self) -> crate::integrate::StepControls {
        crate::integrate::StepControls {
            dt_init: self.dt_init,
            dt_min: self.dt_min,
            dt_max: if self.dt_max > 0.0 {
                self.dt_max
            } else {
                self.t_final / 1024.0
            },
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_steps: 20_000_000,
        }
    }
}

/// Certification bounds; a run exits nonzero when any is exceeded.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CertifyConfig {
    pub mass_drift: f64,
    pub energy_dissipation_abs: f64,
    pub energy_dissipation_rel: f64,
    pub j_rel: f64,
    /// Weighted l1 distance to the equilibrium for subcritical relaxation;
    /// 0 disables the check.
    pub relax_l1: f64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        Self {
            mass_drift: 1e-8,
            energy_dissipation_abs: 1e-6,
            energy_dissipation_rel: 1e-3,
            j_rel: 1e-4,
            relax_l1: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    /// Path to the network description file, relative to the config file.
    pub file: String,
    pub t_final: f64,
    pub species_scale: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            file: "network.txt".into(),
            t_final: 2.0,
            species_scale: 1.0,
        }
    }
}

/// Full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: Scenario,
    pub seed: u64,
    #[serde(default = "default_rates")]
    pub rates: RateParams,
    #[serde(default)]
    pub rescale: RescaleConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub certify: CertifyConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    /// Output directory; overridable by `--out` or `BDLAB_OUT`.
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    /// Directory the config was loaded from, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn default_rates() -> RateParams {
    RateParams {
        alpha: 0.0,
        gamma: 0.5,
        z_s: 1.0,
        q: 1.0,
    }
}

fn default_out_dir() -> String {
    "out".into()
}

impl ExperimentConfig {
    #[allow(clippy::should_implement_trait)] // fallible ctor, not the parse trait
    pub fn from_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| CoreError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CoreError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let mut cfg = Self::from_str(&text)?;
        cfg.base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.rates.validate()?;
        if self.rescale.eps_ladder.is_empty() {
            return Err(CoreError::InvalidConfig("empty eps ladder".into()));
        }
        if !self.rescale.eps_ladder.windows(2).all(|w| w[1] < w[0]) {
            return Err(CoreError::InvalidConfig(
                "eps ladder must be strictly decreasing".into(),
            ));
        }
        for &e in &self.rescale.eps_ladder {
            crate::rescale::RescaleParams::new(e, self.rescale.cutoff_exponent)?;
        }
        if self.integrator.truncation < 3 {
            return Err(CoreError::InvalidConfig("truncation below 3".into()));
        }
        if !(self.integrator.t_final > 0.0) {
            return Err(CoreError::InvalidConfig("t_final must be positive".into()));
        }
        let known = [
            "equilibrium-bump",
            "pure-monomer",
            "log-uniform-particles",
            "bd-projected",
        ];
        if !known.contains(&self.initial.family.as_str()) {
            return Err(CoreError::UnknownFamily(self.initial.family.clone()));
        }
        Ok(())
    }

    /// Echo of the effective configuration for the summary document.
    pub fn echo(&self) -> String {
        toml::to_string(self).unwrap_or_else(|_| "<unserializable>".into())
    }
}
