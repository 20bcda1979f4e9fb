//! JSON run configuration.

use std::path::Path;

use memamp::dicke::Schedule;
use memamp::joint::{EvolutionOrder, ModeTruncation};
use memamp::protocol::{ProtocolConfig, TargetGain};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::CliError;

/// `alpha` as a real number, `[re, im]` or `{"re": .., "im": ..}`.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum AlphaSpec {
    Real(f64),
    Pair([f64; 2]),
    Parts { re: f64, im: f64 },
}

impl From<AlphaSpec> for Complex64 {
    fn from(a: AlphaSpec) -> Self {
        match a {
            AlphaSpec::Real(re) => Complex64::new(re, 0.0),
            AlphaSpec::Pair([re, im]) | AlphaSpec::Parts { re, im } => Complex64::new(re, im),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationSpec {
    pub fock_a_max: Option<usize>,
    pub fock_b_max: Option<usize>,
    pub fock_c_max: Option<usize>,
    pub atomic_k_max: Option<usize>,
    pub dimension_cap: Option<usize>,
}

impl TruncationSpec {
    pub fn resolve(&self, n_atoms: usize) -> ModeTruncation {
        let d = ModeTruncation::default_for(n_atoms);
        ModeTruncation {
            fock_a_max: self.fock_a_max.unwrap_or(d.fock_a_max),
            fock_b_max: self.fock_b_max.unwrap_or(d.fock_b_max),
            fock_c_max: self.fock_c_max.unwrap_or(d.fock_c_max),
            atomic_k_max: self.atomic_k_max.unwrap_or(d.atomic_k_max),
            dimension_cap: self.dimension_cap.unwrap_or(d.dimension_cap),
        }
    }
}

/// On-disk form. Everything except `N`, `alpha`, `p_w` and `p_r` has a default.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "N")]
    pub n_atoms: usize,
    pub alpha: AlphaSpec,
    pub p_w: f64,
    pub p_r: f64,
    #[serde(default = "one")]
    pub beta_w: f64,
    #[serde(default = "one")]
    pub beta_r: f64,
    #[serde(default = "default_schedule")]
    pub schedule: Schedule,
    #[serde(default = "default_stages")]
    pub n: usize,
    #[serde(default = "default_order")]
    pub order: EvolutionOrder,
    #[serde(default)]
    pub truncation: TruncationSpec,
    #[serde(default = "default_target")]
    pub target_gain: TargetGain,
    #[serde(default)]
    pub seed: u64,
}

fn one() -> f64 {
    1.0
}

fn default_schedule() -> Schedule {
    Schedule::TypeI
}

fn default_stages() -> usize {
    1
}

fn default_order() -> EvolutionOrder {
    EvolutionOrder::FirstOrder
}

fn default_target() -> TargetGain {
    TargetGain::Exact
}

impl ConfigFile {
    pub fn into_protocol(self) -> ProtocolConfig {
        ProtocolConfig {
            n_atoms: self.n_atoms,
            alpha: self.alpha.into(),
            p_w: self.p_w,
            p_r: self.p_r,
            beta_w: self.beta_w,
            beta_r: self.beta_r,
            schedule: self.schedule,
            stages: self.n,
            order: self.order,
            truncation: self.truncation.resolve(self.n_atoms),
            target_gain: self.target_gain,
            seed: self.seed,
        }
    }
}

/// Used when no `--config` is given.
pub fn default_config() -> ProtocolConfig {
    ProtocolConfig::new(100, Complex64::new(0.1, 0.0), 1e-3, 1e-3)
}

/// The validated config plus the explicit truncation settings, which sweeps
/// re-resolve when `N` changes.
pub fn parse_with_spec(text: &str) -> Result<(ProtocolConfig, TruncationSpec), CliError> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| CliError::Config(format!("malformed config: {e}")))?;
    let spec = file.truncation.clone();
    let config = file.into_protocol();
    config.validate()?;
    Ok((config, spec))
}

/// Reads, parses and validates a config file, or returns the built-in
/// default when no path is given.
pub fn load(path: Option<&Path>) -> Result<(ProtocolConfig, TruncationSpec), CliError> {
    match path {
        None => Ok((default_config(), TruncationSpec::default())),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
            parse_with_spec(&text)
        }
    }
}

/// JSON echo of a resolved config, in the on-disk key names.
pub fn config_echo(config: &ProtocolConfig) -> serde_json::Value {
    serde_json::json!({
        "N": config.n_atoms,
        "alpha": [config.alpha.re, config.alpha.im],
        "p_w": config.p_w,
        "p_r": config.p_r,
        "beta_w": config.beta_w,
        "beta_r": config.beta_r,
        "schedule": config.schedule,
        "n": config.stages,
        "order": config.order,
        "truncation": config.truncation,
        "target_gain": config.target_gain,
        "seed": config.seed,
    })
}
