//! Experiment configuration: JSON file plus command-line overrides.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use toda_core::lattice::{IntegratorConfig, Scheme};
use toda_core::thermal::ThermalParams;

/// Threshold mode for localization centers.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(untagged)]
pub enum ZetaMode {
    Named(String),
    Explicit(f64),
}

impl Default for ZetaMode {
    fn default() -> Self {
        ZetaMode::Named("two_n_inverse".into())
    }
}

impl ZetaMode {
    pub fn resolve(&self, n: usize) -> Result<f64, String> {
        match self {
            ZetaMode::Named(s) if s == "two_n_inverse" => Ok(1.0 / (2.0 * n as f64)),
            ZetaMode::Named(s) => Err(format!("unknown zeta_mode '{s}'")),
            ZetaMode::Explicit(z) if *z > 0.0 => Ok(*z),
            ZetaMode::Explicit(z) => Err(format!("zeta must be positive, got {z}")),
        }
    }
}

/// Bulk-collar mode: `"fraction:0.1"` or `"sites:25"` or `"default"`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct CollarMode(pub String);

impl Default for CollarMode {
    fn default() -> Self {
        CollarMode("default".into())
    }
}

impl CollarMode {
    pub fn resolve(&self, n: usize, t: f64) -> Result<usize, String> {
        let s = self.0.as_str();
        if s == "default" {
            return Ok(toda_core::localization::bulk_collar(n, t));
        }
        if let Some(f) = s.strip_prefix("fraction:") {
            let f: f64 = f.parse().map_err(|_| format!("bad collar fraction '{s}'"))?;
            if !(0.0..0.5).contains(&f) {
                return Err(format!("collar fraction {f} outside [0, 0.5)"));
            }
            return Ok((f * n as f64).ceil() as usize);
        }
        if let Some(k) = s.strip_prefix("sites:") {
            let k: usize = k.parse().map_err(|_| format!("bad collar sites '{s}'"))?;
            return Ok(k);
        }
        Err(format!("unknown collar_mode '{s}'"))
    }
}

fn default_beta() -> f64 {
    1.0
}
fn default_theta() -> f64 {
    1.0
}
fn default_n() -> usize {
    64
}
fn default_t() -> f64 {
    10.0
}
fn default_step() -> f64 {
    1e-3
}
fn default_scheme() -> String {
    "rk4".into()
}
fn default_rel_tol() -> f64 {
    1e-9
}
fn default_abs_tol() -> f64 {
    1e-11
}
fn default_replicas() -> usize {
    1
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("toda-lab-out")
}

/// Flat experiment configuration; every field has a JSON key of the same
/// name and a CLI override flag.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub experiment: String,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_theta")]
    pub theta: f64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_t")]
    pub t: f64,
    #[serde(default = "default_step")]
    pub step: f64,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_abs_tol")]
    pub abs_tol: f64,
    /// `0` selects the integrator default (`T/100` clamped to `step`).
    #[serde(default)]
    pub sample_every: f64,
    #[serde(default)]
    pub zeta_mode: ZetaMode,
    #[serde(default)]
    pub collar_mode: CollarMode,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub seed: u64,
    /// First stream id; replica `r` draws from stream `stream_offset + r`.
    #[serde(default)]
    pub stream_offset: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults deserialize")
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.beta > 0.0 && self.theta > 0.0) {
            return Err("beta and theta must be positive".into());
        }
        if self.n == 0 {
            return Err("n must be >= 1".into());
        }
        if self.t < 0.0 {
            return Err("t must be nonnegative".into());
        }
        if !(self.step > 0.0) {
            return Err("step must be positive".into());
        }
        if self.scheme != "rk4" && self.scheme != "rk45" {
            return Err(format!("unknown scheme '{}' (rk4 | rk45)", self.scheme));
        }
        if !(self.rel_tol > 0.0 && self.abs_tol > 0.0) {
            return Err("tolerances must be positive".into());
        }
        if self.replicas == 0 {
            return Err("replicas must be >= 1".into());
        }
        self.zeta_mode.resolve(self.n)?;
        self.collar_mode.resolve(self.n, self.t)?;
        Ok(())
    }

    pub fn thermal_params(&self) -> Result<ThermalParams, String> {
        ThermalParams::new(self.beta, self.theta).map_err(|e| e.to_string())
    }

    /// As [`ExperimentConfig::thermal_params`] but rejecting a degenerate
    /// stretch parameter, for the experiments that require it.
    pub fn thermal_params_nondegenerate(&self) -> Result<ThermalParams, String> {
        ThermalParams::new_nondegenerate(self.beta, self.theta).map_err(|e| e.to_string())
    }

    pub fn integrator(&self) -> IntegratorConfig {
        let mut cfg = match self.scheme.as_str() {
            "rk45" => IntegratorConfig::rk45(self.step, self.rel_tol, self.abs_tol)
                .expect("validated"),
            _ => IntegratorConfig::rk4(self.step).expect("validated"),
        };
        cfg.sample_every = self.sample_every;
        let _ = Scheme::RK4Fixed;
        cfg
    }

    pub fn zeta(&self) -> f64 {
        self.zeta_mode.resolve(self.n).expect("validated")
    }

    pub fn collar(&self) -> usize {
        self.collar_mode.resolve(self.n, self.t).expect("validated")
    }

    /// Canonical JSON used for the manifest hash.
    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// FNV-1a hash of the canonical JSON, stable across runs and builds.
    pub fn config_hash(&self) -> String {
        let mut h: u64 = 0xcbf29ce484222325;
        for b in self.canonical_json().as_bytes() {
            h ^= *b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        format!("{h:016x}")
    }
}
