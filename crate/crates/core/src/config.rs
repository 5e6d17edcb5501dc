//! The experiment config document (TOML).
//!
//! ```toml
//! [topology]
//! fog_nodes = 3
//! devices = [5, 5]          # per fog node, inclusive range
//! containers = [4, 16]      # per device
//! capacity = [5, 10]        # container requests/slot
//! arrival_rate = [2.5, 8.0] # container requests/slot
//!
//! [policy]
//! v = 0.5
//! alpha = 10.0
//! kind = "lyapunov"                           # or "baseline"
//! admission_direction = "objective_consistent" # or "paper_text"
//! delay_model = "normalized"                   # or "literal"
//! v_list = [0.2, 0.5, 0.9]
//!
//! [run]
//! slots = 500
//! seeds = [1, 2, 3]
//! output_dir = "out"
//!
//! [agent]
//! bind_address = "127.0.0.1:8080"
//! ```
//!
//! See `configs/README.md` for every key and its default.

use std::collections::BTreeMap;
use std::net::ToSocketAddrs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::TopologyConfig;
use crate::policy::{AdmissionDirection, DelayModel, PolicyConfig, PolicyKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config does not parse: {0}")]
    Parse(String),
    #[error("invalid config: {}", .0.join("; "))]
    Invalid(Vec<String>),
}

fn default_v_list() -> Vec<f64> {
    vec![0.2, 0.5, 0.9]
}
fn default_d_max() -> f64 {
    f64::INFINITY
}
fn default_direction() -> AdmissionDirection {
    AdmissionDirection::ObjectiveConsistent
}
fn default_delay_model() -> DelayModel {
    DelayModel::Normalized
}
fn default_kind() -> PolicyKind {
    PolicyKind::Lyapunov
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub v: f64,
    pub alpha: f64,
    #[serde(default = "default_d_max")]
    pub d_max: f64,
    #[serde(default = "default_kind")]
    pub kind: PolicyKind,
    #[serde(default = "default_direction")]
    pub admission_direction: AdmissionDirection,
    #[serde(default = "default_delay_model")]
    pub delay_model: DelayModel,
    #[serde(default)]
    pub alpha_overrides: BTreeMap<String, f64>,
    /// `V` values swept by `compare`.
    #[serde(default = "default_v_list")]
    pub v_list: Vec<f64>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub slots: u64,
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegistrySource {
    /// Snapshots of the devices of a topology built from this config.
    Synthetic,
    /// The local machine only.
    Probe,
}

fn default_bind() -> String {
    "127.0.0.1:8080".to_string()
}
fn default_timeout() -> u64 {
    5_000
}
fn default_source() -> RegistrySource {
    RegistrySource::Synthetic
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default = "default_bind")]
    pub bind_address: String,
    #[serde(default = "default_timeout")]
    pub read_timeout_ms: u64,
    #[serde(default = "default_source")]
    pub registry: RegistrySource,
}

impl Default for AgentSection {
    fn default() -> Self {
        AgentSection {
            bind_address: default_bind(),
            read_timeout_ms: default_timeout(),
            registry: default_source(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub topology: TopologyConfig,
    pub policy: PolicySection,
    pub run: RunSection,
    #[serde(default)]
    pub agent: AgentSection,
}

impl ExperimentConfig {
    /// Parses without semantic validation; see [`ExperimentConfig::violations`].
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string().trim_end().replace('\n', " ")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Parses and rejects any config with violations.
    pub fn load_valid(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let config = Self::load(path)?;
        let violations = config.violations();
        if violations.is_empty() {
            Ok(config)
        } else {
            Err(ConfigError::Invalid(violations))
        }
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always representable in TOML")
    }

    /// The policy at the configured `v`.
    pub fn policy(&self) -> PolicyConfig {
        let p = &self.policy;
        PolicyConfig {
            v: p.v,
            alpha: p.alpha,
            d_max: p.d_max,
            kind: p.kind,
            admission_direction: p.admission_direction,
            delay_model: p.delay_model,
            alpha_overrides: p.alpha_overrides.clone(),
        }
    }

    /// Every semantic problem, one message each; empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Err(e) = self.topology.validate() {
            out.push(format!("topology: {e}"));
        }
        if let Err(e) = self.policy().validate() {
            out.push(format!("policy: {e}"));
        }
        if self.policy.v_list.is_empty() {
            out.push("policy.v_list: must list at least one value".into());
        }
        for v in &self.policy.v_list {
            if !(v.is_finite() && *v >= 0.0) {
                out.push(format!("policy.v_list: {v} must be finite and >= 0"));
            }
        }
        if self.run.seeds.is_empty() {
            out.push("run.seeds: must list at least one seed".into());
        }
        if self.agent.read_timeout_ms == 0 {
            out.push("agent.read_timeout_ms: must be positive".into());
        }
        if !bind_address_parses(&self.agent.bind_address) {
            out.push(format!(
                "agent.bind_address: {:?} is not a host:port address",
                self.agent.bind_address
            ));
        }
        out
    }
}

fn bind_address_parses(addr: &str) -> bool {
    if addr.parse::<std::net::SocketAddr>().is_ok() {
        return true;
    }
    // host:port with a resolvable host name
    match addr.rsplit_once(':') {
        Some((host, port)) if !host.is_empty() && port.parse::<u16>().is_ok() => {
            addr.to_socket_addrs().map(|mut a| a.next().is_some()).unwrap_or(false)
        }
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [topology]
        fog_nodes = 1
        devices = [2, 2]
        containers = [4, 4]
        capacity = [5, 10]
        arrival_rate = [0.0, 5.0]

        [policy]
        v = 0.5
        alpha = 10.0

        [run]
        slots = 10
        seeds = [1]
    "#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert!(cfg.violations().is_empty(), "{:?}", cfg.violations());
        assert_eq!(cfg.policy.kind, PolicyKind::Lyapunov);
        assert_eq!(cfg.policy.v_list, vec![0.2, 0.5, 0.9]);
        assert!(cfg.policy.d_max.is_infinite());
        assert_eq!(cfg.topology.services, 4);
        assert_eq!(cfg.agent, AgentSection::default());
    }

    #[test]
    fn round_trips_through_toml() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn unknown_keys_and_bad_types_fail_to_parse() {
        let text = MINIMAL.replace("slots = 10", "slots = 10\nslot = 3");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Parse(_))));
        let text = MINIMAL.replace("slots = 10", "slots = \"ten\"");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Parse(_))));
        let text = MINIMAL.replace("alpha = 10.0", "alpha = 10.0\nkind = \"random\"");
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(ConfigError::Parse(_))));
    }

    #[test]
    fn semantic_problems_are_listed() {
        let text = MINIMAL
            .replace("capacity = [5, 10]", "capacity = [10, 5]")
            .replace("seeds = [1]", "seeds = []")
            .replace("alpha = 10.0", "alpha = -1.0");
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        let v = cfg.violations();
        assert_eq!(v.len(), 3, "{v:?}");
        assert!(v[0].contains("capacity"));
    }

    #[test]
    fn bind_addresses() {
        assert!(bind_address_parses("127.0.0.1:0"));
        assert!(bind_address_parses("[::1]:8080"));
        assert!(bind_address_parses("localhost:8080"));
        assert!(!bind_address_parses("localhost"));
        assert!(!bind_address_parses(":80"));
    }
}
