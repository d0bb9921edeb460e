//! TOML configuration schema for the command-line tools.

use serde::{Deserialize, Serialize};

use dsiso_core::synthesis::MilpConfig;
use dsiso_core::{Error, Result};

use crate::scenario::{builtin_power_like, builtin_unicycle, Scenario};

pub const SCHEMA_VERSION: u32 = 1;

/// Root configuration document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub schema_version: u32,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub simulate: SimulateConfig,
}

/// Which scenario to instantiate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScenarioConfig {
    Unicycle {
        seed: u64,
        horizon: usize,
    },
    PowerLike {
        generators: usize,
        seed: u64,
        horizon: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesisConfig {
    /// `milp` (centralized optimal) or `cpdn` (distributed design).
    pub method: String,
    pub gain_box: f64,
    pub q_max: f64,
    pub epsilon: f64,
    pub max_nodes: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        let m = MilpConfig::default();
        SynthesisConfig {
            method: "milp".into(),
            gain_box: m.gain_box,
            q_max: m.q_max,
            epsilon: m.epsilon,
            max_nodes: m.max_nodes,
        }
    }
}

impl SynthesisConfig {
    pub fn milp_config(&self) -> MilpConfig {
        MilpConfig {
            gain_box: self.gain_box,
            q_max: self.q_max,
            epsilon: self.epsilon,
            max_nodes: self.max_nodes,
            ..MilpConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// `halt` stops on an empty intersection; `permissive` records the
    /// event and continues with the unclipped box.
    pub policy: String,
    pub run_seed: u64,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            policy: "halt".into(),
            run_seed: 1,
        }
    }
}

pub fn parse_config(text: &str) -> Result<Config> {
    let cfg: Config =
        toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config parse: {e}")))?;
    if cfg.schema_version != SCHEMA_VERSION {
        return Err(Error::InvalidInput(format!(
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        )));
    }
    if !matches!(cfg.synthesis.method.as_str(), "milp" | "cpdn") {
        return Err(Error::InvalidInput(format!(
            "synthesis.method must be `milp` or `cpdn`, got `{}`",
            cfg.synthesis.method
        )));
    }
    if !matches!(cfg.simulate.policy.as_str(), "halt" | "permissive") {
        return Err(Error::InvalidInput(format!(
            "simulate.policy must be `halt` or `permissive`, got `{}`",
            cfg.simulate.policy
        )));
    }
    Ok(cfg)
}

pub fn render_config(cfg: &Config) -> Result<String> {
    toml::to_string_pretty(cfg).map_err(|e| Error::InvalidInput(format!("config render: {e}")))
}

/// Instantiates the scenario described by the configuration; built-ins
/// are validated against the modelling assumptions at load time.
pub fn build_scenario(cfg: &Config) -> Result<Scenario> {
    match cfg.scenario {
        ScenarioConfig::Unicycle { seed, horizon } => builtin_unicycle(seed, horizon),
        ScenarioConfig::PowerLike {
            generators,
            seed,
            horizon,
        } => builtin_power_like(generators, seed, horizon),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Config {
        Config {
            schema_version: SCHEMA_VERSION,
            scenario: ScenarioConfig::Unicycle {
                seed: 7,
                horizon: 100,
            },
            synthesis: SynthesisConfig::default(),
            simulate: SimulateConfig {
                policy: "permissive".into(),
                run_seed: 42,
            },
        }
    }

    #[test]
    fn round_trip_is_identity() {
        let cfg = sample();
        let text = render_config(&cfg).unwrap();
        let back = parse_config(&text).unwrap();
        assert_eq!(cfg, back);
        // Twice, to catch any normalization drift.
        assert_eq!(render_config(&back).unwrap(), text);
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let text = "schema_version = 1\n[scenario]\nkind = \"power-like\"\ngenerators = 4\nseed = 3\nhorizon = 50\n";
        let cfg = parse_config(text).unwrap();
        assert_eq!(cfg.synthesis, SynthesisConfig::default());
        assert_eq!(cfg.simulate, SimulateConfig::default());
        let sc = build_scenario(&cfg).unwrap();
        assert_eq!(sc.agent_count(), 4);
    }

    #[test]
    fn bad_inputs_are_rejected_with_field_context() {
        assert!(parse_config("schema_version = 2\n[scenario]\nkind = \"unicycle\"\nseed = 1\nhorizon = 5\n").is_err());
        let err = parse_config("schema_version = 1\n[scenario]\nkind = \"unicycle\"\nseed = 1\nhorizon = 5\n[synthesis]\nmethod = \"magic\"\ngain_box = 1.0\nq_max = 1.0\nepsilon = 0.1\nmax_nodes = 1\n")
            .unwrap_err();
        assert!(format!("{err}").contains("method"));
        assert!(parse_config("nope = true").is_err());
    }
}
