//! Scenario definitions, ground-truth simulation, configuration, and
//! trace/gain persistence for the distributed interval observer.

pub mod config;
pub mod driver;
pub mod gains_io;
pub mod scenario;
pub mod trace;

pub use config::{build_scenario, Config, ScenarioConfig, SimulateConfig, SynthesisConfig};
pub use scenario::{
    builtin_power_like, builtin_unicycle, builtin_unicycle_noiseless, random_toy_instance,
    InputScript, Scenario, TruthTrace,
};
pub use trace::{read_trace, write_trace, TraceRow};
