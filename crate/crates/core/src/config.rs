//! Tracer and sampler configuration.
//!
//! The file format is TOML:
//!
//! ```toml
//! user_function_type = 60000019
//! routine_event_type = 50000001
//!
//! [states]
//! 0 = "Idle"
//! 1 = "Running"
//! 7 = "External"
//!
//! [sampler]
//! mode = "time"            # or "counter"
//! period_ns = 1000000
//! jitter_fraction = 0.1
//! counter_threshold = 1000
//! rng_seed = 1
//! ```
//!
//! Every key is optional. `PRVKIT_USER_FUNCTION_TYPE` and
//! `PRVKIT_ROUTINE_EVENT_TYPE` override the file.

use std::collections::BTreeMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::prv::CaptureTime;
use crate::record::EventType;
use crate::registry::{default_state_table, StateTable};
use crate::sampler::SamplerConfig;

/// Event type of user-function enter (value = function id) and exit (value 0).
pub const DEFAULT_USER_FUNCTION_TYPE: EventType = 60000019;
/// Event type of MPI-call-like routines; value 0 means outside any routine.
pub const DEFAULT_ROUTINE_EVENT_TYPE: EventType = 50000001;

pub const ENV_USER_FUNCTION_TYPE: &str = "PRVKIT_USER_FUNCTION_TYPE";
pub const ENV_ROUTINE_EVENT_TYPE: &str = "PRVKIT_ROUTINE_EVENT_TYPE";
pub const ENV_CONFIG: &str = "PRVKIT_CONFIG";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Toml(#[from] toml::de::Error),
    #[error("invalid value {value:?} for {key}")]
    Value { key: String, value: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracerConfig {
    pub user_function_type: EventType,
    pub routine_event_type: EventType,
    pub states: StateTable,
    /// Header timestamp; taken from the wall clock at finish when unset.
    pub capture: Option<CaptureTime>,
    pub sampler: Option<SamplerConfig>,
}

impl Default for TracerConfig {
    fn default() -> Self {
        TracerConfig {
            user_function_type: DEFAULT_USER_FUNCTION_TYPE,
            routine_event_type: DEFAULT_ROUTINE_EVENT_TYPE,
            states: default_state_table(),
            capture: None,
            sampler: None,
        }
    }
}

#[derive(Debug, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    user_function_type: Option<EventType>,
    routine_event_type: Option<EventType>,
    states: Option<BTreeMap<String, String>>,
    sampler: Option<SamplerConfig>,
}

impl TracerConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let file: FileConfig = toml::from_str(text)?;
        let mut cfg = TracerConfig::default();
        if let Some(t) = file.user_function_type {
            cfg.user_function_type = t;
        }
        if let Some(t) = file.routine_event_type {
            cfg.routine_event_type = t;
        }
        if let Some(states) = file.states {
            cfg.states = states
                .into_iter()
                .map(|(k, v)| {
                    k.parse::<u32>()
                        .map(|code| (code, v.clone()))
                        .map_err(|_| ConfigError::Value {
                            key: "states".into(),
                            value: k,
                        })
                })
                .collect::<Result<_, _>>()?;
        }
        cfg.sampler = file.sampler;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    /// Applies overrides from `lookup` (normally [`std::env::var`]).
    pub fn apply_env(
        &mut self,
        lookup: impl Fn(&str) -> Option<String>,
    ) -> Result<(), ConfigError> {
        let parse = |key: &str| -> Result<Option<EventType>, ConfigError> {
            match lookup(key) {
                None => Ok(None),
                Some(v) => v.trim().parse().map(Some).map_err(|_| ConfigError::Value {
                    key: key.to_string(),
                    value: v,
                }),
            }
        };
        if let Some(t) = parse(ENV_USER_FUNCTION_TYPE)? {
            self.user_function_type = t;
        }
        if let Some(t) = parse(ENV_ROUTINE_EVENT_TYPE)? {
            self.routine_event_type = t;
        }
        Ok(())
    }

    /// Defaults, then the file named by `PRVKIT_CONFIG` if set, then the
    /// environment overrides.
    pub fn from_env() -> Result<Self, ConfigError> {
        let mut cfg = match std::env::var_os(ENV_CONFIG) {
            Some(p) => Self::load(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::SamplingMode;

    #[test]
    fn file_and_env_overrides() {
        let mut cfg = TracerConfig::from_toml(
            "routine_event_type = 123\n[states]\n0 = \"Idle\"\n3 = \"Waiting\"\n\
             [sampler]\nmode = \"counter\"\ncounter_threshold = 500\n",
        )
        .unwrap();
        assert_eq!(cfg.routine_event_type, 123);
        assert_eq!(cfg.user_function_type, DEFAULT_USER_FUNCTION_TYPE);
        assert_eq!(cfg.states.get(&3).map(String::as_str), Some("Waiting"));
        assert!(!cfg.states.contains_key(&1));
        let s = cfg.sampler.clone().unwrap();
        assert_eq!(s.mode, SamplingMode::Counter);
        assert_eq!(s.counter_threshold, 500);

        cfg.apply_env(|k| (k == ENV_USER_FUNCTION_TYPE).then(|| "42".to_string()))
            .unwrap();
        assert_eq!(cfg.user_function_type, 42);
        assert!(cfg
            .apply_env(|k| (k == ENV_ROUTINE_EVENT_TYPE).then(|| "x".to_string()))
            .is_err());
    }

    #[test]
    fn rejects_unknown_keys_and_bad_state_codes() {
        assert!(TracerConfig::from_toml("bogus = 1").is_err());
        assert!(TracerConfig::from_toml("[states]\nidle = \"Idle\"").is_err());
    }
}
