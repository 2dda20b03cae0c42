//! Labels for event types, event values and states (the .pcf dictionary).

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use crate::record::{EventType, EventValue, StateCode};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("event type 0 is reserved")]
    ZeroType,
    #[error("event type {code} already registered as {existing:?}, not {requested:?}")]
    Conflict {
        code: EventType,
        existing: String,
        requested: String,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventTypeInfo {
    pub description: String,
    pub values: BTreeMap<EventValue, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EventRegistry {
    types: BTreeMap<EventType, EventTypeInfo>,
    /// Type codes that appeared more than once in a loaded .pcf.
    duplicates: BTreeSet<EventType>,
}

impl EventRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a type. Re-registering with the same description merges any
    /// new value labels; a different description is a conflict.
    ///
    /// When labels are given without one for value 0, value 0 is labelled "End".
    pub fn register(
        &mut self,
        code: EventType,
        description: &str,
        values: &[(EventValue, &str)],
    ) -> Result<(), RegistryError> {
        if code == 0 {
            return Err(RegistryError::ZeroType);
        }
        if let Some(existing) = self.types.get(&code) {
            if existing.description != description {
                return Err(RegistryError::Conflict {
                    code,
                    existing: existing.description.clone(),
                    requested: description.to_string(),
                });
            }
        }
        let info = self.types.entry(code).or_insert_with(|| EventTypeInfo {
            description: description.to_string(),
            values: BTreeMap::new(),
        });
        for &(v, label) in values {
            info.values.insert(v, label.to_string());
        }
        if !values.is_empty() {
            info.values.entry(0).or_insert_with(|| "End".to_string());
        }
        Ok(())
    }

    /// Inserts a type as read from a file; repeated codes are remembered so
    /// validation can report them. The last definition wins.
    pub(crate) fn insert_loaded(&mut self, code: EventType, info: EventTypeInfo) {
        if self.types.insert(code, info).is_some() {
            self.duplicates.insert(code);
        }
    }

    pub(crate) fn loaded_mut(&mut self, code: EventType) -> Option<&mut EventTypeInfo> {
        self.types.get_mut(&code)
    }

    pub fn get(&self, code: EventType) -> Option<&EventTypeInfo> {
        self.types.get(&code)
    }

    pub fn contains(&self, code: EventType) -> bool {
        self.types.contains_key(&code)
    }

    pub fn description(&self, code: EventType) -> Option<&str> {
        self.types.get(&code).map(|t| t.description.as_str())
    }

    pub fn value_label(&self, code: EventType, value: EventValue) -> Option<&str> {
        self.types
            .get(&code)
            .and_then(|t| t.values.get(&value))
            .map(String::as_str)
    }

    /// Finds a type code by its description.
    pub fn find(&self, description: &str) -> Option<EventType> {
        self.types
            .iter()
            .find(|(_, t)| t.description == description)
            .map(|(&c, _)| c)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EventType, &EventTypeInfo)> {
        self.types.iter().map(|(&c, t)| (c, t))
    }

    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    pub fn duplicates(&self) -> impl Iterator<Item = EventType> + '_ {
        self.duplicates.iter().copied()
    }
}

/// State code → label.
pub type StateTable = BTreeMap<StateCode, String>;

/// 0 Idle, 1 Running, 7 External.
pub fn default_state_table() -> StateTable {
    [(0, "Idle"), (1, "Running"), (7, "External")]
        .into_iter()
        .map(|(c, l)| (c, l.to_string()))
        .collect()
}
