//! Platform and application service daemons.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{ActiveSet, SourceCategory, SourceId};
use crate::power::SleepLevel;

/// The six idle consumers measured on the reference phone.
pub const DEFAULT_DAEMONS: [(&str, ServiceCategory); 6] = [
    ("cell-standby", ServiceCategory::Platform),
    ("device-idle", ServiceCategory::Platform),
    ("android-os", ServiceCategory::Platform),
    ("wifi", ServiceCategory::Application),
    ("screen", ServiceCategory::Application),
    ("gmail", ServiceCategory::Application),
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ServiceError {
    #[error("unknown daemon `{0}`")]
    UnknownDaemon(String),
    #[error("daemon `{0}` is already registered")]
    DuplicateDaemon(String),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::UnknownDaemon(_) => "unknown-daemon",
            ServiceError::DuplicateDaemon(_) => "duplicate-name",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ServiceCategory {
    Platform,
    Application,
}

impl From<ServiceCategory> for SourceCategory {
    fn from(c: ServiceCategory) -> Self {
        match c {
            ServiceCategory::Platform => SourceCategory::Platform,
            ServiceCategory::Application => SourceCategory::Application,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceDaemon {
    pub name: String,
    pub category: ServiceCategory,
    pub source: SourceId,
    pub running: bool,
    pub minimal: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ServiceRegistry {
    daemons: Vec<ServiceDaemon>,
}

impl ServiceRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a running, non-minimal daemon backed by `source`.
    pub fn add(
        &mut self,
        name: impl Into<String>,
        category: ServiceCategory,
        source: SourceId,
    ) -> Result<(), ServiceError> {
        let name = name.into();
        if self.get(&name).is_some() {
            return Err(ServiceError::DuplicateDaemon(name));
        }
        self.daemons.push(ServiceDaemon {
            name,
            category,
            source,
            running: true,
            minimal: false,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ServiceDaemon> {
        self.daemons.iter().find(|d| d.name == name)
    }

    pub fn daemons(&self) -> &[ServiceDaemon] {
        &self.daemons
    }

    /// Flags exactly `names` as minimal functions. Nothing changes on error.
    pub fn set_minimal_functions(&mut self, names: &BTreeSet<String>) -> Result<(), ServiceError> {
        if let Some(unknown) = names.iter().find(|n| self.get(n).is_none()) {
            return Err(ServiceError::UnknownDaemon(unknown.clone()));
        }
        for d in &mut self.daemons {
            d.minimal = names.contains(&d.name);
        }
        Ok(())
    }

    /// Stops the daemons that `level` does not keep alive and returns the
    /// names of those stopped by this call.
    pub fn stop_for_level(&mut self, level: SleepLevel) -> BTreeSet<String> {
        let keep_minimal = level == SleepLevel::SuspendToRam;
        if !keep_minimal && self.daemons.iter().any(|d| d.minimal) {
            log::warn!("minimal functions are ignored in {level}");
        }
        self.daemons
            .iter_mut()
            .filter(|d| d.running && !(keep_minimal && d.minimal))
            .map(|d| {
                d.running = false;
                d.name.clone()
            })
            .collect()
    }

    /// Starts every stopped daemon and returns their names.
    pub fn restart_all(&mut self) -> BTreeSet<String> {
        self.daemons
            .iter_mut()
            .filter(|d| !d.running)
            .map(|d| {
                d.running = true;
                d.name.clone()
            })
            .collect()
    }

    pub fn active_sources(&self) -> ActiveSet {
        self.daemons
            .iter()
            .filter(|d| d.running)
            .map(|d| d.source)
            .collect()
    }

    pub fn running_names(&self) -> Vec<String> {
        self.daemons
            .iter()
            .filter(|d| d.running)
            .map(|d| d.name.clone())
            .collect()
    }

    pub fn minimal_names(&self) -> BTreeSet<String> {
        self.daemons
            .iter()
            .filter(|d| d.minimal)
            .map(|d| d.name.clone())
            .collect()
    }
}
