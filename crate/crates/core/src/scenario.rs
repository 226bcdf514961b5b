//! Scenario files: a device profile, its daemons, an optional schedule and a
//! run length. JSON, versioned; see `docs/FORMATS.md`.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{SourceCategory, CHARGE_EPSILON_MAH};
use crate::engine::{DaemonSpec, Engine, EngineConfig, EngineError};
use crate::power::{DeviceProfile, SleepLevel};
use crate::protocol::{parse_command, ParseError};
use crate::schedule::{SleepSchedule, TimeOfDay};

pub const SCENARIO_VERSION: u32 = 1;

/// The shipped scenarios, one per reference device plus the peripheral-leak
/// variant of the dual-core phone.
pub const BUILTIN_SCENARIOS: [(&str, &str); 5] = [
    ("dual_core_phone", include_str!("../scenarios/dual_core_phone.json")),
    ("quad_core_phone", include_str!("../scenarios/quad_core_phone.json")),
    ("quad_core_tablet", include_str!("../scenarios/quad_core_tablet.json")),
    ("laptop", include_str!("../scenarios/laptop.json")),
    (
        "dual_core_phone_case_a",
        include_str!("../scenarios/dual_core_phone_case_a.json"),
    ),
];

/// The four reference devices.
pub const DEVICE_SCENARIOS: [&str; 4] = [
    "dual_core_phone",
    "quad_core_phone",
    "quad_core_tablet",
    "laptop",
];

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scenario invariant violated: {0}")]
    Invalid(String),
    #[error("scenario has no schedule window")]
    MissingSchedule,
    #[error("`{0}` is neither a scenario file nor a built-in scenario")]
    UnknownBuiltin(String),
    #[error("command {index}: {source}")]
    Command { index: usize, source: ParseError },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("scenario i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    pub fn code(&self) -> &'static str {
        match self {
            ScenarioError::Parse { .. } => "parse-error",
            ScenarioError::Invalid(_) => "invariant-violation",
            ScenarioError::MissingSchedule => "missing-schedule",
            ScenarioError::UnknownBuiltin(_) => "unknown-scenario",
            ScenarioError::Command { source, .. } => source.kind.code(),
            ScenarioError::Engine(e) => e.code(),
            ScenarioError::Io(_) => "io-error",
        }
    }
}

/// A client command injected at `at_minutes` after the scenario start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledCommand {
    pub at_minutes: u64,
    pub line: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    pub profile: DeviceProfile,
    pub sources: Vec<DaemonSpec>,
    #[serde(default)]
    pub schedule: Option<SleepSchedule>,
    #[serde(default)]
    pub minimal: BTreeSet<String>,
    /// Time of day at which the simulation starts (on day 0).
    pub start: TimeOfDay,
    pub duration_hours: f64,
    #[serde(default)]
    pub lead_minutes: u64,
    /// Reserved; the simulation is deterministic.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub commands: Vec<ScheduledCommand>,
}

pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
    let text = fs::read_to_string(path)?;
    Scenario::from_json(&text)
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn builtin(name: &str) -> Result<Self, ScenarioError> {
        let (_, text) = BUILTIN_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| ScenarioError::UnknownBuiltin(name.to_string()))?;
        Self::from_json(text)
    }

    /// A path to a scenario file, or the name of a built-in one.
    pub fn resolve(spec: &str) -> Result<Self, ScenarioError> {
        if Path::new(spec).exists() {
            load_scenario(spec)
        } else if BUILTIN_SCENARIOS.iter().any(|(n, _)| *n == spec) {
            Self::builtin(spec)
        } else {
            Err(ScenarioError::UnknownBuiltin(spec.to_string()))
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if self.version != SCENARIO_VERSION {
            return invalid(format!("unsupported version {}", self.version));
        }
        self.profile.validate().map_err(EngineError::from)?;
        if self.sources.is_empty() {
            return invalid("at least one source is required".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.sources {
            if !names.insert(s.name.as_str()) {
                return invalid(format!("duplicate source `{}`", s.name));
            }
            if SourceCategory::ALL.iter().any(|c| c.as_str() == s.name) {
                return invalid(format!("source name `{}` clashes with a category", s.name));
            }
        }
        let total: f64 = self.sources.iter().map(|s| s.rate_ma).sum();
        if (total - self.profile.idle_rate_ma).abs() > CHARGE_EPSILON_MAH {
            return invalid(format!(
                "source rates sum to {total} mA but idle_rate_ma is {}",
                self.profile.idle_rate_ma
            ));
        }
        if let Some(unknown) = self.minimal.iter().find(|m| !names.contains(m.as_str())) {
            return invalid(format!("minimal function `{unknown}` is not a source"));
        }
        if !self.duration_hours.is_finite() || self.duration_hours <= 0.0 {
            return invalid(format!("duration_hours must be > 0, got {}", self.duration_hours));
        }
        self.duration_minutes()?;
        if let Some(s) = &self.schedule {
            s.validate().map_err(EngineError::from)?;
            if self.lead_minutes >= s.window_minutes() {
                return invalid(format!(
                    "lead_minutes {} does not fit the {} minute window",
                    self.lead_minutes,
                    s.window_minutes()
                ));
            }
        }
        for (index, c) in self.commands.iter().enumerate() {
            parse_command(&c.line).map_err(|source| ScenarioError::Command { index, source })?;
        }
        // Catches anything else the engine would refuse (e.g. reserved names).
        self.build_engine()?;
        Ok(())
    }

    /// Run length in whole simulated minutes.
    pub fn duration_minutes(&self) -> Result<u64, ScenarioError> {
        let minutes = self.duration_hours * 60.0;
        let rounded = minutes.round();
        if !minutes.is_finite() || minutes < 0.0 || (minutes - rounded).abs() > 1e-6 {
            return Err(ScenarioError::Invalid(format!(
                "duration of {} h is not a whole number of minutes",
                self.duration_hours
            )));
        }
        Ok(rounded as u64)
    }

    pub fn start_instant(&self) -> u64 {
        u64::from(self.start.minutes())
    }

    /// Overrides the run length; zero is allowed here.
    pub fn with_duration_hours(mut self, hours: f64) -> Result<Self, ScenarioError> {
        if !hours.is_finite() || hours < 0.0 {
            return Err(ScenarioError::Invalid(format!("duration_hours must be >= 0, got {hours}")));
        }
        self.duration_hours = hours;
        self.duration_minutes()?;
        Ok(self)
    }

    /// Same scenario with its schedule window enabled at `level`.
    pub fn with_level(&self, level: SleepLevel) -> Result<Self, ScenarioError> {
        let mut s = self.clone();
        let schedule = s.schedule.as_mut().ok_or(ScenarioError::MissingSchedule)?;
        schedule.level = level;
        schedule.enabled = true;
        Ok(s)
    }

    /// Same scenario with scheduling disabled.
    pub fn without_schedule(&self) -> Self {
        let mut s = self.clone();
        if let Some(schedule) = s.schedule.as_mut() {
            schedule.enabled = false;
        }
        s
    }

    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            lead_minutes: self.lead_minutes,
            ..EngineConfig::default()
        }
    }

    pub fn build_engine(&self) -> Result<Engine, ScenarioError> {
        self.build_engine_with(self.engine_config())
    }

    pub fn build_engine_with(&self, config: EngineConfig) -> Result<Engine, ScenarioError> {
        let start = self.start_instant();
        let mut engine = Engine::new(self.profile.clone(), &self.sources, start, config)?;
        if let Some(s) = self.schedule {
            engine.set_schedule(s)?;
        }
        engine.set_minimal(self.minimal.clone())?;
        for (index, c) in self.commands.iter().enumerate() {
            let cmd =
                parse_command(&c.line).map_err(|source| ScenarioError::Command { index, source })?;
            engine.enqueue(start + c.at_minutes, cmd);
        }
        Ok(engine)
    }
}
