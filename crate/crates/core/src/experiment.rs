//! Running scenarios and comparing sleep levels.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::battery::Breakdown;
use crate::engine::{Event, Sample};
use crate::power::SleepLevel;
use crate::scenario::{Scenario, ScenarioError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub scenario: String,
    pub device: String,
    pub capacity_mah: f64,
    pub start: u64,
    pub duration_minutes: u64,
    pub consumed_mah: f64,
    pub remaining_mah: f64,
    pub remaining_pct: f64,
    /// `None` for a zero-length run.
    pub breakdown: Option<Breakdown>,
    pub events: Vec<Event>,
    pub time_series: Vec<Sample>,
}

impl ExperimentResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }
}

pub fn run_experiment(scenario: &Scenario) -> Result<ExperimentResult, ScenarioError> {
    let mut engine = scenario.build_engine()?;
    let start = engine.start();
    let duration = scenario.duration_minutes()?;
    let end = start + duration;
    // A zero-length run does nothing, not even work due at the start instant.
    if duration > 0 {
        engine.run_until(end)?;
    }
    engine.sample_now();

    let breakdown = if duration > 0 {
        Some(engine.breakdown(start, end)?)
    } else {
        None
    };
    let battery = engine.battery();
    Ok(ExperimentResult {
        scenario: scenario.name.clone(),
        device: scenario.profile.name.clone(),
        capacity_mah: battery.capacity_mah,
        start,
        duration_minutes: duration,
        consumed_mah: battery.consumed_mah(),
        remaining_mah: battery.remaining_mah,
        remaining_pct: battery.remaining_pct(),
        breakdown,
        events: engine.log().to_vec(),
        time_series: engine.samples().to_vec(),
    })
}

/// One column of the sleep-level comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Configuration {
    /// Scheduling disabled: full idle drain for the whole run.
    Before,
    Level(SleepLevel),
}

impl Configuration {
    pub const ALL: [Configuration; 4] = [
        Configuration::Before,
        Configuration::Level(SleepLevel::SuspendToRam),
        Configuration::Level(SleepLevel::SuspendToDisk),
        Configuration::Level(SleepLevel::CompleteOff),
    ];
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Configuration::Before => f.write_str("before"),
            Configuration::Level(l) => f.write_str(l.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub config: Configuration,
    pub device: String,
    pub capacity_mah: f64,
    pub consumed_mah: f64,
    pub remaining_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Comparison {
    pub rows: Vec<ComparisonRow>,
}

impl Comparison {
    pub fn row(&self, device: &str, config: Configuration) -> Option<&ComparisonRow> {
        self.rows
            .iter()
            .find(|r| r.device == device && r.config == config)
    }

    /// Percentage points of capacity saved by `level` against `before`.
    pub fn savings_points(&self, device: &str, level: SleepLevel) -> Option<f64> {
        let before = self.row(device, Configuration::Before)?;
        let slept = self.row(device, Configuration::Level(level))?;
        Some(slept.remaining_pct - before.remaining_pct)
    }

    pub fn devices(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.device.as_str()) {
                out.push(&r.device);
            }
        }
        out
    }
}

/// Runs `scenario` once per configuration, in [`Configuration::ALL`] order.
pub fn compare_levels(scenario: &Scenario) -> Result<Comparison, ScenarioError> {
    if scenario.schedule.is_none() {
        return Err(ScenarioError::MissingSchedule);
    }
    let mut rows = Vec::with_capacity(Configuration::ALL.len());
    for config in Configuration::ALL {
        let variant = match config {
            Configuration::Before => scenario.without_schedule(),
            Configuration::Level(level) => scenario.with_level(level)?,
        };
        let result = run_experiment(&variant)?;
        rows.push(ComparisonRow {
            config,
            device: result.device,
            capacity_mah: result.capacity_mah,
            consumed_mah: result.consumed_mah,
            remaining_pct: result.remaining_pct,
        });
    }
    Ok(Comparison { rows })
}

pub fn compare_all<'a>(
    scenarios: impl IntoIterator<Item = &'a Scenario>,
) -> Result<Comparison, ScenarioError> {
    let mut out = Comparison::default();
    for s in scenarios {
        out.rows.extend(compare_levels(s)?.rows);
    }
    Ok(out)
}
