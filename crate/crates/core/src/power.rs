//! Sleep level controller.
//!
//! The machine is either `Active` or asleep at one of three levels. Each level
//! leaves a different residual set of drains running:
//!
//! | level           | residual drains                                   |
//! |-----------------|---------------------------------------------------|
//! | suspend-to-ram  | memory retention, battery timer, minimal daemons  |
//! | suspend-to-disk | battery timer, peripheral leak (when non-zero)    |
//! | complete-off    | battery timer                                     |
//!
//! Suspend-to-disk also pays a snapshot charge on entry and a restore charge
//! on wake.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{BatteryError, BatteryState, DrainSource, SourceCategory};
use crate::services::ServiceRegistry;

pub const TIMER_SOURCE: &str = "battery-timer";
pub const MEMORY_SOURCE: &str = "memory-retention";
pub const PERIPHERAL_SOURCE: &str = "peripheral-leak";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PowerError {
    #[error("invalid transition: {0}")]
    InvalidTransition(String),
    #[error("battery is depleted")]
    DepletedBattery,
    #[error("invalid device profile: {0}")]
    InvalidProfile(String),
    #[error(transparent)]
    Battery(#[from] BatteryError),
}

impl PowerError {
    pub fn code(&self) -> &'static str {
        match self {
            PowerError::InvalidTransition(_) => "invalid-transition",
            PowerError::DepletedBattery => "depleted-battery",
            PowerError::InvalidProfile(_) => "invalid-profile",
            PowerError::Battery(e) => e.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SleepLevel {
    SuspendToRam,
    SuspendToDisk,
    CompleteOff,
}

impl SleepLevel {
    pub const ALL: [SleepLevel; 3] = [
        SleepLevel::SuspendToRam,
        SleepLevel::SuspendToDisk,
        SleepLevel::CompleteOff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SleepLevel::SuspendToRam => "suspend-to-ram",
            SleepLevel::SuspendToDisk => "suspend-to-disk",
            SleepLevel::CompleteOff => "complete-off",
        }
    }
}

impl fmt::Display for SleepLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SleepLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SleepLevel::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown sleep level `{s}`"))
    }
}

/// Electrical parameters of one device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceProfile {
    pub name: String,
    pub capacity_mah: f64,
    /// Total idle draw of all platform and application daemons.
    pub idle_rate_ma: f64,
    pub ram_retention_rate_ma: f64,
    pub timer_rate_ma: f64,
    /// Only drawn while in suspend-to-disk.
    #[serde(default)]
    pub peripheral_leak_rate_ma: f64,
    #[serde(default)]
    pub snapshot_cost_mah: f64,
    #[serde(default)]
    pub restore_cost_mah: f64,
}

impl DeviceProfile {
    pub fn validate(&self) -> Result<(), PowerError> {
        let bad = |what: &str, v: f64| {
            Err(PowerError::InvalidProfile(format!(
                "{what} must be finite and >= 0, got {v}"
            )))
        };
        if self.name.is_empty() {
            return Err(PowerError::InvalidProfile("name must be non-empty".into()));
        }
        if !self.capacity_mah.is_finite() || self.capacity_mah <= 0.0 {
            return Err(PowerError::InvalidProfile(format!(
                "capacity must be > 0, got {}",
                self.capacity_mah
            )));
        }
        for (what, v) in [
            ("idle_rate_ma", self.idle_rate_ma),
            ("ram_retention_rate_ma", self.ram_retention_rate_ma),
            ("timer_rate_ma", self.timer_rate_ma),
            ("peripheral_leak_rate_ma", self.peripheral_leak_rate_ma),
            ("snapshot_cost_mah", self.snapshot_cost_mah),
            ("restore_cost_mah", self.restore_cost_mah),
        ] {
            if !v.is_finite() || v < 0.0 {
                return bad(what, v);
            }
        }
        Ok(())
    }

    /// `idle > ram retention + timer > timer`, which every shipped profile
    /// satisfies.
    pub fn has_level_ordering(&self) -> bool {
        let ram = self.ram_retention_rate_ma + self.timer_rate_ma;
        self.idle_rate_ma > ram && ram > self.timer_rate_ma
    }
}

/// Drains left running at `level`, excluding daemons kept alive as minimal
/// functions.
pub fn residual_drain(level: SleepLevel, profile: &DeviceProfile) -> Vec<DrainSource> {
    let timer = DrainSource {
        name: TIMER_SOURCE.into(),
        category: SourceCategory::Timer,
        rate_ma: profile.timer_rate_ma,
    };
    match level {
        SleepLevel::SuspendToRam => vec![
            DrainSource {
                name: MEMORY_SOURCE.into(),
                category: SourceCategory::MemoryRetention,
                rate_ma: profile.ram_retention_rate_ma,
            },
            timer,
        ],
        SleepLevel::SuspendToDisk if profile.peripheral_leak_rate_ma > 0.0 => vec![
            timer,
            DrainSource {
                name: PERIPHERAL_SOURCE.into(),
                category: SourceCategory::Peripheral,
                rate_ma: profile.peripheral_leak_rate_ma,
            },
        ],
        SleepLevel::SuspendToDisk | SleepLevel::CompleteOff => vec![timer],
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "state", content = "level")]
pub enum PowerState {
    Active,
    Asleep(SleepLevel),
}

impl fmt::Display for PowerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PowerState::Active => f.write_str("active"),
            PowerState::Asleep(level) => level.fmt(f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransitionKind {
    EnterSleep,
    Wake,
}

/// Immutable description of one completed transition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionRecord {
    pub at: u64,
    pub kind: TransitionKind,
    pub level: SleepLevel,
    /// Daemons stopped (enter) or restarted (wake) by this transition.
    pub daemons: BTreeSet<String>,
    /// Lump charge removed from the battery by this transition.
    pub cost_mah: f64,
    /// Names of the drains running once the transition completes.
    pub drains: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerStateMachine {
    current: PowerState,
    entered_at: u64,
}

impl PowerStateMachine {
    pub fn new(now: u64) -> Self {
        Self {
            current: PowerState::Active,
            entered_at: now,
        }
    }

    pub fn current(&self) -> PowerState {
        self.current
    }

    pub fn entered_at(&self) -> u64 {
        self.entered_at
    }

    /// Names of every drain running in the current state.
    pub fn running_drains(&self, profile: &DeviceProfile, services: &ServiceRegistry) -> Vec<String> {
        let mut names = services.running_names();
        if let PowerState::Asleep(level) = self.current {
            names.extend(residual_drain(level, profile).into_iter().map(|s| s.name));
        }
        names
    }

    pub fn enter_sleep(
        &mut self,
        level: SleepLevel,
        profile: &DeviceProfile,
        services: &mut ServiceRegistry,
        battery: &mut BatteryState,
        now: u64,
    ) -> Result<TransitionRecord, PowerError> {
        if let PowerState::Asleep(current) = self.current {
            return Err(PowerError::InvalidTransition(format!(
                "cannot enter {level} while in {current}"
            )));
        }
        if battery.is_depleted() {
            return Err(PowerError::DepletedBattery);
        }
        let stopped = services.stop_for_level(level);
        let cost_mah = if level == SleepLevel::SuspendToDisk && profile.snapshot_cost_mah > 0.0 {
            battery.deduct(profile.snapshot_cost_mah, now as f64)?
        } else {
            0.0
        };
        self.current = PowerState::Asleep(level);
        self.entered_at = now;
        Ok(TransitionRecord {
            at: now,
            kind: TransitionKind::EnterSleep,
            level,
            daemons: stopped,
            cost_mah,
            drains: self.running_drains(profile, services),
        })
    }

    pub fn wake(
        &mut self,
        profile: &DeviceProfile,
        services: &mut ServiceRegistry,
        battery: &mut BatteryState,
        now: u64,
    ) -> Result<TransitionRecord, PowerError> {
        let PowerState::Asleep(level) = self.current else {
            return Err(PowerError::InvalidTransition("wake while active".into()));
        };
        if battery.is_depleted() {
            return Err(PowerError::DepletedBattery);
        }
        let cost_mah = if level == SleepLevel::SuspendToDisk && profile.restore_cost_mah > 0.0 {
            battery.deduct(profile.restore_cost_mah, now as f64)?
        } else {
            0.0
        };
        let restarted = services.restart_all();
        self.current = PowerState::Active;
        self.entered_at = now;
        Ok(TransitionRecord {
            at: now,
            kind: TransitionKind::Wake,
            level,
            daemons: restarted,
            cost_mah,
            drains: self.running_drains(profile, services),
        })
    }
}
