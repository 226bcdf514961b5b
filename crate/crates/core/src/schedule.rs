//! Sleep time manager: the user's sleep/wake window and its persistence.
//!
//! Simulation instants are minutes since midnight of day 0, so the time of
//! day of an instant is `instant % 1440`. A window is closed at the sleep
//! time and open at the wake time, and may cross midnight.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::power::SleepLevel;
use crate::timer::write_atomically;

pub const MINUTES_PER_DAY: u64 = 1440;

#[derive(Debug, Error)]
pub enum ScheduleError {
    #[error("sleep and wake times are both {0}")]
    EqualTimes(TimeOfDay),
    #[error("malformed time `{0}`, expected HH:MM")]
    MalformedTime(String),
    #[error("schedule is disabled")]
    Disabled,
    #[error("state file line {line}: {message}")]
    StateFile { line: usize, message: String },
    #[error("state file i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl ScheduleError {
    pub fn code(&self) -> &'static str {
        match self {
            ScheduleError::EqualTimes(_) => "equal-times",
            ScheduleError::MalformedTime(_) => "malformed-time",
            ScheduleError::Disabled => "disabled-schedule",
            ScheduleError::StateFile { .. } => "state-file",
            ScheduleError::Io(_) => "io-error",
        }
    }
}

/// Minutes since midnight, `0..1440`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeOfDay(u16);

impl TimeOfDay {
    pub fn from_minutes(minutes: u16) -> Result<Self, ScheduleError> {
        if u64::from(minutes) >= MINUTES_PER_DAY {
            return Err(ScheduleError::MalformedTime(minutes.to_string()));
        }
        Ok(Self(minutes))
    }

    pub fn from_hm(hours: u16, minutes: u16) -> Result<Self, ScheduleError> {
        if hours > 23 || minutes > 59 {
            return Err(ScheduleError::MalformedTime(format!("{hours}:{minutes}")));
        }
        Ok(Self(hours * 60 + minutes))
    }

    pub fn of_instant(instant: u64) -> Self {
        Self((instant % MINUTES_PER_DAY) as u16)
    }

    pub fn minutes(self) -> u16 {
        self.0
    }
}

impl fmt::Display for TimeOfDay {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:02}:{:02}", self.0 / 60, self.0 % 60)
    }
}

impl FromStr for TimeOfDay {
    type Err = ScheduleError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let malformed = || ScheduleError::MalformedTime(s.to_string());
        let b = s.as_bytes();
        if b.len() != 5 || b[2] != b':' {
            return Err(malformed());
        }
        let digits = |x: &[u8]| -> Option<u16> {
            x.iter().all(u8::is_ascii_digit).then(|| {
                x.iter().fold(0u16, |acc, d| acc * 10 + u16::from(d - b'0'))
            })
        };
        let (h, m) = digits(&b[0..2]).zip(digits(&b[3..5])).ok_or_else(malformed)?;
        Self::from_hm(h, m).map_err(|_| malformed())
    }
}

impl Serialize for TimeOfDay {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for TimeOfDay {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepSchedule {
    #[serde(rename = "sleep")]
    pub sleep_time: TimeOfDay,
    #[serde(rename = "wake")]
    pub wake_time: TimeOfDay,
    pub level: SleepLevel,
    #[serde(default = "enabled_by_default")]
    pub enabled: bool,
}

fn enabled_by_default() -> bool {
    true
}

impl SleepSchedule {
    pub fn new(
        sleep_time: TimeOfDay,
        wake_time: TimeOfDay,
        level: SleepLevel,
    ) -> Result<Self, ScheduleError> {
        let s = Self {
            sleep_time,
            wake_time,
            level,
            enabled: true,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), ScheduleError> {
        if self.sleep_time == self.wake_time {
            return Err(ScheduleError::EqualTimes(self.sleep_time));
        }
        Ok(())
    }

    /// Window length in minutes, in `1..1440`.
    pub fn window_minutes(&self) -> u64 {
        let (s, w) = (
            u64::from(self.sleep_time.minutes()),
            u64::from(self.wake_time.minutes()),
        );
        (w + MINUTES_PER_DAY - s) % MINUTES_PER_DAY
    }

    pub fn contains(&self, tod: TimeOfDay) -> bool {
        let offset = (u64::from(tod.minutes()) + MINUTES_PER_DAY
            - u64::from(self.sleep_time.minutes()))
            % MINUTES_PER_DAY;
        offset < self.window_minutes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleEvent {
    Sleep,
    Wake,
}

/// Next window boundary strictly after `now` that the schedule will cross:
/// the wake time when `now` is inside the window, otherwise the sleep time.
pub fn next_event(now: u64, schedule: &SleepSchedule) -> Result<(ScheduleEvent, u64), ScheduleError> {
    if !schedule.enabled {
        return Err(ScheduleError::Disabled);
    }
    let tod = TimeOfDay::of_instant(now);
    if schedule.contains(tod) {
        Ok((ScheduleEvent::Wake, now + minutes_until(tod, schedule.wake_time)))
    } else {
        Ok((ScheduleEvent::Sleep, now + minutes_until(tod, schedule.sleep_time)))
    }
}

/// Earliest instant `>= now` whose time of day is the sleep time.
pub fn next_sleep_at(now: u64, schedule: &SleepSchedule) -> u64 {
    let tod = TimeOfDay::of_instant(now);
    if tod == schedule.sleep_time {
        now
    } else {
        now + minutes_until(tod, schedule.sleep_time)
    }
}

/// Minutes from `from` forward to the next occurrence of `to`, in `1..=1440`.
fn minutes_until(from: TimeOfDay, to: TimeOfDay) -> u64 {
    let d = (u64::from(to.minutes()) + MINUTES_PER_DAY - u64::from(from.minutes())) % MINUTES_PER_DAY;
    if d == 0 {
        MINUTES_PER_DAY
    } else {
        d
    }
}

/// The persisted client state: schedule and minimal-function set.
///
/// State file format, one `key=value` per line, `#` comments allowed:
///
/// ```text
/// version=1
/// schedule=22:30-06:30      (or `none`)
/// level=complete-off        (only with a schedule)
/// enabled=true              (only with a schedule)
/// minimal=phone,sms         (comma separated, may be empty)
/// ```
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScheduleStore {
    path: Option<PathBuf>,
    schedule: Option<SleepSchedule>,
    minimal: BTreeSet<String>,
}

impl ScheduleStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates on first write) the state file at `path`. A missing
    /// file means no schedule.
    pub fn open(path: impl Into<PathBuf>) -> Result<Self, ScheduleError> {
        let path = path.into();
        let mut store = match fs::read_to_string(&path) {
            Ok(text) => Self::parse(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Self::default(),
            Err(e) => return Err(e.into()),
        };
        store.path = Some(path);
        Ok(store)
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn schedule(&self) -> Option<&SleepSchedule> {
        self.schedule.as_ref()
    }

    /// The schedule, if one is set and enabled.
    pub fn active_schedule(&self) -> Option<&SleepSchedule> {
        self.schedule.as_ref().filter(|s| s.enabled)
    }

    pub fn minimal(&self) -> &BTreeSet<String> {
        &self.minimal
    }

    /// Validates, persists and installs `schedule`, replacing any prior one.
    pub fn set_schedule(&mut self, schedule: SleepSchedule) -> Result<SleepSchedule, ScheduleError> {
        schedule.validate()?;
        self.commit(Some(schedule), self.minimal.clone())?;
        Ok(schedule)
    }

    pub fn disable(&mut self) -> Result<(), ScheduleError> {
        self.commit(None, self.minimal.clone())
    }

    pub fn set_minimal(&mut self, names: BTreeSet<String>) -> Result<(), ScheduleError> {
        self.commit(self.schedule, names)
    }

    fn commit(
        &mut self,
        schedule: Option<SleepSchedule>,
        minimal: BTreeSet<String>,
    ) -> Result<(), ScheduleError> {
        let next = Self {
            path: self.path.clone(),
            schedule,
            minimal,
        };
        if let Some(path) = &self.path {
            write_atomically(path, next.render().as_bytes())?;
        }
        *self = next;
        Ok(())
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# idlepower state\nversion=1\n");
        match &self.schedule {
            Some(s) => {
                out.push_str(&format!(
                    "schedule={}-{}\nlevel={}\nenabled={}\n",
                    s.sleep_time, s.wake_time, s.level, s.enabled
                ));
            }
            None => out.push_str("schedule=none\n"),
        }
        let minimal: Vec<&str> = self.minimal.iter().map(String::as_str).collect();
        out.push_str(&format!("minimal={}\n", minimal.join(",")));
        out
    }

    pub fn parse(text: &str) -> Result<Self, ScheduleError> {
        let mut version = None;
        let mut window = None;
        let mut level = None;
        let mut enabled = None;
        let mut minimal = BTreeSet::new();
        let mut has_window_key = false;

        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let err = |message: String| ScheduleError::StateFile {
                line: line_no,
                message,
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key=value, got `{line}`")))?;
            match key {
                "version" => {
                    if value != "1" {
                        return Err(err(format!("unsupported version `{value}`")));
                    }
                    version = Some(1);
                }
                "schedule" => {
                    has_window_key = true;
                    if value != "none" {
                        let (s, w) = value
                            .split_once('-')
                            .ok_or_else(|| err(format!("bad schedule `{value}`")))?;
                        let s: TimeOfDay = s.parse().map_err(|e: ScheduleError| err(e.to_string()))?;
                        let w: TimeOfDay = w.parse().map_err(|e: ScheduleError| err(e.to_string()))?;
                        window = Some((s, w));
                    }
                }
                "level" => level = Some(value.parse::<SleepLevel>().map_err(err)?),
                "enabled" => {
                    enabled = Some(match value {
                        "true" => true,
                        "false" => false,
                        _ => return Err(err(format!("bad boolean `{value}`"))),
                    })
                }
                "minimal" => {
                    minimal = value
                        .split(',')
                        .filter(|n| !n.is_empty())
                        .map(str::to_string)
                        .collect();
                }
                other => return Err(err(format!("unknown key `{other}`"))),
            }
        }
        let file_err = |message: &str| ScheduleError::StateFile {
            line: 0,
            message: message.into(),
        };
        if version.is_none() {
            return Err(file_err("missing version"));
        }
        if !has_window_key {
            return Err(file_err("missing schedule"));
        }
        let schedule = match window {
            Some((sleep_time, wake_time)) => {
                let s = SleepSchedule {
                    sleep_time,
                    wake_time,
                    level: level.ok_or_else(|| file_err("schedule without level"))?,
                    enabled: enabled.unwrap_or(true),
                };
                s.validate()?;
                Some(s)
            }
            None => None,
        };
        Ok(Self {
            path: None,
            schedule,
            minimal,
        })
    }
}
