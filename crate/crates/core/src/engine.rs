//! The simulation engine: one device driven over a simulated clock.
//!
//! [`Engine::run_until`] advances time from stop to stop. A stop is the next
//! of: a sleep boundary of the active schedule, the armed timer instant, a
//! queued client command, a sampling instant, or the requested end. Drain is
//! integrated over each gap between stops with the set of sources active
//! during that gap. At each stop, work runs in a fixed order:
//!
//! 1. a timer that fired is logged, then the device wakes;
//! 2. queued client commands due at or before the stop are applied;
//! 3. at a sleep boundary the timer is armed, then the device goes to sleep;
//! 4. a time-series sample is taken when due.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::battery::{
    integrate_drain, ActiveSet, BatteryError, BatteryState, Breakdown, ConsumptionLedger,
    DrainSegment, DrainSource, SourceCategory, SourceId, SourceRegistry,
};
use crate::power::{
    residual_drain, DeviceProfile, PowerError, PowerState, PowerStateMachine, TransitionRecord,
    MEMORY_SOURCE, PERIPHERAL_SOURCE, TIMER_SOURCE,
};
use crate::protocol::{apply_command, Command};
use crate::schedule::{next_sleep_at, ScheduleError, ScheduleStore, SleepSchedule, TimeOfDay};
use crate::services::{ServiceCategory, ServiceError, ServiceRegistry};
use crate::timer::{BatteryTimer, SimClock, TimerError, WakeEvent};

/// Lump-charge source for suspend-to-disk snapshot and restore costs.
pub const TRANSITION_SOURCE: &str = "snapshot-restore";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Timer(#[from] TimerError),
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid engine configuration: {0}")]
    Config(String),
}

impl EngineError {
    pub fn code(&self) -> &'static str {
        match self {
            EngineError::Battery(e) => e.code(),
            EngineError::Service(e) => e.code(),
            EngineError::Power(e) => e.code(),
            EngineError::Timer(e) => e.code(),
            EngineError::Schedule(e) => e.code(),
            EngineError::Config(_) => "invalid-config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub sample_every_minutes: u64,
    /// Upper bound on a single integration step. `None` integrates each gap
    /// between stops in one piece.
    pub max_step_minutes: Option<u64>,
    /// Wake this many minutes before the scheduled wake time.
    pub lead_minutes: u64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            sample_every_minutes: 10,
            max_step_minutes: None,
            lead_minutes: 0,
        }
    }
}

/// One platform or application daemon and its idle draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaemonSpec {
    pub name: String,
    pub category: ServiceCategory,
    pub rate_ma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operation {
    Arm,
    EnterSleep,
    Wake,
}

impl Operation {
    fn as_str(self) -> &'static str {
        match self {
            Operation::Arm => "arm",
            Operation::EnterSleep => "enter-sleep",
            Operation::Wake => "wake",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum EventKind {
    Arm { wake_at: u64 },
    EnterSleep { record: TransitionRecord },
    TimerFire,
    Wake { record: TransitionRecord },
    Failure { operation: Operation, code: String, message: String },
    Depleted { exact_minute: f64 },
    Command { line: String, reply: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub at: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

fn join<'a>(names: impl IntoIterator<Item = &'a String>) -> String {
    names.into_iter().map(String::as_str).collect::<Vec<_>>().join(",")
}

impl fmt::Display for Event {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t={} ", self.at)?;
        match &self.kind {
            EventKind::Arm { wake_at } => write!(f, "arm wake_at={wake_at}"),
            EventKind::EnterSleep { record: r } => write!(
                f,
                "enter-sleep level={} stopped={} cost_mah={:.6} drains={}",
                r.level,
                join(&r.daemons),
                r.cost_mah,
                join(&r.drains)
            ),
            EventKind::TimerFire => f.write_str("timer-fire"),
            EventKind::Wake { record: r } => write!(
                f,
                "wake level={} restarted={} cost_mah={:.6} drains={}",
                r.level,
                join(&r.daemons),
                r.cost_mah,
                join(&r.drains)
            ),
            EventKind::Failure {
                operation,
                code,
                message,
            } => write!(f, "failure op={} code={code} message={message:?}", operation.as_str()),
            EventKind::Depleted { exact_minute } => write!(f, "depleted exact_minute={exact_minute:.6}"),
            EventKind::Command { line, reply } => write!(f, "command line={line:?} reply={reply:?}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub at: u64,
    pub remaining_mah: f64,
}

/// Snapshot reported by the client `STATUS` command.
#[derive(Debug, Clone, PartialEq)]
pub struct Status {
    pub state: PowerState,
    pub remaining_mah: f64,
    pub remaining_pct: f64,
    pub schedule: Option<SleepSchedule>,
    pub minimal: BTreeSet<String>,
}

pub struct Engine {
    profile: DeviceProfile,
    sources: SourceRegistry,
    services: ServiceRegistry,
    machine: PowerStateMachine,
    battery: BatteryState,
    timer: BatteryTimer,
    clock: SimClock,
    store: ScheduleStore,
    ledger: ConsumptionLedger,
    config: EngineConfig,
    log: Vec<Event>,
    samples: Vec<Sample>,
    next_sample: u64,
    start: u64,
    transition_source: Option<SourceId>,
    pending_fire: Option<WakeEvent>,
    commands: VecDeque<(u64, Command)>,
    last_sleep_attempt: Option<u64>,
}

impl Engine {
    /// A fully charged, active device at instant `start` with no schedule.
    pub fn new(
        profile: DeviceProfile,
        daemons: &[DaemonSpec],
        start: u64,
        config: EngineConfig,
    ) -> Result<Self, EngineError> {
        profile.validate()?;
        if config.sample_every_minutes == 0 {
            return Err(EngineError::Config("sample interval must be > 0".into()));
        }
        if config.max_step_minutes == Some(0) {
            return Err(EngineError::Config("max step must be > 0".into()));
        }

        let mut sources = SourceRegistry::new();
        let mut services = ServiceRegistry::new();
        for d in daemons {
            let id = sources.register(DrainSource::new(&d.name, d.category.into(), d.rate_ma)?)?;
            services.add(&d.name, d.category, id)?;
        }
        for (name, category, rate) in [
            (TIMER_SOURCE, SourceCategory::Timer, profile.timer_rate_ma),
            (MEMORY_SOURCE, SourceCategory::MemoryRetention, profile.ram_retention_rate_ma),
            (PERIPHERAL_SOURCE, SourceCategory::Peripheral, profile.peripheral_leak_rate_ma),
        ] {
            sources.register(DrainSource::new(name, category, rate)?)?;
        }
        let transition_source = if profile.snapshot_cost_mah > 0.0 || profile.restore_cost_mah > 0.0 {
            Some(sources.register(DrainSource::new(TRANSITION_SOURCE, SourceCategory::Platform, 0.0)?)?)
        } else {
            None
        };

        let battery = BatteryState::new(profile.capacity_mah)?;
        Ok(Self {
            sources,
            services,
            machine: PowerStateMachine::new(start),
            timer: BatteryTimer::new(),
            clock: SimClock::new(start),
            store: ScheduleStore::in_memory(),
            ledger: ConsumptionLedger::starting_at(start as f64),
            config,
            log: Vec::new(),
            samples: vec![Sample {
                at: start,
                remaining_mah: battery.remaining_mah,
            }],
            next_sample: start + config.sample_every_minutes,
            start,
            transition_source,
            pending_fire: None,
            commands: VecDeque::new(),
            last_sleep_attempt: None,
            battery,
            profile,
        })
    }

    /// Replaces the schedule store, applying its minimal-function set.
    pub fn attach_store(&mut self, store: ScheduleStore) -> Result<(), EngineError> {
        if let Some(s) = store.schedule() {
            self.check_lead(s)?;
        }
        self.services.set_minimal_functions(store.minimal())?;
        self.store = store;
        Ok(())
    }

    /// Replaces the battery timer. The new timer must be disarmed.
    pub fn attach_timer(&mut self, timer: BatteryTimer) -> Result<(), EngineError> {
        if let Some(at) = timer.pending() {
            return Err(TimerError::AlreadyArmed(at).into());
        }
        self.timer = timer;
        Ok(())
    }

    pub fn profile(&self) -> &DeviceProfile {
        &self.profile
    }

    pub fn sources(&self) -> &SourceRegistry {
        &self.sources
    }

    pub fn services(&self) -> &ServiceRegistry {
        &self.services
    }

    pub fn battery(&self) -> &BatteryState {
        &self.battery
    }

    pub fn timer(&self) -> &BatteryTimer {
        &self.timer
    }

    pub fn store(&self) -> &ScheduleStore {
        &self.store
    }

    pub fn ledger(&self) -> &ConsumptionLedger {
        &self.ledger
    }

    pub fn power_state(&self) -> PowerState {
        self.machine.current()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn log(&self) -> &[Event] {
        &self.log
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn status(&self) -> Status {
        Status {
            state: self.machine.current(),
            remaining_mah: self.battery.remaining_mah,
            remaining_pct: self.battery.remaining_pct(),
            schedule: self.store.schedule().copied(),
            minimal: self.services.minimal_names(),
        }
    }

    /// Every source drawing current in the present state.
    pub fn active_set(&self) -> ActiveSet {
        let mut active = self.services.active_sources();
        if let PowerState::Asleep(level) = self.machine.current() {
            active.extend(
                residual_drain(level, &self.profile)
                    .iter()
                    .filter_map(|s| self.sources.id_of(&s.name)),
            );
        }
        active
    }

    pub fn set_schedule(&mut self, schedule: SleepSchedule) -> Result<SleepSchedule, EngineError> {
        schedule.validate()?;
        self.check_lead(&schedule)?;
        Ok(self.store.set_schedule(schedule)?)
    }

    pub fn disable_schedule(&mut self) -> Result<(), EngineError> {
        Ok(self.store.disable()?)
    }

    pub fn set_minimal(&mut self, names: BTreeSet<String>) -> Result<(), EngineError> {
        if let Some(unknown) = names.iter().find(|n| self.services.get(n).is_none()) {
            return Err(ServiceError::UnknownDaemon(unknown.clone()).into());
        }
        self.store.set_minimal(names.clone())?;
        self.services.set_minimal_functions(&names)?;
        Ok(())
    }

    /// Queues `command` for delivery at instant `at` (or at the current
    /// instant if `at` is already past). Delivery order is submission order.
    pub fn enqueue(&mut self, at: u64, command: Command) {
        let at = at.max(self.clock.now());
        let pos = self.commands.partition_point(|(t, _)| *t <= at);
        self.commands.insert(pos, (at, command));
    }

    pub fn breakdown(&self, start: u64, end: u64) -> Result<Breakdown, EngineError> {
        Ok(self.ledger.breakdown(&self.sources, start, end)?)
    }

    /// Records a sample at the current instant unless one already exists.
    pub fn sample_now(&mut self) {
        let now = self.clock.now();
        if self.samples.last().map(|s| s.at) != Some(now) {
            self.samples.push(Sample {
                at: now,
                remaining_mah: self.battery.remaining_mah,
            });
        }
    }

    /// Advances the simulation to `end` (inclusive: events due exactly at
    /// `end` are processed) and returns the events logged along the way.
    pub fn run_until(&mut self, end: u64) -> Result<&[Event], EngineError> {
        let now = self.clock.now();
        if end < now {
            return Err(TimerError::ClockRegression { now, to: end }.into());
        }
        let first = self.log.len();
        loop {
            self.process_due()?;
            let now = self.clock.now();
            if now >= end {
                break;
            }
            let next = self.next_stop(now, end);
            self.step_to(next)?;
        }
        Ok(&self.log[first..])
    }

    fn check_lead(&self, schedule: &SleepSchedule) -> Result<(), EngineError> {
        if self.config.lead_minutes >= schedule.window_minutes() {
            return Err(EngineError::Config(format!(
                "wake lead of {} min does not fit a {} min window",
                self.config.lead_minutes,
                schedule.window_minutes()
            )));
        }
        Ok(())
    }

    fn next_stop(&self, now: u64, end: u64) -> u64 {
        let mut next = end.min(self.next_sample);
        if let Some(at) = self.timer.pending() {
            next = next.min(at);
        }
        if let Some((at, _)) = self.commands.front() {
            next = next.min(*at);
        }
        if self.machine.current() == PowerState::Active {
            if let Some(s) = self.store.active_schedule() {
                next = next.min(next_sleep_at(now + 1, s));
            }
        }
        if let Some(step) = self.config.max_step_minutes {
            next = next.min(now + step);
        }
        debug_assert!(next > now);
        next
    }

    fn step_to(&mut self, next: u64) -> Result<(), EngineError> {
        let now = self.clock.now();
        if next > now && !self.battery.is_depleted() {
            let active = self.active_set();
            let hours = (next - now) as f64 / 60.0;
            let (battery, segment) =
                integrate_drain(&self.battery, &self.sources, &active, now as f64, hours)?;
            self.ledger.record(segment);
            if let Some(exact) = battery.depleted_at {
                self.log.push(Event {
                    at: (exact.ceil() as u64).clamp(now, next),
                    kind: EventKind::Depleted { exact_minute: exact },
                });
            }
            self.battery = battery;
        }
        self.ledger.extend_to(next as f64);
        if let Some(fire) = self.timer.advance(&mut self.clock, next)? {
            self.pending_fire = Some(fire);
        }
        Ok(())
    }

    fn process_due(&mut self) -> Result<(), EngineError> {
        let now = self.clock.now();

        if let Some(fire) = self.pending_fire.take() {
            self.log.push(Event {
                at: fire.at,
                kind: EventKind::TimerFire,
            });
            let result = self
                .machine
                .wake(&self.profile, &mut self.services, &mut self.battery, now);
            match result {
                Ok(record) => {
                    self.charge_transition(&record);
                    self.log.push(Event {
                        at: now,
                        kind: EventKind::Wake { record },
                    });
                }
                Err(e) => self.fail(Operation::Wake, e.code(), &e),
            }
        }

        while self.commands.front().is_some_and(|(at, _)| *at <= now) {
            let (_, command) = self.commands.pop_front().expect("front checked");
            let reply = apply_command(&command, self);
            self.log.push(Event {
                at: now,
                kind: EventKind::Command {
                    line: command.to_string(),
                    reply: reply.to_string(),
                },
            });
        }

        self.maybe_sleep(now)?;

        if now == self.next_sample {
            self.sample_now();
            self.next_sample += self.config.sample_every_minutes;
        }
        Ok(())
    }

    fn maybe_sleep(&mut self, now: u64) -> Result<(), EngineError> {
        if self.machine.current() != PowerState::Active || self.last_sleep_attempt == Some(now) {
            return Ok(());
        }
        let Some(schedule) = self.store.active_schedule().copied() else {
            return Ok(());
        };
        if TimeOfDay::of_instant(now) != schedule.sleep_time {
            return Ok(());
        }
        self.last_sleep_attempt = Some(now);

        if self.battery.is_depleted() {
            let e = PowerError::DepletedBattery;
            self.fail(Operation::EnterSleep, e.code(), &e);
            return Ok(());
        }
        let wake_at = now + schedule.window_minutes() - self.config.lead_minutes;
        if let Err(e) = self.timer.arm(wake_at, now) {
            self.fail(Operation::Arm, e.code(), &e);
            return Ok(());
        }
        self.log.push(Event {
            at: now,
            kind: EventKind::Arm { wake_at },
        });
        let result = self.machine.enter_sleep(
            schedule.level,
            &self.profile,
            &mut self.services,
            &mut self.battery,
            now,
        );
        match result {
            Ok(record) => {
                self.charge_transition(&record);
                self.log.push(Event {
                    at: now,
                    kind: EventKind::EnterSleep { record },
                });
            }
            Err(e) => {
                self.fail(Operation::EnterSleep, e.code(), &e);
                self.timer.disarm()?;
            }
        }
        Ok(())
    }

    fn charge_transition(&mut self, record: &TransitionRecord) {
        if record.cost_mah > 0.0 {
            if let Some(id) = self.transition_source {
                self.ledger
                    .record(DrainSegment::lump(record.at as f64, id, record.cost_mah));
            }
            if let Some(exact) = self.battery.depleted_at.filter(|&t| t == record.at as f64) {
                self.log.push(Event {
                    at: record.at,
                    kind: EventKind::Depleted { exact_minute: exact },
                });
            }
        }
    }

    fn fail(&mut self, operation: Operation, code: &str, err: &dyn std::error::Error) {
        log::warn!("{} failed at t={}: {err}", operation.as_str(), self.clock.now());
        self.log.push(Event {
            at: self.clock.now(),
            kind: EventKind::Failure {
                operation,
                code: code.to_string(),
                message: err.to_string(),
            },
        });
    }
}
