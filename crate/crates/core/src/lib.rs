//! User-aware sleep scheduling for idle mobile devices, with a deterministic
//! battery drain simulator.
//!
//! The pieces, bottom up:
//!
//! * [`battery`]: charge state, drain sources, integration and breakdowns.
//! * [`services`]: platform and application daemons and the minimal set.
//! * [`power`]: the sleep level state machine and residual drains.
//! * [`timer`]: the battery timer and its power-cut-proof memory image.
//! * [`schedule`]: sleep windows and the persisted state file.
//! * [`engine`]: the simulated event loop tying the above together.
//! * [`protocol`]: the client command line protocol.
//! * [`scenario`], [`experiment`], [`report`]: the harness.

pub mod battery;
pub mod engine;
pub mod experiment;
pub mod power;
pub mod protocol;
pub mod report;
pub mod scenario;
pub mod schedule;
pub mod services;
pub mod timer;

pub use battery::{BatteryState, Breakdown, DrainSource, SourceCategory};
pub use engine::{Engine, EngineConfig, EngineError, Event, EventKind};
pub use experiment::{compare_levels, run_experiment, Comparison, Configuration, ExperimentResult};
pub use power::{DeviceProfile, PowerState, SleepLevel};
pub use protocol::{handle_line, parse_command, Command, Reply};
pub use scenario::{load_scenario, Scenario, ScenarioError};
pub use schedule::{SleepSchedule, TimeOfDay};
pub use timer::{BatteryTimer, TimerMemory};
