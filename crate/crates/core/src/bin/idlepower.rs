use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use idlepower::experiment::{compare_all, run_experiment, ExperimentResult};
use idlepower::report::{render_comparison, render_result, ReportFormat};
use idlepower::scenario::{Scenario, DEVICE_SCENARIOS};
use idlepower::schedule::ScheduleStore;
use idlepower::timer::BatteryTimer;
use idlepower::{handle_line, SleepLevel};

const EXIT_USAGE: u8 = 2;
const EXIT_SCENARIO: u8 = 3;
const EXIT_IO: u8 = 4;
const EXIT_REJECTED: u8 = 5;

#[derive(Parser)]
#[command(name = "idlepower", version, about = "Sleep scheduling engine and battery drain simulator")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum TableFormat {
    Text,
    Csv,
}

impl From<TableFormat> for ReportFormat {
    fn from(f: TableFormat) -> Self {
        match f {
            TableFormat::Text => ReportFormat::Text,
            TableFormat::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and report consumption, breakdown and events.
    Run {
        /// Scenario file or built-in name.
        scenario: Option<String>,
        #[arg(long = "scenario", value_name = "PATH")]
        scenario_flag: Option<String>,
        /// Enable the scenario's schedule window at this level.
        #[arg(long, value_parser = parse_level)]
        level: Option<SleepLevel>,
        #[arg(long)]
        duration_hours: Option<f64>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare before / suspend-to-ram / suspend-to-disk / complete-off.
    /// `all` expands to the four reference devices.
    Compare {
        scenarios: Vec<String>,
        #[arg(long = "scenario", value_name = "PATH")]
        scenario_flag: Vec<String>,
        #[arg(long)]
        duration_hours: Option<f64>,
        #[arg(long, value_enum, default_value = "csv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Send protocol lines to an engine initialized from a scenario.
    Client {
        #[arg(required = true)]
        lines: Vec<String>,
        #[arg(long, default_value = "dual_core_phone")]
        scenario: String,
        /// Simulated minutes to run before the first line is delivered.
        #[arg(long, default_value_t = 0)]
        at_minutes: u64,
        /// Persist the schedule here; an existing file takes precedence over
        /// the scenario.
        #[arg(long)]
        state_file: Option<PathBuf>,
        /// Persist the battery timer image here.
        #[arg(long)]
        timer_image: Option<PathBuf>,
    },
    /// Render a saved JSON result.
    Report {
        result: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn parse_level(s: &str) -> Result<SleepLevel, String> {
    s.parse()
}

struct Failure {
    exit: u8,
    code: String,
    message: String,
}

impl Failure {
    fn new(exit: u8, code: impl Into<String>, message: impl ToString) -> Self {
        Self {
            exit,
            code: code.into(),
            message: message.to_string(),
        }
    }
}

impl From<idlepower::ScenarioError> for Failure {
    fn from(e: idlepower::ScenarioError) -> Self {
        let exit = if matches!(e, idlepower::ScenarioError::Io(_)) {
            EXIT_IO
        } else {
            EXIT_SCENARIO
        };
        Failure::new(exit, e.code(), e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_IO, "io-error", format!("{}: {e}", path.display()))
}

fn output(text: &str, out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| io_failure(path, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load(spec: &str, duration_hours: Option<f64>) -> Result<Scenario, Failure> {
    let scenario = Scenario::resolve(spec)?;
    Ok(match duration_hours {
        Some(h) => scenario.with_duration_hours(h)?,
        None => scenario,
    })
}

fn pick_one(positional: Option<String>, flag: Option<String>) -> Result<String, Failure> {
    match (positional, flag) {
        (Some(s), None) | (None, Some(s)) => Ok(s),
        (Some(_), Some(_)) => Err(Failure::new(
            EXIT_USAGE,
            "usage",
            "give the scenario either positionally or with --scenario, not both",
        )),
        (None, None) => Err(Failure::new(EXIT_USAGE, "usage", "a scenario is required")),
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Cmd::Run {
            scenario,
            scenario_flag,
            level,
            duration_hours,
            format,
            out,
        } => {
            let mut s = load(&pick_one(scenario, scenario_flag)?, duration_hours)?;
            if let Some(level) = level {
                s = s.with_level(level)?;
            }
            let result = run_experiment(&s)?;
            let text = match format {
                Format::Text => render_result(&result, ReportFormat::Text),
                Format::Csv => render_result(&result, ReportFormat::Csv),
                Format::Json => result.to_json() + "\n",
            };
            output(&text, out.as_deref())
        }
        Cmd::Compare {
            mut scenarios,
            scenario_flag,
            duration_hours,
            format,
            out,
        } => {
            scenarios.extend(scenario_flag);
            if scenarios.is_empty() {
                return Err(Failure::new(EXIT_USAGE, "usage", "at least one scenario is required"));
            }
            let mut loaded = Vec::new();
            for spec in &scenarios {
                if spec == "all" {
                    for name in DEVICE_SCENARIOS {
                        loaded.push(load(name, duration_hours)?);
                    }
                } else {
                    loaded.push(load(spec, duration_hours)?);
                }
            }
            let comparison = compare_all(&loaded)?;
            output(&render_comparison(&comparison, format.into()), out.as_deref())
        }
        Cmd::Client {
            lines,
            scenario,
            at_minutes,
            state_file,
            timer_image,
        } => {
            let s = load(&scenario, None)?;
            let mut engine = s.build_engine()?;
            if let Some(path) = state_file {
                let existed = path.exists();
                let mut store = ScheduleStore::open(&path)
                    .map_err(|e| Failure::new(EXIT_IO, e.code(), e))?;
                if !existed {
                    if let Some(schedule) = engine.store().schedule() {
                        store
                            .set_schedule(*schedule)
                            .map_err(|e| Failure::new(EXIT_IO, e.code(), e))?;
                    }
                    store
                        .set_minimal(engine.store().minimal().clone())
                        .map_err(|e| Failure::new(EXIT_IO, e.code(), e))?;
                }
                engine
                    .attach_store(store)
                    .map_err(|e| Failure::new(EXIT_SCENARIO, e.code(), e))?;
            }
            if let Some(path) = timer_image {
                let timer = BatteryTimer::with_image_file(&path)
                    .map_err(|e| Failure::new(EXIT_IO, e.code(), e))?;
                engine
                    .attach_timer(timer)
                    .map_err(|e| Failure::new(EXIT_SCENARIO, e.code(), e))?;
            }
            engine
                .run_until(engine.start() + at_minutes)
                .map_err(|e| Failure::new(EXIT_SCENARIO, e.code(), e))?;

            let mut rejected = None;
            for line in &lines {
                let reply = handle_line(line, &mut engine);
                println!("{reply}");
                if let (None, Some(code)) = (&rejected, reply.error_code()) {
                    rejected = Some(code.to_string());
                }
            }
            match rejected {
                Some(code) => Err(Failure::new(EXIT_REJECTED, code, "command rejected")),
                None => Ok(()),
            }
        }
        Cmd::Report {
            result,
            format,
            out,
        } => {
            let text = fs::read_to_string(&result).map_err(|e| io_failure(&result, e))?;
            let parsed = ExperimentResult::from_json(&text)?;
            output(&render_result(&parsed, format.into()), out.as_deref())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("error")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error[{}]: {}", f.code, f.message);
            ExitCode::from(f.exit)
        }
    }
}
