//! Line-oriented client protocol.
//!
//! One command per line, one reply per command. See `docs/PROTOCOL.md` for
//! the full grammar; in short:
//!
//! ```text
//! SET-SCHEDULE sleep=HH:MM wake=HH:MM level=<suspend-to-ram|suspend-to-disk|complete-off>
//! SET-MINIMAL names=<name>[,<name>...]
//! STATUS
//! DISABLE
//! ```
//!
//! Verbs are case-insensitive and arguments may come in any order. Replies
//! start with `OK ` or `ERR <code> `.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::engine::{Engine, EngineError};
use crate::power::{PowerState, SleepLevel};
use crate::schedule::{SleepSchedule, TimeOfDay};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    EmptyLine,
    UnknownVerb,
    MalformedTime,
    UnknownLevel,
    MalformedArgument,
    UnknownArgument,
    DuplicateArgument,
    MissingArgument,
    MalformedName,
}

impl ParseErrorKind {
    pub fn code(self) -> &'static str {
        match self {
            ParseErrorKind::EmptyLine => "empty-line",
            ParseErrorKind::UnknownVerb => "unknown-verb",
            ParseErrorKind::MalformedTime => "malformed-time",
            ParseErrorKind::UnknownLevel => "unknown-level",
            ParseErrorKind::MalformedArgument => "malformed-argument",
            ParseErrorKind::UnknownArgument => "unknown-argument",
            ParseErrorKind::DuplicateArgument => "duplicate-argument",
            ParseErrorKind::MissingArgument => "missing-argument",
            ParseErrorKind::MalformedName => "malformed-name",
        }
    }
}

/// Rejected line. `column` is the 1-based byte column where `token` starts.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{} at column {column}: `{token}`", kind.code())]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub token: String,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Command {
    SetSchedule {
        sleep: TimeOfDay,
        wake: TimeOfDay,
        level: SleepLevel,
    },
    SetMinimal(BTreeSet<String>),
    Status,
    Disable,
}

/// Canonical form: upper-case verb, single spaces, fixed argument order,
/// names sorted.
impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Command::SetSchedule { sleep, wake, level } => {
                write!(f, "SET-SCHEDULE sleep={sleep} wake={wake} level={level}")
            }
            Command::SetMinimal(names) => {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                write!(f, "SET-MINIMAL names={}", names.join(","))
            }
            Command::Status => f.write_str("STATUS"),
            Command::Disable => f.write_str("DISABLE"),
        }
    }
}

fn is_name(s: &str) -> bool {
    !s.is_empty()
        && s
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

/// Whitespace-separated tokens with their 1-based byte columns.
fn tokens(line: &str) -> Vec<(usize, &str)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in line.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((s + 1, &line[s..i]));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s + 1, &line[s..]));
    }
    out
}

pub fn parse_command(line: &str) -> Result<Command, ParseError> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);
    let toks = tokens(line);
    let err = |kind, token: &str, column| ParseError {
        kind,
        token: token.to_string(),
        column,
    };
    let Some(&(verb_col, verb)) = toks.first() else {
        return Err(err(ParseErrorKind::EmptyLine, "", 1));
    };

    let allowed: &[&str] = match verb.to_ascii_uppercase().as_str() {
        "SET-SCHEDULE" => &["sleep", "wake", "level"],
        "SET-MINIMAL" => &["names"],
        "STATUS" | "DISABLE" => &[],
        _ => return Err(err(ParseErrorKind::UnknownVerb, verb, verb_col)),
    };

    let mut args: Vec<(&str, &str, usize)> = Vec::new();
    for &(col, tok) in &toks[1..] {
        let Some((key, value)) = tok.split_once('=') else {
            return Err(err(ParseErrorKind::MalformedArgument, tok, col));
        };
        if !allowed.contains(&key) {
            return Err(err(ParseErrorKind::UnknownArgument, tok, col));
        }
        if args.iter().any(|(k, _, _)| *k == key) {
            return Err(err(ParseErrorKind::DuplicateArgument, tok, col));
        }
        args.push((key, value, col + key.len() + 1));
    }
    let arg = |key: &str| -> Result<(&str, usize), ParseError> {
        args.iter()
            .find(|(k, _, _)| *k == key)
            .map(|&(_, v, c)| (v, c))
            .ok_or_else(|| err(ParseErrorKind::MissingArgument, key, line.len() + 1))
    };
    let time = |key: &str| -> Result<TimeOfDay, ParseError> {
        let (v, c) = arg(key)?;
        v.parse()
            .map_err(|_| err(ParseErrorKind::MalformedTime, v, c))
    };

    match verb.to_ascii_uppercase().as_str() {
        "SET-SCHEDULE" => {
            let sleep = time("sleep")?;
            let wake = time("wake")?;
            let (v, c) = arg("level")?;
            let level = v
                .parse()
                .map_err(|_| err(ParseErrorKind::UnknownLevel, v, c))?;
            Ok(Command::SetSchedule { sleep, wake, level })
        }
        "SET-MINIMAL" => {
            let (v, c) = arg("names")?;
            let mut names = BTreeSet::new();
            if !v.is_empty() {
                let mut offset = c;
                for name in v.split(',') {
                    if !is_name(name) {
                        return Err(err(ParseErrorKind::MalformedName, name, offset));
                    }
                    names.insert(name.to_string());
                    offset += name.len() + 1;
                }
            }
            Ok(Command::SetMinimal(names))
        }
        "STATUS" => Ok(Command::Status),
        _ => Ok(Command::Disable),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReplyBody {
    Status {
        state: PowerState,
        remaining_mah: f64,
        remaining_pct: f64,
        schedule: Option<SleepSchedule>,
        minimal: BTreeSet<String>,
    },
    Schedule(SleepSchedule),
    Minimal(BTreeSet<String>),
    Disabled,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Reply {
    Ok(ReplyBody),
    Err { code: String, message: String },
}

impl Reply {
    pub fn is_ok(&self) -> bool {
        matches!(self, Reply::Ok(_))
    }

    pub fn error_code(&self) -> Option<&str> {
        match self {
            Reply::Ok(_) => None,
            Reply::Err { code, .. } => Some(code),
        }
    }

    fn err(code: &str, message: impl fmt::Display) -> Self {
        Reply::Err {
            code: code.to_string(),
            message: message.to_string(),
        }
    }
}

fn write_schedule(f: &mut fmt::Formatter<'_>, s: Option<&SleepSchedule>) -> fmt::Result {
    match s {
        Some(s) => write!(
            f,
            "schedule={}-{} level={} enabled={}",
            s.sleep_time, s.wake_time, s.level, s.enabled
        ),
        None => f.write_str("schedule=none level=none enabled=false"),
    }
}

impl fmt::Display for Reply {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Reply::Err { code, message } => write!(f, "ERR {code} {message}"),
            Reply::Ok(body) => {
                f.write_str("OK ")?;
                match body {
                    ReplyBody::Status {
                        state,
                        remaining_mah,
                        remaining_pct,
                        schedule,
                        minimal,
                    } => {
                        write!(
                            f,
                            "state={state} remaining_mah={remaining_mah:.6} remaining_pct={remaining_pct:.2} "
                        )?;
                        write_schedule(f, schedule.as_ref())?;
                        let names: Vec<&str> = minimal.iter().map(String::as_str).collect();
                        write!(f, " minimal={}", names.join(","))
                    }
                    ReplyBody::Schedule(s) => {
                        write_schedule(f, Some(s))?;
                        write!(f, " window_min={}", s.window_minutes())
                    }
                    ReplyBody::Minimal(names) => {
                        let names: Vec<&str> = names.iter().map(String::as_str).collect();
                        write!(f, "minimal={}", names.join(","))
                    }
                    ReplyBody::Disabled => write_schedule(f, None),
                }
            }
        }
    }
}

/// Applies `command` to `engine`. A rejected command leaves the engine
/// untouched. Battery level is never consulted.
pub fn apply_command(command: &Command, engine: &mut Engine) -> Reply {
    match engine.power_state() {
        PowerState::Asleep(level @ (SleepLevel::SuspendToDisk | SleepLevel::CompleteOff)) => {
            return Reply::err("device-asleep", format!("device is in {level}"));
        }
        PowerState::Asleep(level) if *command != Command::Status => {
            return Reply::err("device-asleep", format!("only STATUS is served in {level}"));
        }
        _ => {}
    }

    match command {
        Command::Status => {
            let st = engine.status();
            Reply::Ok(ReplyBody::Status {
                state: st.state,
                remaining_mah: st.remaining_mah,
                remaining_pct: st.remaining_pct,
                schedule: st.schedule,
                minimal: st.minimal,
            })
        }
        Command::SetSchedule { sleep, wake, level } => {
            let result = SleepSchedule::new(*sleep, *wake, *level)
                .map_err(EngineError::from)
                .and_then(|s| engine.set_schedule(s));
            match result {
                Ok(s) => Reply::Ok(ReplyBody::Schedule(s)),
                Err(e) => Reply::err(e.code(), e),
            }
        }
        Command::SetMinimal(names) => match engine.set_minimal(names.clone()) {
            Ok(()) => Reply::Ok(ReplyBody::Minimal(names.clone())),
            Err(e) => Reply::err(e.code(), e),
        },
        Command::Disable => match engine.disable_schedule() {
            Ok(()) => Reply::Ok(ReplyBody::Disabled),
            Err(e) => Reply::err(e.code(), e),
        },
    }
}

/// Parses and applies one wire line.
pub fn handle_line(line: &str, engine: &mut Engine) -> Reply {
    match parse_command(line) {
        Ok(cmd) => apply_command(&cmd, engine),
        Err(e) => Reply::err(e.kind.code(), &e),
    }
}
