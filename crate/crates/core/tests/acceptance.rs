//! Acceptance checks. Run with `cargo test --test acceptance`; prints one
//! PASS/FAIL line per criterion and exits non-zero if any fails.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};

use idlepower::battery::SourceCategory;
use idlepower::engine::{DaemonSpec, Engine, EngineConfig, EventKind};
use idlepower::experiment::{compare_all, compare_levels, run_experiment, Configuration};
use idlepower::power::{DeviceProfile, PowerState, SleepLevel};
use idlepower::protocol::{handle_line, parse_command, Command};
use idlepower::report::result_csv;
use idlepower::scenario::{Scenario, DEVICE_SCENARIOS};
use idlepower::schedule::{SleepSchedule, TimeOfDay};
use idlepower::services::ServiceCategory;
use idlepower::timer::{BatteryTimer, TimerMemory, IMAGE_LEN};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn runner(cases: u32) -> TestRunner {
    let config = Config {
        cases,
        failure_persistence: None,
        ..Config::default()
    };
    TestRunner::new_with_rng(config, TestRng::deterministic_rng(RngAlgorithm::ChaCha))
}

/// Runs `test` over `cases` generated inputs and returns how many ran.
fn for_all<S: Strategy>(
    cases: u32,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String> {
    let count = Cell::new(0u32);
    runner(cases)
        .run(&strategy, |v| {
            count.set(count.get() + 1);
            test(v)
        })
        .map_err(|e| e.to_string())?;
    Ok(count.get())
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn tod(minutes: u64) -> TimeOfDay {
    TimeOfDay::from_minutes((minutes % 1440) as u16).unwrap()
}

// ---------------------------------------------------------------------------
// Random scenario generation shared by criteria 3, 4 and 7.

#[derive(Debug, Clone)]
struct RandomDevice {
    timer: f64,
    ram: f64,
    leak: f64,
    snapshot: f64,
    restore: f64,
    rates: Vec<f64>,
}

impl RandomDevice {
    fn idle(&self) -> f64 {
        self.rates.iter().sum()
    }

    fn scenario(&self, sleep: u64, window: u64, start: u64, duration: u64, minimal: &BTreeSet<String>) -> Scenario {
        let sources: Vec<DaemonSpec> = self
            .rates
            .iter()
            .enumerate()
            .map(|(i, &rate_ma)| DaemonSpec {
                name: format!("d{i}"),
                category: if i % 2 == 0 {
                    ServiceCategory::Platform
                } else {
                    ServiceCategory::Application
                },
                rate_ma,
            })
            .collect();
        let idle = self.idle();
        let peak = idle.max(self.ram + self.timer + idle).max(self.timer + self.leak);
        let cycles = duration / 1440 + 2;
        let bound = peak * duration as f64 / 60.0 + (self.snapshot + self.restore) * cycles as f64;
        let profile = DeviceProfile {
            name: "random".into(),
            capacity_mah: bound * 1.5 + 1.0,
            idle_rate_ma: idle,
            ram_retention_rate_ma: self.ram,
            timer_rate_ma: self.timer,
            peripheral_leak_rate_ma: self.leak,
            snapshot_cost_mah: self.snapshot,
            restore_cost_mah: self.restore,
        };
        let mut schedule = SleepSchedule::new(tod(sleep), tod(sleep + window), SleepLevel::CompleteOff).unwrap();
        schedule.enabled = false;
        Scenario {
            version: 1,
            name: "random".into(),
            profile,
            sources,
            schedule: Some(schedule),
            minimal: minimal.clone(),
            start: tod(start),
            duration_hours: duration as f64 / 60.0,
            lead_minutes: 0,
            seed: 0,
            commands: Vec::new(),
        }
    }
}

/// Profiles with `idle > ram + timer > timer`, no leak, no transition costs.
fn ordered_device() -> impl Strategy<Value = RandomDevice> {
    (0.01f64..5.0, 0.01f64..10.0, 1.05f64..20.0, 1usize..4, 1usize..4, 0.5f64..0.95).prop_map(
        |(timer, ram, factor, n_platform, n_app, platform_frac)| {
            let idle = (ram + timer) * factor;
            let mut rates = Vec::new();
            for i in 0..n_platform.max(n_app) {
                if i < n_platform {
                    rates.push(idle * platform_frac / n_platform as f64);
                }
                if i < n_app {
                    rates.push(idle * (1.0 - platform_frac) / n_app as f64);
                }
            }
            RandomDevice {
                timer,
                ram,
                leak: 0.0,
                snapshot: 0.0,
                restore: 0.0,
                rates,
            }
        },
    )
}

fn consumed(c: &idlepower::Comparison, config: Configuration) -> f64 {
    c.rows.iter().find(|r| r.config == config).unwrap().consumed_mah
}

const RAM: Configuration = Configuration::Level(SleepLevel::SuspendToRam);
const DISK: Configuration = Configuration::Level(SleepLevel::SuspendToDisk);
const OFF: Configuration = Configuration::Level(SleepLevel::CompleteOff);

// ---------------------------------------------------------------------------

fn ac1_baseline() -> Check {
    let t = Instant::now();
    let scenario = Scenario::builtin("dual_core_phone").map_err(|e| e.to_string())?;
    ensure(scenario.schedule.is_some_and(|s| !s.enabled), || "baseline scenario has an active schedule".into())?;
    let r = run_experiment(&scenario).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();

    ensure((r.consumed_mah - 315.0).abs() <= 0.001, || format!("consumed {} mAh", r.consumed_mah))?;
    ensure((r.remaining_pct - 80.91).abs() <= 0.01, || format!("remaining {}%", r.remaining_pct))?;
    let b = r.breakdown.as_ref().ok_or("no breakdown")?;
    let cat = |c: SourceCategory| b.per_category.iter().find(|x| x.category == c).cloned();
    let platform = cat(SourceCategory::Platform).ok_or("no platform row")?;
    let application = cat(SourceCategory::Application).ok_or("no application row")?;
    ensure((platform.consumed_mah - 252.0).abs() <= 0.001, || format!("platform {} mAh", platform.consumed_mah))?;
    ensure((application.consumed_mah - 63.0).abs() <= 0.001, || {
        format!("application {} mAh", application.consumed_mah)
    })?;
    ensure((platform.share - 0.80).abs() <= 0.001, || format!("platform share {}", platform.share))?;
    ensure((application.share - 0.20).abs() <= 0.001, || format!("application share {}", application.share))?;
    ensure(result_csv(&r).lines().any(|l| l == "platform,252.0,0.80"), || "CSV row missing".into())?;
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!(
        "consumed={:.6} mAh remaining={:.4}% platform={:.3} mAh ({:.2}%) application={:.3} mAh ({:.2}%) in {:?}",
        r.consumed_mah,
        r.remaining_pct,
        platform.consumed_mah,
        platform.share * 100.0,
        application.consumed_mah,
        application.share * 100.0,
        elapsed
    ))
}

fn ac2_savings() -> Check {
    let t = Instant::now();
    let scenarios: Vec<Scenario> = DEVICE_SCENARIOS
        .iter()
        .map(|n| Scenario::builtin(n))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let c = compare_all(&scenarios).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let mut parts = Vec::new();
    for s in &scenarios {
        let eight_hours = s.duration_minutes().ok() == Some(480)
            && s.schedule.map(|w| w.window_minutes()) == Some(480);
        ensure(eight_hours, || format!("{} is not an 8 h window", s.name))?;
        let points = c
            .savings_points(&s.profile.name, SleepLevel::CompleteOff)
            .ok_or("missing rows")?;
        ensure((points - 18.0).abs() <= 0.5, || format!("{}: {points:.3} points", s.name))?;
        parts.push(format!("{}={points:.2}", s.name));
    }
    ensure(elapsed < Duration::from_secs(5), || format!("took {elapsed:?}"))?;
    Ok(format!("complete-off savings (points): {} in {:?}", parts.join(" "), elapsed))
}

fn ac3_ordering() -> Check {
    let strategy = (ordered_device(), 0u64..1440, 1u64..1440);
    let n = for_all(100, strategy, |(dev, sleep, window)| {
        let s = dev.scenario(sleep, window, sleep, window, &BTreeSet::new());
        prop_assert!(s.profile.has_level_ordering());
        let c = compare_levels(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let (before, ram, disk, off) = (
            consumed(&c, Configuration::Before),
            consumed(&c, RAM),
            consumed(&c, DISK),
            consumed(&c, OFF),
        );
        // Remaining runs the opposite way to consumed.
        prop_assert!(before > ram, "before {before} <= ram {ram}");
        prop_assert!(ram > disk, "ram {ram} <= disk {disk}");
        prop_assert!((disk - off).abs() <= 1e-6, "disk {disk} != off {off}");
        Ok(())
    })?;
    Ok(format!("{n} random profiles: remaining(before) < ram < disk = off"))
}

fn ac4_anomaly() -> Check {
    let strategy = (ordered_device(), 1e-3f64..10.0, 0u64..1440, 1u64..1440);
    let min_gap = Cell::new(f64::INFINITY);
    let n = for_all(100, strategy, |(mut dev, leak, sleep, window)| {
        dev.leak = leak;
        let s = dev.scenario(sleep, window, sleep, window, &BTreeSet::new());
        let c = compare_levels(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let row = |cfg| c.rows.iter().find(|r| r.config == cfg).unwrap().clone();
        let remaining = |cfg| s.profile.capacity_mah - row(cfg).consumed_mah;
        let (disk, off) = (remaining(DISK), remaining(OFF));
        prop_assert!(disk < off, "leak {leak} window {window}: disk {disk} >= off {off}");
        min_gap.set(min_gap.get().min(off - disk));
        Ok(())
    })?;
    // The extreme corner: smallest leak over the shortest window.
    let dev = RandomDevice {
        timer: 2.0625,
        ram: 4.0,
        leak: 1e-3,
        snapshot: 0.0,
        restore: 0.0,
        rates: vec![31.5, 7.875],
    };
    let s = dev.scenario(1350, 1, 1350, 1, &BTreeSet::new());
    let c = compare_levels(&s).map_err(|e| e.to_string())?;
    let gap = consumed(&c, DISK) - consumed(&c, OFF);
    ensure(gap > 0.0, || format!("1 minute at 1e-3 mA: gap {gap}"))?;
    min_gap.set(min_gap.get().min(gap));
    Ok(format!(
        "{n} random leak rates plus the 1e-3 mA / 1 min corner: remaining(disk) < remaining(off), smallest gap {:.3e} mAh",
        min_gap.get()
    ))
}

fn telephony_daemons() -> Vec<DaemonSpec> {
    let mut d = Scenario::builtin("dual_core_phone").unwrap().sources;
    for name in ["phone", "sms"] {
        d.push(DaemonSpec {
            name: name.into(),
            category: ServiceCategory::Application,
            rate_ma: 0.5,
        });
    }
    d
}

fn ac5_wake_guarantee() -> Check {
    let daemons = telephony_daemons();
    let names: Vec<String> = daemons.iter().map(|d| d.name.clone()).collect();
    let strategy = (
        0u64..1440,
        1u64..1440,
        0usize..3,
        any::<u8>(),
        0u64..1440,
        0u64..1440,
        prop_oneof![3 => Just(None), 1 => (1.0f64..200.0).prop_map(Some)],
    );
    let cycles = Cell::new(0u32);
    let depleted = Cell::new(0u32);
    // Each run starts `lead` minutes before a sleep boundary and lasts at
    // least one full window, so every case reaches a sleep attempt.
    let n = for_all(1000, strategy, |(sleep, window, level, mask, lead, extra, capacity)| {
        let start = 1440 + sleep - lead;
        let run = lead + window + extra;
        let level = SleepLevel::ALL[level];
        let minimal: BTreeSet<String> = names
            .iter()
            .enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0)
            .map(|(_, n)| n.clone())
            .collect();
        let schedule = SleepSchedule::new(tod(sleep), tod(sleep + window), level).unwrap();
        let build = || {
            let mut p = Scenario::builtin("dual_core_phone").unwrap().profile;
            if let Some(c) = capacity {
                p.capacity_mah = c;
            }
            let mut e = Engine::new(p, &daemons, start, EngineConfig::default()).unwrap();
            e.set_minimal(minimal.clone()).unwrap();
            e.set_schedule(schedule).unwrap();
            e
        };
        let end = start + run;
        let mut full = build();
        let pre_sleep = full.services().running_names();
        full.run_until(end).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let log = full.log().to_vec();
        let depleted_at = log.iter().find_map(|e| match e.kind {
            EventKind::Depleted { exact_minute } => Some(exact_minute),
            _ => None,
        });
        if depleted_at.is_some() {
            depleted.set(depleted.get() + 1);
        }

        let mut replay = build();
        for (i, ev) in log.iter().enumerate() {
            let EventKind::EnterSleep { record: stopped } = &ev.kind else {
                continue;
            };
            prop_assert!(matches!(log[i - 1].kind, EventKind::Arm { .. }), "enter-sleep not preceded by arm");
            let wake_at = ev.at + window;
            let survives = depleted_at.is_none_or(|d| d > wake_at as f64);
            if wake_at > end || !survives {
                prop_assert!(
                    !log[i + 1..].iter().any(|e| matches!(e.kind, EventKind::Wake { .. })),
                    "wake after depletion or past end"
                );
                continue;
            }
            let cycle_end = log[i + 1..]
                .iter()
                .position(|e| matches!(e.kind, EventKind::Arm { .. }))
                .map_or(log.len(), |p| i + 1 + p);
            let cycle = &log[i + 1..cycle_end];
            let fires: Vec<u64> = cycle
                .iter()
                .filter(|e| matches!(e.kind, EventKind::TimerFire))
                .map(|e| e.at)
                .collect();
            let wakes: Vec<_> = cycle
                .iter()
                .filter_map(|e| match &e.kind {
                    EventKind::Wake { record } => Some((e.at, record)),
                    _ => None,
                })
                .collect();
            prop_assert_eq!(fires, vec![wake_at]);
            prop_assert_eq!(wakes.len(), 1);
            prop_assert_eq!(wakes[0].0, wake_at);
            prop_assert_eq!(TimeOfDay::of_instant(wake_at), schedule.wake_time);
            prop_assert_eq!(&wakes[0].1.daemons, &stopped.daemons);

            replay.run_until(wake_at).map_err(|e| TestCaseError::fail(e.to_string()))?;
            prop_assert_eq!(replay.power_state(), PowerState::Active);
            prop_assert_eq!(replay.services().running_names(), pre_sleep.clone());
            cycles.set(cycles.get() + 1);
        }
        replay.run_until(end).map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(replay.log(), &log[..]);
        Ok(())
    })?;
    ensure(cycles.get() + depleted.get() >= n, || format!("only {} cycles exercised", cycles.get()))?;
    Ok(format!(
        "{n} random schedules: {} sleep/wake cycles woke exactly on time with the full daemon set; {} runs depleted",
        cycles.get(),
        depleted.get()
    ))
}

fn ac6_timer_persistence() -> Check {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let file_no = Cell::new(0u32);
    let n = for_all(1000, (any::<bool>(), 1u64..=u64::MAX, any::<u64>(), any::<bool>()), |(armed, wake_at, back, on_disk)| {
        let now = wake_at - 1 - back % wake_at;
        let mut timer = if on_disk {
            file_no.set(file_no.get() + 1);
            BatteryTimer::with_image_file(dir.path().join(format!("t{}", file_no.get()))).unwrap()
        } else {
            BatteryTimer::new()
        };
        timer.arm(wake_at, now).map_err(|e| TestCaseError::fail(e.to_string()))?;
        if !armed {
            timer.disarm().unwrap();
        }
        let expected = TimerMemory { armed, wake_at };
        prop_assert_eq!(timer.memory(), expected);
        let restored = timer
            .power_cut_roundtrip()
            .map_err(|e| TestCaseError::fail(e.to_string()))?;
        prop_assert_eq!(restored.memory(), expected);
        Ok(())
    })?;

    let burst = (0usize..IMAGE_LEN, prop::collection::vec(any::<u8>(), 1..=4));
    let m = for_all(1000, (any::<bool>(), any::<u64>(), burst), |(armed, wake_at, (offset, mut xor))| {
        if xor.iter().all(|&b| b == 0) {
            xor[0] = 1;
        }
        let offset = offset.min(IMAGE_LEN - xor.len());
        let mut image = TimerMemory { armed, wake_at }.encode();
        for (i, b) in xor.iter().enumerate() {
            image[offset + i] ^= b;
        }
        let err = BatteryTimer::from_image(&image).unwrap_err();
        prop_assert_eq!(err.code(), "corrupt-image");
        prop_assert!(err.to_string().contains("checksum"), "{}", err);
        Ok(())
    })?;
    Ok(format!("{n} states round-tripped through a power cut; {m} corrupted images rejected by CRC32"))
}

#[derive(Debug, Clone)]
struct Piecewise {
    dev: RandomDevice,
    sleep: u64,
    window: u64,
    level: SleepLevel,
    enabled: bool,
    minimal_mask: u8,
    start: u64,
    duration: u64,
}

fn piecewise() -> impl Strategy<Value = Piecewise> {
    let dev = (
        prop::collection::vec(prop_oneof![1 => Just(0.0), 6 => 0.0f64..30.0], 1..7),
        0.0f64..10.0,
        0.0f64..5.0,
        0.0f64..5.0,
        0.0f64..3.0,
        0.0f64..3.0,
    )
        .prop_map(|(rates, ram, timer, leak, snapshot, restore)| RandomDevice {
            timer,
            ram,
            leak,
            snapshot,
            restore,
            rates,
        });
    (dev, 0u64..1440, 1u64..1440, 0usize..3, prop::bool::weighted(0.9), any::<u8>(), 0u64..1440, 1u64..4320).prop_map(
        |(dev, sleep, window, level, enabled, minimal_mask, start, duration)| Piecewise {
            dev,
            sleep,
            window,
            level: SleepLevel::ALL[level],
            enabled,
            minimal_mask,
            start,
            duration,
        },
    )
}

/// Closed form: walk the boundary instants, count awake and asleep minutes,
/// and add a lump for every suspend-to-disk entry and exit.
fn closed_form(p: &Piecewise, minimal: &BTreeSet<String>) -> f64 {
    let d = &p.dev;
    let idle = d.idle();
    let residual = match p.level {
        SleepLevel::SuspendToRam => {
            let kept: f64 = d
                .rates
                .iter()
                .enumerate()
                .filter(|(i, _)| minimal.contains(&format!("d{i}")))
                .map(|(_, r)| r)
                .sum();
            d.ram + d.timer + kept
        }
        SleepLevel::SuspendToDisk => d.timer + d.leak,
        SleepLevel::CompleteOff => d.timer,
    };
    let disk = p.level == SleepLevel::SuspendToDisk;
    let (start, end) = (p.start, p.start + p.duration);
    let (mut awake, mut asleep, mut lumps) = (0u64, 0u64, 0.0);
    let mut t = start;
    if p.enabled {
        // First sleep boundary at or after the start.
        let mut s = start - start % 1440 + p.sleep;
        if s < start {
            s += 1440;
        }
        while s <= end {
            awake += s - t;
            if disk {
                lumps += d.snapshot;
            }
            let w = s + p.window;
            if w <= end {
                asleep += p.window;
                if disk {
                    lumps += d.restore;
                }
                t = w;
            } else {
                asleep += end - s;
                t = end;
            }
            s += 1440;
            if s < t {
                s += 1440;
            }
        }
    }
    awake += end - t;
    idle * awake as f64 / 60.0 + residual * asleep as f64 / 60.0 + lumps
}

fn ac7_integration_oracle() -> Check {
    let worst_oracle = Cell::new(0.0f64);
    let worst_step = Cell::new(0.0f64);
    let n = for_all(500, piecewise(), |p| {
        let minimal: BTreeSet<String> = (0..p.dev.rates.len())
            .filter(|i| p.minimal_mask & (1 << i) != 0)
            .map(|i| format!("d{i}"))
            .collect();
        let mut s = p.dev.scenario(p.sleep, p.window, p.start, p.duration, &minimal);
        let mut schedule = s.schedule.unwrap();
        schedule.level = p.level;
        schedule.enabled = p.enabled;
        s.schedule = Some(schedule);
        s.validate().map_err(|e| TestCaseError::fail(e.to_string()))?;

        let r = run_experiment(&s).map_err(|e| TestCaseError::fail(e.to_string()))?;
        let expected = closed_form(&p, &minimal);
        let rel = (r.consumed_mah - expected).abs() / expected.abs().max(f64::MIN_POSITIVE);
        prop_assert!(
            (r.consumed_mah - expected).abs() <= 1e-6 * expected.abs() + 1e-12,
            "simulated {} vs closed form {expected}",
            r.consumed_mah
        );
        if expected > 0.0 {
            worst_oracle.set(worst_oracle.get().max(rel));
        }

        let end = s.start_instant() + p.duration;
        let mut coarse = s.build_engine().unwrap();
        coarse.run_until(end).unwrap();
        let fine_config = EngineConfig {
            max_step_minutes: Some(1),
            ..s.engine_config()
        };
        let mut fine = s.build_engine_with(fine_config).unwrap();
        fine.run_until(end).unwrap();
        let (a, b) = (coarse.ledger().total_mah(), fine.ledger().total_mah());
        prop_assert!((a - b).abs() <= 1e-9 * a.abs(), "consumed: single-step {a} vs 1-minute {b}");
        let (ra, rb) = (coarse.battery().remaining_mah, fine.battery().remaining_mah);
        prop_assert!((ra - rb).abs() <= 1e-9 * ra.abs(), "remaining: single-step {ra} vs 1-minute {rb}");
        if a > 0.0 {
            worst_step.set(worst_step.get().max((a - b).abs() / a));
        }
        prop_assert_eq!(coarse.log(), fine.log());
        Ok(())
    })?;
    Ok(format!(
        "{n} random scenarios: worst relative error vs closed form {:.2e}, single vs 1-minute stepping {:.2e}",
        worst_oracle.get(),
        worst_step.get()
    ))
}

// ---------------------------------------------------------------------------
// Criterion 8

const NAME_POOL: [&str; 8] = ["phone", "sms", "wifi", "gmail", "cell-standby", "device-idle", "a.b_c-1", "X9"];

fn valid_command() -> impl Strategy<Value = Command> {
    prop_oneof![
        (0u16..1440, 0u16..1440, 0usize..3).prop_map(|(s, w, l)| Command::SetSchedule {
            sleep: TimeOfDay::from_minutes(s).unwrap(),
            wake: TimeOfDay::from_minutes(w).unwrap(),
            level: SleepLevel::ALL[l],
        }),
        any::<u8>().prop_map(|mask| Command::SetMinimal(
            NAME_POOL
                .iter()
                .enumerate()
                .filter(|(i, _)| mask & (1 << i) != 0)
                .map(|(_, n)| n.to_string())
                .collect()
        )),
        Just(Command::Status),
        Just(Command::Disable),
    ]
}

/// A non-canonical but valid spelling of `c`.
fn respell(c: &Command, case: &[bool], seps: &[&str], order: &[usize], ending: &str) -> String {
    let (verb, mut args): (&str, Vec<String>) = match c {
        Command::SetSchedule { sleep, wake, level } => (
            "SET-SCHEDULE",
            vec![format!("sleep={sleep}"), format!("wake={wake}"), format!("level={level}")],
        ),
        Command::SetMinimal(names) => {
            let mut names: Vec<&str> = names.iter().map(String::as_str).collect();
            names.reverse();
            ("SET-MINIMAL", vec![format!("names={}", names.join(","))])
        }
        Command::Status => ("STATUS", vec![]),
        Command::Disable => ("DISABLE", vec![]),
    };
    let verb: String = verb
        .chars()
        .zip(case.iter().cycle())
        .map(|(ch, &lower)| if lower { ch.to_ascii_lowercase() } else { ch })
        .collect();
    let mut shuffled = Vec::new();
    for &i in order {
        if i < args.len() {
            shuffled.push(std::mem::take(&mut args[i]));
        }
    }
    let mut line = format!("{}{verb}", seps[0]);
    for (i, a) in shuffled.iter().enumerate() {
        line.push_str(seps[(i + 1) % seps.len()]);
        line.push_str(a);
    }
    line.push_str(ending);
    line
}

fn malformed_line() -> impl Strategy<Value = (String, &'static str)> {
    let bad_time = prop_oneof![
        (24u16..100, 0u16..60).prop_map(|(h, m)| format!("{h:02}:{m:02}")),
        (0u16..24, 60u16..100).prop_map(|(h, m)| format!("{h:02}:{m:02}")),
        (0u16..10, 0u16..60).prop_map(|(h, m)| format!("{h}:{m:02}")),
        (0u16..24, 0u16..60).prop_map(|(h, m)| format!("{h:02}{m:02}")),
        (0u16..24, 0u16..60).prop_map(|(h, m)| format!("{h:02}-{m:02}")),
        "[a-z]{2}:[a-z]{2}",
        Just(String::new()),
    ];
    prop_oneof![
        "[ \t]{0,4}".prop_map(|s| (s, "empty-line")),
        "[A-Z][A-Z-]{0,10}"
            .prop_filter("not a verb", |v| !["SET-SCHEDULE", "SET-MINIMAL", "STATUS", "DISABLE"].contains(&v.as_str()))
            .prop_map(|v| (format!("{v} sleep=22:30"), "unknown-verb")),
        (bad_time, any::<bool>()).prop_map(|(t, first)| {
            let line = if first {
                format!("SET-SCHEDULE sleep={t} wake=06:30 level=complete-off")
            } else {
                format!("SET-SCHEDULE sleep=22:30 wake={t} level=complete-off")
            };
            (line, "malformed-time")
        }),
        "[a-z-]{0,16}"
            .prop_filter("not a level", |l| l.parse::<SleepLevel>().is_err())
            .prop_map(|l| (format!("SET-SCHEDULE sleep=22:30 wake=06:30 level={l}"), "unknown-level")),
        (0usize..3).prop_map(|drop| {
            let args = ["sleep=22:30", "wake=06:30", "level=complete-off"];
            let kept: Vec<&str> = args.iter().enumerate().filter(|(i, _)| *i != drop).map(|(_, a)| *a).collect();
            (format!("SET-SCHEDULE {}", kept.join(" ")), "missing-argument")
        }),
        Just(("SET-MINIMAL".to_string(), "missing-argument")),
        (0usize..3).prop_map(|dup| {
            let args = ["sleep=22:30", "wake=06:30", "level=complete-off"];
            (format!("SET-SCHEDULE {} {}", args.join(" "), args[dup]), "duplicate-argument")
        }),
        "[a-z]{1,8}"
            .prop_filter("not a key", |k| !["sleep", "wake", "level", "names"].contains(&k.as_str()))
            .prop_map(|k| (format!("SET-SCHEDULE sleep=22:30 {k}=1 wake=06:30 level=complete-off"), "unknown-argument")),
        prop_oneof![Just("STATUS"), Just("DISABLE")].prop_map(|v| (format!("{v} names=phone"), "unknown-argument")),
        "[a-z]{1,8}".prop_map(|t| (format!("SET-SCHEDULE sleep=22:30 {t} level=complete-off"), "malformed-argument")),
        prop_oneof![Just("phone,,sms"), Just("phone,"), Just("ph$one"), Just(",sms"), Just("wi/fi")]
            .prop_map(|n| (format!("SET-MINIMAL names={n}"), "malformed-name")),
        (0u16..1440, 0usize..3).prop_map(|(t, l)| {
            let t = TimeOfDay::from_minutes(t).unwrap();
            (format!("SET-SCHEDULE sleep={t} wake={t} level={}", SleepLevel::ALL[l]), "equal-times")
        }),
        "[a-z]{3,8}"
            .prop_filter("not a daemon", |n| !NAME_POOL.contains(&n.as_str()) && !["screen", "android"].contains(&n.as_str()))
            .prop_map(|n| (format!("SET-MINIMAL names=phone,{n}"), "unknown-daemon")),
    ]
}

fn client_engine() -> Engine {
    let s = Scenario::builtin("dual_core_phone").unwrap();
    let mut e = Engine::new(s.profile, &telephony_daemons(), 600, EngineConfig::default()).unwrap();
    e.set_minimal(["phone".to_string(), "sms".to_string()].into()).unwrap();
    e.set_schedule(SleepSchedule::new(tod(1380), tod(420), SleepLevel::SuspendToRam).unwrap())
        .unwrap();
    e
}

fn snapshot(e: &Engine) -> String {
    format!(
        "{:?}|{}|{:?}|{}|{:?}",
        e.status(),
        e.store().render(),
        e.services().daemons(),
        e.log().len(),
        e.timer().memory()
    )
}

fn ac8_protocol() -> Check {
    let respelled = (
        valid_command(),
        prop::collection::vec(any::<bool>(), 1..6),
        prop::collection::vec(prop_oneof![Just(" "), Just("  "), Just("\t"), Just(" \t ")], 1..4),
        Just(vec![0usize, 1, 2]).prop_shuffle(),
        prop_oneof![Just(""), Just("\n"), Just("\r\n"), Just("  ")],
    );
    let valid = for_all(1000, respelled, |(c, case, seps, order, ending)| {
        let canonical = c.to_string();
        prop_assert_eq!(parse_command(&canonical).map_err(|e| TestCaseError::fail(e.to_string()))?, c.clone());
        let line = respell(&c, &case, &seps, &order, ending);
        let parsed = parse_command(&line).map_err(|e| TestCaseError::fail(format!("{line:?}: {e}")))?;
        prop_assert_eq!(&parsed, &c);
        prop_assert_eq!(parsed.to_string(), canonical);
        Ok(())
    })?;

    let malformed = for_all(1000, malformed_line(), |(line, code)| {
        let mut e = client_engine();
        e.run_until(700).unwrap();
        let before = snapshot(&e);
        let reply = handle_line(&line, &mut e);
        prop_assert_eq!(reply.error_code(), Some(code), "{:?} -> {}", line, reply);
        let prefix = format!("ERR {code} ");
        prop_assert!(reply.to_string().starts_with(&prefix));
        prop_assert_eq!(snapshot(&e), before.clone());
        let again = handle_line(&line, &mut e);
        prop_assert_eq!(again, reply);
        prop_assert_eq!(snapshot(&e), before);
        Ok(())
    })?;

    // Valid commands sent to a device in complete-off are refused untouched.
    let asleep = for_all(200, valid_command(), |c| {
        let mut e = client_engine();
        e.set_schedule(SleepSchedule::new(tod(660), tod(720), SleepLevel::CompleteOff).unwrap())
            .unwrap();
        e.run_until(670).unwrap();
        prop_assert_eq!(e.power_state(), PowerState::Asleep(SleepLevel::CompleteOff));
        let before = snapshot(&e);
        let reply = handle_line(&c.to_string(), &mut e);
        prop_assert_eq!(reply.error_code(), Some("device-asleep"));
        prop_assert_eq!(snapshot(&e), before);
        Ok(())
    })?;
    Ok(format!(
        "{valid} valid spellings round-tripped; {malformed} malformed lines and {asleep} commands to a sleeping device rejected with stable codes and no state change"
    ))
}

fn main() -> ExitCode {
    let checks: [Criterion; 8] = [
        ("baseline reproduction", ac1_baseline),
        ("18-point savings", ac2_savings),
        ("level ordering", ac3_ordering),
        ("case-(a) anomaly", ac4_anomaly),
        ("wake guarantee", ac5_wake_guarantee),
        ("timer persistence", ac6_timer_persistence),
        ("integration oracle", ac7_integration_oracle),
        ("protocol round trip", ac8_protocol),
    ];
    let mut failed = 0;
    for (i, (title, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let ms = t.elapsed().as_millis();
        match outcome {
            Ok(detail) => println!("AC{} PASS {title}: {detail} [{ms} ms]", i + 1),
            Err(why) => {
                failed += 1;
                println!("AC{} FAIL {title}: {why} [{ms} ms]", i + 1);
            }
        }
    }
    if failed == 0 {
        println!("acceptance: all {} criteria passed", checks.len());
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} of {} criteria failed", checks.len());
        ExitCode::FAILURE
    }
}
