use std::fs;
use std::process::{Command, Output};

fn idlepower(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_idlepower"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

#[test]
fn run_baseline_csv() {
    let o = idlepower(&["run", "dual_core_phone", "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.starts_with("name,consumed_mah,share\nplatform,252.0,0.80\napplication,63.0,0.20\n"));
}

#[test]
fn run_from_file_with_flags() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/laptop.json");
    let out = dir.path().join("r.json");
    let o = idlepower(&[
        "run",
        "--scenario",
        scenario,
        "--level",
        "complete-off",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!((v["consumed_mah"].as_f64().unwrap() - 44.0).abs() < 1e-9);

    let o = idlepower(&["report", out.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("name,consumed_mah,share\n"));
}

#[test]
fn duration_override() {
    let o = idlepower(&["run", "dual_core_phone", "--duration-hours", "0", "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "name,consumed_mah,share\n");
    let o = idlepower(&["run", "dual_core_phone", "--duration-hours", "0.01"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[invariant-violation]"));
}

#[test]
fn compare_all_devices() {
    let o = idlepower(&["compare", "all"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines[0], "config,device,capacity_mah,consumed_mah,remaining_pct");
    assert_eq!(lines.len(), 17);
    assert_eq!(lines[16], "complete-off,laptop,4400.0,44.000,99.00");
}

#[test]
fn compare_output_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = idlepower(&["compare", "dual_core_phone_case_a", "--out", p.to_str().unwrap()]);
        assert!(o.status.success());
    }
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn client_round_trip_with_state_file() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state");
    let state_arg = state.to_str().unwrap();
    let o = idlepower(&[
        "client",
        "SET-SCHEDULE sleep=23:00 wake=07:00 level=suspend-to-ram",
        "--state-file",
        state_arg,
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        stdout(&o),
        "OK schedule=23:00-07:00 level=suspend-to-ram enabled=true window_min=480\n"
    );

    // A fresh process reads the persisted schedule.
    let o = idlepower(&["client", "status", "--state-file", state_arg]);
    assert!(stdout(&o).contains("schedule=23:00-07:00 level=suspend-to-ram enabled=true"));

    // Asleep one hour after 22:30 start: only STATUS is served.
    let o = idlepower(&[
        "client",
        "STATUS",
        "DISABLE",
        "--state-file",
        state_arg,
        "--at-minutes",
        "60",
    ]);
    assert_eq!(o.status.code(), Some(5));
    let out = stdout(&o);
    assert!(out.lines().next().unwrap().starts_with("OK state=suspend-to-ram"));
    assert!(out.lines().nth(1).unwrap().starts_with("ERR device-asleep"));
}

#[test]
fn client_timer_image_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let state = dir.path().join("state");
    let image = dir.path().join("timer.img");
    fs::write(
        &state,
        "version=1\nschedule=22:30-06:30\nlevel=complete-off\nenabled=true\nminimal=\n",
    )
    .unwrap();
    let o = idlepower(&[
        "client",
        "STATUS",
        "--state-file",
        state.to_str().unwrap(),
        "--timer-image",
        image.to_str().unwrap(),
        "--at-minutes",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(5));
    assert!(stdout(&o).starts_with("ERR device-asleep"));
    let t = idlepower::timer::BatteryTimer::load(&image).unwrap();
    assert_eq!(t.pending(), Some(22 * 60 + 30 + 480));
}

#[test]
fn client_rejects_malformed() {
    let o = idlepower(&["client", "SET-SCHEDULE sleep=25:00 wake=06:30 level=complete-off"]);
    assert_eq!(o.status.code(), Some(5));
    assert_eq!(stdout(&o), "ERR malformed-time malformed-time at column 20: `25:00`\n");
}

#[test]
fn usage_and_lookup_errors() {
    assert_eq!(idlepower(&[]).status.code(), Some(2));
    assert_eq!(idlepower(&["run"]).status.code(), Some(2));
    let o = idlepower(&["run", "pager"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("error[unknown-scenario]"));
    let o = idlepower(&["report", "/nonexistent/result.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn bad_scenario_file_reports_position() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    fs::write(&p, "{\n  \"version\": 1,\n  oops\n}").unwrap();
    let o = idlepower(&["run", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.starts_with("error[parse-error]"), "{err}");
    assert!(err.contains("line 3"), "{err}");
}
