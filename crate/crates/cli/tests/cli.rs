use std::path::PathBuf;
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/assets/scenarios")
}

fn xheep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xheep")).args(args).output().unwrap()
}

fn path(name: &str) -> String {
    scenarios().join(name).to_string_lossy().into_owned()
}

#[test]
fn validate_shipped_scenario() {
    let out = xheep(&["validate", &path("heepocrates.scenario")]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).ends_with("ok\n"));
}

#[test]
fn validation_errors_are_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scenario");
    std::fs::write(
        &bad,
        "name = \"bad\"\n[platform]\nfrequency = \"200 MHz\"\n[[phase]]\nname = \"p\"\nprogram_text = \"HALT\"\n",
    )
    .unwrap();
    let out = xheep(&["validate", "--json", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let issues: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(issues[0]["location"], "platform.frequency");
}

#[test]
fn usage_error_exit_code() {
    assert_eq!(xheep(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(xheep(&["run"]).status.code(), Some(2));
    assert_eq!(xheep(&["run", "/nonexistent.scenario"]).status.code(), Some(2));
}

#[test]
fn run_writes_report_csv_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("r.json");
    let csv = dir.path().join("r.csv");
    let trace = dir.path().join("t.csv");
    let out = xheep(&[
        "run",
        &path("conv-imc.scenario"),
        "--report",
        report.to_str().unwrap(),
        "--csv",
        csv.to_str().unwrap(),
        "--trace",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(r["scenario"], "conv-imc");
    assert!(std::fs::read_to_string(&csv).unwrap().starts_with("domain,conv_j,total_j\n"));
    let t = std::fs::read_to_string(&trace).unwrap();
    assert!(t.starts_with("cycle,master,address"));
    assert!(t.lines().count() > 5);
}

#[test]
fn faulting_scenario_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let s = dir.path().join("fault.scenario");
    // bank 2 is off when the CPU stores to it
    std::fs::write(
        &s,
        "name = \"fault\"\n[[phase]]\nname = \"p\"\nprogram_text = \"STORE 0x10000, 1\\nHALT\"\npower = { bank2 = \"off\" }\n",
    )
    .unwrap();
    let out = xheep(&["run", s.to_str().unwrap(), "--report", dir.path().join("r.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_emits_one_row_per_point() {
    let out = xheep(&["sweep", &path("bandwidth.scenario"), "--axis", "ports=1..3"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[3].contains(",96.0,"), "{text}");
}

#[test]
fn empty_sweep_axis_is_a_usage_error() {
    let out = xheep(&["sweep", &path("bandwidth.scenario"), "--axis", "ports="]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibration_override() {
    let dir = tempfile::tempdir().unwrap();
    let cal = dir.path().join("cal.toml");
    let mut text = std::fs::read_to_string(scenarios().join("../calibration/default.toml")).unwrap();
    text = text.replace("[domain.always-on]\nleak = \"261.8 uW\"", "[domain.always-on]\nleak = \"523.6 uW\"");
    std::fs::write(&cal, text).unwrap();
    let scenario = path("envelope-low.scenario");
    let power = |extra: &[&str]| {
        let mut args = vec!["run", scenario.as_str()];
        args.extend_from_slice(extra);
        let out = xheep(&args);
        assert_eq!(out.status.code(), Some(0));
        let r: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
        r["average_power_w"].as_f64().unwrap()
    };
    let base = power(&[]);
    let doubled = power(&["--calibration", cal.to_str().unwrap()]);
    assert!(doubled > base * 1.5, "{base} {doubled}");
}
