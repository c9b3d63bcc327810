use std::path::{Path, PathBuf};

use xheep_core::error::Error;
use xheep_core::scenario::sweep::{sweep, SweepAxis};
use xheep_core::scenario::Scenario;

fn assets() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("assets")
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(&assets().join("scenarios").join(format!("{name}.scenario"))).unwrap()
}

fn issues(text: &str) -> Vec<String> {
    match Scenario::parse(text, &assets().join("scenarios")) {
        Err(Error::Validation(v)) => v.into_iter().map(|i| format!("{}: {}", i.location, i.message)).collect(),
        Err(e) => panic!("expected validation issues, got {e}"),
        Ok(_) => panic!("scenario validated"),
    }
}

#[test]
fn shipped_scenarios_validate() {
    let dir = assets().join("scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "scenario") {
            Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 9);
}

#[test]
fn reference_configuration() {
    let s = scenario("heepocrates");
    let p = &s.platform;
    assert_eq!((p.bank_count, p.bank_size), (8, 32 * 1024));
    assert_eq!(p.addressing.to_string(), "contiguous");
    assert_eq!(p.topology.to_string(), "fully-connected");
    assert_eq!(p.cpu.as_ref().unwrap().kind.name(), "cv32e20");
    let names: Vec<_> = s.accelerators.iter().map(|a| a.name.as_str()).collect();
    assert_eq!(names, ["cgra", "imc"]);
}

const MINIMAL: &str = r#"
name = "t"
[platform]
voltage = "0.8 V"
frequency = "1 MHz"
[[phase]]
name = "p"
program_text = "HALT"
"#;

#[test]
fn minimal_scenario_runs() {
    let s = Scenario::parse(MINIMAL, Path::new(".")).unwrap();
    let r = s.run().unwrap();
    assert_eq!(r.report.total_cycles, 1);
    assert!(!r.report.faulted);
}

#[test]
fn frequency_above_envelope_is_rejected() {
    let text = MINIMAL.replace("frequency = \"1 MHz\"\n[[phase]]\nname = \"p\"", "frequency = \"1 MHz\"\n[[phase]]\nname = \"p\"\nfrequency = \"200 MHz\"");
    let v = issues(&text);
    assert_eq!(v.len(), 1, "{v:?}");
    assert!(v[0].starts_with("phase[0] (p).frequency"), "{v:?}");
}

#[test]
fn platform_frequency_above_envelope_is_rejected() {
    let v = issues(&MINIMAL.replace("1 MHz", "200 MHz"));
    assert!(v.iter().any(|i| i.starts_with("platform.frequency")), "{v:?}");
}

#[test]
fn overlapping_xaif_windows_are_rejected() {
    let text = format!(
        "{MINIMAL}\n[[accelerator]]\nname = \"a\"\nkind = \"imc\"\nbase = \"0xF0000000\"\n\
         [[accelerator]]\nname = \"b\"\nkind = \"imc\"\nbase = \"0xF0004000\"\n"
    );
    let v = issues(&text);
    assert!(v.iter().any(|i| i.contains("accelerator[1] (b)") && i.contains("overlap")), "{v:?}");
}

#[test]
fn missing_unit_is_an_error() {
    let v = issues(&MINIMAL.replace("\"1 MHz\"", "\"1000000\""));
    assert!(v.iter().any(|i| i.starts_with("platform.frequency")), "{v:?}");
}

#[test]
fn all_issues_are_listed() {
    let text = MINIMAL.replace("\"1 MHz\"", "\"fast\"").replace("program_text = \"HALT\"", "program_text = \"LOAD nowhere, 1\\nHALT\"\nidle = \"asleep\"");
    let v = issues(&text);
    assert!(v.len() >= 2, "{v:?}");
    assert!(v.iter().any(|i| i.contains("idle")), "{v:?}");
}

#[test]
fn unresolved_symbol_has_a_location() {
    let text = MINIMAL.replace("program_text = \"HALT\"", "program_text = \"LOAD nowhere, 1\\nHALT\"");
    let v = issues(&text);
    assert!(v.iter().any(|i| i.contains("nowhere") && i.contains(":1:")), "{v:?}");
}

#[test]
fn unknown_power_domain_is_rejected() {
    let text = MINIMAL.replace("program_text = \"HALT\"", "program_text = \"HALT\"\npower = { bank9 = \"off\" }");
    let v = issues(&text);
    assert!(v.iter().any(|i| i.contains("bank9")), "{v:?}");
}

#[test]
fn determinism() {
    let s = scenario("conv-cgra");
    let a = s.run().unwrap().report.to_json();
    let b = s.run().unwrap().report.to_json();
    assert_eq!(a, b);
}

#[test]
fn energy_additivity() {
    for name in ["conv-cpu", "conv-imc", "envelope-low"] {
        let r = scenario(name).run().unwrap().report;
        let by_domain: f64 = r.domains.iter().map(|d| d.energy_j).sum();
        let by_phase: f64 = r.phases.iter().map(|p| p.energy_j).sum();
        for d in &r.domains {
            let parts: f64 = d.phases.iter().map(|e| e.leakage_j + e.dynamic_j).sum();
            assert!((parts - d.energy_j).abs() <= 1e-9 * d.energy_j.max(1e-30));
            assert!((d.leakage_j + d.dynamic_j - d.energy_j).abs() <= 1e-9 * d.energy_j.max(1e-30));
        }
        assert!((by_domain - r.total_energy_j).abs() <= 1e-9 * r.total_energy_j, "{name}");
        assert!((by_phase - r.total_energy_j).abs() <= 1e-9 * r.total_energy_j, "{name}");
    }
}

#[test]
fn report_validates_against_schema() {
    let schema: serde_json::Value = serde_json::from_str(xheep_core::report::REPORT_SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for name in ["conv-cgra", "envelope-low", "bandwidth"] {
        let r = scenario(name).run().unwrap().report;
        let value: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| format!("{} at {}", e, e.instance_path())).collect();
        assert!(errors.is_empty(), "{name}: {errors:#?}");
    }
}

#[test]
fn csv_matrix_has_one_row_per_domain() {
    let r = scenario("conv-imc").run().unwrap().report;
    let mut out = Vec::new();
    r.write_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<_> = text.lines().collect();
    assert_eq!(lines[0], "domain,conv_j,total_j");
    assert_eq!(lines.len(), 1 + r.domains.len() + 3);
    assert!(lines[1].starts_with("always-on,"));
}

#[test]
fn sweep_point_equals_standalone_run() {
    let base = scenario("bandwidth");
    let axis = SweepAxis::parse("ports=1..4").unwrap();
    let rows = sweep(&base, &axis).unwrap();
    assert_eq!(rows.iter().map(|r| r.value.as_str()).collect::<Vec<_>>(), ["1", "2", "3", "4"]);
    let (_, alone) = axis.point(&base, 2).unwrap();
    let r = alone.run().unwrap().report;
    assert_eq!(rows[2].cycles, r.total_cycles);
    assert_eq!(rows[2].energy_j, r.total_energy_j);
    assert_eq!(rows[2].bus_grants, r.bus.stats.grants);
}

#[test]
fn empty_axis_is_rejected() {
    assert!(SweepAxis::parse("ports=").is_err());
    assert!(SweepAxis::parse("colour=red").is_err());
}

#[test]
fn operating_point_axis_checks_envelope() {
    let base = scenario("matmul");
    let axis = SweepAxis::parse("op=0.8 V@200 MHz").unwrap();
    assert!(sweep(&base, &axis).is_err());
}

/// Valid 3x3 convolution of the 16x16 index image with weights 1..9.
fn reference_conv() -> Vec<u32> {
    let img: Vec<u32> = (0..256).collect();
    let w: Vec<u32> = (1..=9).collect();
    let mut out = Vec::new();
    for r in 0..14 {
        for c in 0..14 {
            let mut acc = 0u32;
            for kr in 0..3 {
                for kc in 0..3 {
                    acc = acc.wrapping_add(img[(r + kr) * 16 + c + kc].wrapping_mul(w[kr * 3 + kc]));
                }
            }
            out.push(acc);
        }
    }
    out
}

#[test]
fn cgra_convolution_matches_reference() {
    let s = scenario("conv-cgra");
    let mut got = Vec::new();
    let r = s
        .run_inspect(|p, _| {
            for r in 0..14u32 {
                for c in 0..14u32 {
                    got.push(p.peek(0xC000 + 4 * (16 * r + c)).unwrap());
                }
            }
        })
        .unwrap();
    assert!(!r.report.faulted);
    assert_eq!(got, reference_conv());
    assert_eq!(r.report.wakeups.len(), 1);
}

#[test]
fn imc_convolution_matches_reference() {
    let s = scenario("conv-imc");
    let mut got = Vec::new();
    let r = s
        .run_inspect(|p, _| {
            let base = p.symbols()["imc.s0"];
            for i in 0..196u32 {
                got.push(p.peek(base + 4 * (3152 + i)).unwrap());
            }
        })
        .unwrap();
    assert!(!r.report.faulted);
    assert_eq!(got, reference_conv());
}

#[test]
fn acquisition_fills_the_input_buffer() {
    let mut s = scenario("heartbeat-classifier");
    s.phases.truncate(1);
    let r = s.run().unwrap().report;
    assert!(!r.truncated && !r.faulted);
    let adc = r.adc.as_ref().unwrap();
    assert_eq!(adc.dropped, 0);
    // one wake-up, from the DMA completion line
    assert_eq!(r.wakeups.len(), 1);
    assert_eq!(r.wakeups[0].1, 1);
    assert_eq!(r.dma.words_written * 4, 23_040);
}
