//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero when any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xheep_core::cpu::{CoreKind, CpuProfile, Microprogram};
use xheep_core::interconnect::{
    arbitrate, AddressMap, AddressingMode, BusTopology, MasterId, MemoryLayout, Request, SlaveId,
};
use xheep_core::kernel::StopCondition;
use xheep_core::memory::{MemoryBank, DEFAULT_BANK_SIZE};
use xheep_core::platform::{Platform, PlatformConfig};
use xheep_core::power::fll::OperatingPoint;
use xheep_core::power::state::{PowerState, TransitionLatencies};
use xheep_core::report::EnergyReport;
use xheep_core::scenario::sweep::{sweep, SweepAxis};
use xheep_core::scenario::Scenario;
use xheep_core::xaif::imc::Imc;
use xheep_core::xaif::Accelerator;

const MATMUL: &str = include_str!("../assets/programs/matmul16.mp");

type Outcome = Result<String, String>;
type Criterion = fn() -> Outcome;

fn scenario(name: &str) -> Scenario {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("assets/scenarios")
        .join(format!("{name}.scenario"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn run(name: &str) -> EnergyReport {
    let r = scenario(name).run().unwrap().report;
    assert!(!r.truncated && !r.faulted, "{name} did not complete cleanly");
    r
}

fn phase_power(r: &EnergyReport, phase: &str) -> f64 {
    r.phase(phase).unwrap_or_else(|| panic!("no phase {phase}")).average_power_w
}

/// Collects failures instead of stopping at the first.
#[derive(Default)]
struct Checks {
    notes: Vec<String>,
    failures: Vec<String>,
}

impl Checks {
    fn check(&mut self, ok: bool, what: String) {
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn within(&mut self, label: &str, got: f64, want: f64, rel: f64) {
        let err = (got - want).abs() / want;
        self.check(err <= rel, format!("{label} {got:.4e} vs {want:.4e} ({:+.1} %)", 100.0 * (got - want) / want));
    }

    fn drop_pp(&mut self, label: &str, before: f64, after: f64, want_pct: f64, tol_pp: f64) {
        let drop = 100.0 * (before - after) / before;
        self.check((drop - want_pct).abs() <= tol_pp, format!("{label} -{drop:.1} %"));
    }

    fn done(self) -> Outcome {
        if self.failures.is_empty() {
            Ok(self.notes.join("; "))
        } else {
            Err(self.failures.join("; "))
        }
    }
}

fn bandwidth_linearity() -> Outcome {
    let t0 = Instant::now();
    let mut c = Checks::default();
    let mut base = scenario("bandwidth");
    for topology in [BusTopology::FullyConnected, BusTopology::OneAtATime] {
        base.platform.topology = topology;
        let rows = sweep(&base, &SweepAxis::parse("ports=1..8").unwrap()).map_err(|e| e.to_string())?;
        let got: Vec<f64> = rows.iter().map(|r| r.bandwidth_bits_per_cycle).collect();
        let want: Vec<f64> = (1..=8)
            .map(|n| match topology {
                BusTopology::FullyConnected => 32.0 * n as f64,
                BusTopology::OneAtATime => 32.0,
            })
            .collect();
        c.check(got == want, format!("{topology} {got:?}"));
    }
    let secs = t0.elapsed().as_secs_f64();
    c.check(secs < 10.0, format!("{secs:.2} s"));
    c.done()
}

fn cycles_of(src: &str, topology: BusTopology, kind: CoreKind) -> (u64, Platform) {
    let cfg = PlatformConfig {
        topology,
        cpu: Some(CpuProfile::new(kind)),
        ..PlatformConfig::default()
    };
    let mut p = Platform::new(cfg).unwrap();
    let mut prog = Microprogram::parse(src).unwrap();
    prog.resolve(&BTreeMap::new()).unwrap();
    p.load_program(Arc::new(prog)).unwrap();
    let out = p.run_until(StopCondition::AllHalted, Some(10_000_000)).unwrap();
    assert!(!out.truncated);
    (out.cycles, p)
}

fn random_program(rng: &mut ChaCha8Rng) -> String {
    let mut src = format!("LOOP {}\n", rng.gen_range(1..4));
    for _ in 0..rng.gen_range(1..40) {
        let addr = rng.gen_range(1u32..4) * 0x8000 + 4 * rng.gen_range(0u32..256);
        src += &match rng.gen_range(0..3) {
            0 => format!("LOAD {addr:#x}, {}\n", rng.gen_range(1..8)),
            1 => format!("STORE {addr:#x}, {}\n", rng.gen_range(1..8)),
            _ => format!("COMPUTE {}\n", rng.gen_range(1..6)),
        };
    }
    src + "ENDLOOP\nHALT\n"
}

fn matmul_topology_gap() -> Outcome {
    let mut c = Checks::default();
    let rows = sweep(&scenario("matmul"), &SweepAxis::parse("topology=one-at-a-time,fully-connected").unwrap())
        .map_err(|e| e.to_string())?;
    let (oat, fc) = (rows[0].cycles as f64, rows[1].cycles as f64);
    let reduction = 1.0 - fc / oat;
    c.check(
        (reduction - 0.34).abs() <= 0.10,
        format!("fully-connected {fc} vs one-at-a-time {oat} cycles, {:.1} % fewer", 100.0 * reduction),
    );
    let mut rng = ChaCha8Rng::seed_from_u64(34);
    let mut worse = 0;
    for _ in 0..100 {
        let src = random_program(&mut rng);
        let fc = cycles_of(&src, BusTopology::FullyConnected, CoreKind::Cv32e40p).0;
        let oat = cycles_of(&src, BusTopology::OneAtATime, CoreKind::Cv32e40p).0;
        worse += (fc > oat) as u32;
    }
    c.check(worse == 0, format!("monotone on 100 random programs ({worse} violations)"));
    c.done()
}

fn xpulp_speedup() -> Outcome {
    let mut c = Checks::default();
    for (class, factor) in [("matmul32", 4), ("matmul8", 16)] {
        let src = MATMUL.replace("matmul32", class);
        let stat = |kind| {
            let (_, p) = cycles_of(&src, BusTopology::FullyConnected, kind);
            let s = p.cpu.as_ref().unwrap().stats.clone();
            if class == "matmul8" {
                s.compute_cycles_matmul8
            } else {
                s.compute_cycles_matmul32
            }
        };
        let base = stat(CoreKind::Cv32e40p);
        let fast = stat(CoreKind::Cv32e40pXpulp);
        c.check(base == factor * fast, format!("{class} {base} -> {fast} (x{factor})"));
    }
    c.done()
}

fn acquisition_staging() -> Outcome {
    let mut c = Checks::default();
    let r = run("heartbeat-classifier");
    let on = phase_power(&r, "acquisition");
    let gated = phase_power(&r, "acquisition-gated");
    let off = phase_power(&r, "acquisition-cpu-off");
    c.within("all-on", on, 384e-6, 0.05);
    c.within("unused off", gated, 310e-6, 0.05);
    c.within("cpu off", off, 286e-6, 0.05);
    c.drop_pp("gating", on, gated, 19.0, 2.0);
    c.drop_pp("cpu off", gated, off, 8.0, 2.0);
    c.done()
}

fn processing_staging() -> Outcome {
    let mut c = Checks::default();
    let r = run("seizure-cnn");
    let on = phase_power(&r, "processing");
    let gated = phase_power(&r, "processing-gated");
    c.within("all-on", on, 8.17e-3, 0.05);
    c.within("gated", gated, 7.68e-3, 0.05);
    c.drop_pp("gating", on, gated, 6.0, 2.0);
    c.done()
}

fn accelerator_ratios() -> Outcome {
    let mut c = Checks::default();
    let cpu = run("conv-cpu");
    let cgra = run("conv-cgra");
    let imc = run("conv-imc");
    for r in [&cpu, &cgra, &imc] {
        c.check(r.phases[0].record.frequency_hz == 60_000_000, format!("{} at 60 MHz", r.scenario));
    }
    c.within("cgra power", cgra.average_power_w, 4.01e-3, 0.05);
    c.within("imc power", imc.average_power_w, 1.65e-3, 0.05);
    let r_cgra = cpu.total_energy_j / cgra.total_energy_j;
    let r_imc = cpu.total_energy_j / imc.total_energy_j;
    c.check((r_cgra - 4.9).abs() <= 0.3, format!("E_cpu/E_cgra {r_cgra:.2}"));
    c.check((r_imc - 4.8).abs() <= 0.3, format!("E_cpu/E_imc {r_imc:.2}"));
    c.done()
}

fn operating_envelope() -> Outcome {
    let mut c = Checks::default();
    let low = run("envelope-low");
    let high = run("envelope-high");
    c.check(low.phases[0].record.frequency_hz == 32_768, "low point at 32768 Hz".into());
    c.within("32 kHz 0.8 V", low.average_power_w, 270e-6, 0.10);
    c.within("470 MHz 1.2 V", high.average_power_w, 48e-3, 0.10);
    let env = &scenario("heepocrates").platform.calibration.envelope;
    for (v, f) in [(0.8, 171_000_000), (1.2, 471_000_000), (1.0, 400_000_000)] {
        let op = OperatingPoint {
            voltage_v: v,
            frequency_hz: f,
        };
        c.check(env.check(op).is_err(), format!("{f} Hz at {v} V rejected"));
    }
    let mut p = Platform::new(PlatformConfig::default()).unwrap();
    let rejected = p
        .set_operating_point(
            OperatingPoint {
                voltage_v: 0.8,
                frequency_hz: 200_000_000,
            },
            false,
        )
        .is_err();
    c.check(rejected, "runtime request of 200 MHz at 0.8 V rejected".into());
    c.done()
}

fn property_suites() -> Outcome {
    let mut c = Checks::default();

    // address decode bijection
    for mode in [AddressingMode::Contiguous, AddressingMode::Interleaved] {
        let m = AddressMap::new(
            0,
            MemoryLayout {
                mode,
                bank_count: 8,
                bank_size: 32 * 1024,
            },
        )
        .unwrap();
        let mut seen = BTreeSet::new();
        let ok = (0..0x4_0000u32).step_by(4).all(|a| match m.decode(a) {
            Ok(d) => match d.slave {
                SlaveId::Bank(b) => seen.insert((b, d.offset)) && m.address_of(b as u32, d.offset) == a,
                _ => false,
            },
            Err(_) => false,
        });
        c.check(ok && seen.len() == 0x1_0000, format!("{mode} decode bijective"));
    }

    // retention preserves contents
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let t = TransitionLatencies::default();
    let states = [PowerState::Active, PowerState::ClockGated, PowerState::Retention];
    let mut lost = 0;
    for _ in 0..200 {
        let mut bank = MemoryBank::new(0, DEFAULT_BANK_SIZE).unwrap();
        let mut model = BTreeMap::new();
        for _ in 0..32 {
            let (w, v) = (rng.gen_range(0u32..8192), rng.gen::<u32>());
            bank.access(w * 4, true, 0xF, v).unwrap();
            model.insert(w, v);
        }
        for _ in 0..rng.gen_range(1..20) {
            for _ in 0..rng.gen_range(0..4) {
                bank.tick_power();
            }
            let s = states[rng.gen_range(0..3)];
            if bank.set_power_state(s, &t).is_err() {
                while bank.power_machine().in_transition() {
                    bank.tick_power();
                }
                bank.set_power_state(s, &t).unwrap();
            }
        }
        bank.set_power_state(PowerState::Active, &t).ok();
        while bank.power_machine().in_transition() || bank.power_state() != PowerState::Active {
            bank.tick_power();
            if !bank.power_machine().in_transition() && bank.power_state() != PowerState::Active {
                bank.set_power_state(PowerState::Active, &t).unwrap();
            }
        }
        lost += model.iter().filter(|(w, v)| bank.access(**w * 4, false, 0xF, 0) != Ok(**v)).count();
    }
    c.check(lost == 0, format!("retention: {lost} words lost over 200 sequences"));

    // round-robin bound
    let mut starved = 0;
    for k in 1..=8u16 {
        let pending: Vec<_> = (0..k).map(|m| (MasterId(m), SlaveId::Bank(0))).collect();
        let (mut last, mut per) = (None, BTreeMap::new());
        let mut since = vec![0u32; k as usize];
        for _ in 0..200 {
            let g = arbitrate(BusTopology::FullyConnected, &pending, k, &mut last, &mut per);
            for (m, s) in since.iter_mut().enumerate() {
                *s = if m == g[0].master.0 as usize { 0 } else { *s + 1 };
                starved += (*s >= k as u32) as u32;
            }
        }
    }
    c.check(starved == 0, "round-robin serves each of k masters within k grants".into());

    // determinism and additivity
    let a = scenario("conv-cgra").run().unwrap().report;
    let b = scenario("conv-cgra").run().unwrap().report;
    c.check(a.to_json() == b.to_json(), "bit-identical reports".into());
    let sum: f64 = a.domains.iter().map(|d| d.energy_j).sum();
    let err = (sum - a.total_energy_j).abs() / a.total_energy_j;
    c.check(err <= 1e-9, format!("additivity error {err:.1e}"));

    // IMC memory mode against a plain bank
    let size = 32 * 1024;
    let mut imc = Imc::new("imc", size, 16, 4);
    let mut bank = MemoryBank::new(0, size).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let mismatches = (0..10_000u64)
        .filter(|&now| {
            let offset = rng.gen_range(0..size / 4) * 4;
            let req = if rng.gen_bool(0.5) {
                Request {
                    byte_enable: rng.gen_range(1..16),
                    ..Request::write(offset, rng.gen())
                }
            } else {
                Request::read(offset)
            };
            imc.slave_access(now, 0, offset, &req, &[PowerState::Active])
                != bank.access(offset, req.is_write, req.byte_enable, req.write_data)
        })
        .count();
    c.check(mismatches == 0, format!("IMC memory mode: {mismatches} mismatches in 10000"));
    c.done()
}

fn main() {
    let criteria: [(&str, Criterion); 8] = [
        ("bandwidth linearity", bandwidth_linearity),
        ("matmul topology gap", matmul_topology_gap),
        ("xpulp speedup", xpulp_speedup),
        ("acquisition power staging", acquisition_staging),
        ("processing power staging", processing_staging),
        ("accelerator energy ratios", accelerator_ratios),
        ("operating envelope", operating_envelope),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail})", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({detail})", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} of {} criteria failed", criteria.len());
        std::process::exit(1);
    }
}
