use std::collections::BTreeMap;
use std::sync::Arc;

use xheep_core::cpu::{CoreKind, CpuProfile, Microprogram};
use xheep_core::interconnect::BusTopology;
use xheep_core::kernel::StopCondition;
use xheep_core::platform::{Platform, PlatformConfig};

const MATMUL: &str = include_str!("../assets/programs/matmul16.mp");

fn program(src: &str) -> Arc<Microprogram> {
    let mut p = Microprogram::parse(src).unwrap();
    p.resolve(&BTreeMap::new()).unwrap();
    Arc::new(p)
}

fn run(src: &str, topology: BusTopology, kind: CoreKind) -> Platform {
    let cfg = PlatformConfig {
        topology,
        cpu: Some(CpuProfile::new(kind)),
        ..PlatformConfig::default()
    };
    let mut p = Platform::new(cfg).unwrap();
    p.load_program(program(src)).unwrap();
    let out = p.run_until(StopCondition::AllHalted, Some(10_000_000)).unwrap();
    assert!(!out.truncated);
    p
}

#[test]
fn halt_first_stops_after_one_step() {
    let p = run("HALT", BusTopology::FullyConnected, CoreKind::Cv32e40p);
    assert_eq!(p.now(), 1);
}

#[test]
fn ten_single_cycle_computes() {
    // fetch of op n+1 overlaps execution of op n: 10 compute cycles plus
    // the HALT dispatch cycle
    let src = "COMPUTE 1\n".repeat(10) + "HALT\n";
    let p = run(&src, BusTopology::FullyConnected, CoreKind::Cv32e40p);
    assert_eq!(p.now(), 11);
    let p = run(&src, BusTopology::OneAtATime, CoreKind::Cv32e40p);
    assert_eq!(p.now(), 11);
}

#[test]
fn matmul_topology_gap() {
    let fc = run(MATMUL, BusTopology::FullyConnected, CoreKind::Cv32e40p).now();
    let oat = run(MATMUL, BusTopology::OneAtATime, CoreKind::Cv32e40p).now();
    let reduction = 1.0 - fc as f64 / oat as f64;
    println!("fc {fc} oat {oat} reduction {reduction:.3}");
    assert!((reduction - 0.34).abs() <= 0.10);
}

#[test]
fn matmul_fetches_equal_ops() {
    let p = run(MATMUL, BusTopology::FullyConnected, CoreKind::Cv32e40p);
    let s = &p.cpu.as_ref().unwrap().stats;
    assert_eq!(s.fetches, s.ops_executed);
    assert_eq!(s.compute_cycles_matmul32, 4096);
    let x = run(MATMUL, BusTopology::FullyConnected, CoreKind::Cv32e40pXpulp);
    assert_eq!(x.cpu.as_ref().unwrap().stats.compute_cycles_matmul32, 1024);
}
