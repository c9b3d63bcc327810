use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use proptest::prelude::*;
use xheep_core::cpu::{CoreKind, CpuProfile, Microprogram};
use xheep_core::interconnect::{
    arbitrate, AddressMap, AddressingMode, BusTopology, MasterId, MemoryLayout, Request, SlaveId,
};
use xheep_core::kernel::StopCondition;
use xheep_core::memory::{MemoryBank, DEFAULT_BANK_SIZE};
use xheep_core::platform::{Platform, PlatformConfig};
use xheep_core::power::state::{PowerState, TransitionLatencies};
use xheep_core::xaif::imc::Imc;
use xheep_core::xaif::Accelerator;

fn map(mode: AddressingMode) -> AddressMap {
    AddressMap::new(
        0,
        MemoryLayout {
            mode,
            bank_count: 8,
            bank_size: 32 * 1024,
        },
    )
    .unwrap()
}

#[test]
fn decode_is_a_bijection_over_256_kib() {
    for mode in [AddressingMode::Contiguous, AddressingMode::Interleaved] {
        let m = map(mode);
        let mut seen = BTreeSet::new();
        for addr in (0..0x4_0000u32).step_by(4) {
            let d = m.decode(addr).unwrap();
            let SlaveId::Bank(b) = d.slave else {
                panic!("{addr:#x} left the memory region")
            };
            assert!(d.offset < 32 * 1024);
            assert!(seen.insert((b, d.offset)), "{mode}: {addr:#x} aliases another word");
            assert_eq!(m.address_of(b as u32, d.offset), addr);
        }
        assert_eq!(seen.len(), 0x1_0000);
    }
}

fn settle(b: &mut MemoryBank) {
    while b.power_machine().in_transition() {
        b.tick_power();
    }
}

fn non_off_state() -> impl Strategy<Value = PowerState> {
    prop_oneof![
        Just(PowerState::Active),
        Just(PowerState::ClockGated),
        Just(PowerState::Retention),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retention_preserves_contents(
        writes in prop::collection::vec((0u32..8192, any::<u32>()), 1..64),
        sequence in prop::collection::vec((non_off_state(), 0u32..4), 1..24),
    ) {
        let t = TransitionLatencies::default();
        let mut bank = MemoryBank::new(0, DEFAULT_BANK_SIZE).unwrap();
        let mut model = BTreeMap::new();
        for (w, v) in &writes {
            bank.access(w * 4, true, 0xF, *v).unwrap();
            model.insert(*w, *v);
        }
        for (state, partial_ticks) in sequence {
            // interrupt the previous transition part way sometimes
            for _ in 0..partial_ticks {
                bank.tick_power();
            }
            if bank.set_power_state(state, &t).is_err() {
                settle(&mut bank);
                bank.set_power_state(state, &t).unwrap();
            }
        }
        settle(&mut bank);
        bank.set_power_state(PowerState::Active, &t).unwrap();
        settle(&mut bank);
        for (w, v) in model {
            prop_assert_eq!(bank.access(w * 4, false, 0xF, 0).unwrap(), v);
        }
    }
}

#[test]
fn round_robin_never_starves_under_contention() {
    for topology in [BusTopology::FullyConnected, BusTopology::OneAtATime] {
        for k in 1..=8u16 {
            // every master always wants bank 0; the bound is k grants
            let pending: Vec<_> = (0..k).map(|m| (MasterId(m), SlaveId::Bank(0))).collect();
            let mut last = None;
            let mut per = BTreeMap::new();
            let mut since = vec![0u32; k as usize];
            for _ in 0..1000 {
                let g = arbitrate(topology, &pending, k, &mut last, &mut per);
                assert_eq!(g.len(), 1);
                for (m, s) in since.iter_mut().enumerate() {
                    if m == g[0].master.0 as usize {
                        *s = 0;
                    } else {
                        *s += 1;
                        assert!(*s < k as u32, "{topology} k={k}: master {m} starved");
                    }
                }
            }
        }
    }
}

#[test]
fn one_at_a_time_bound_with_distinct_slaves() {
    for k in 1..=8u16 {
        let pending: Vec<_> = (0..k).map(|m| (MasterId(m), SlaveId::Bank(m))).collect();
        let mut last = None;
        let mut per = BTreeMap::new();
        let mut since = vec![0u32; k as usize];
        for _ in 0..500 {
            let g = arbitrate(BusTopology::OneAtATime, &pending, k, &mut last, &mut per);
            assert_eq!(g.len(), 1);
            for (m, s) in since.iter_mut().enumerate() {
                *s = if m == g[0].master.0 as usize { 0 } else { *s + 1 };
                assert!(*s < k as u32);
            }
        }
    }
}

#[test]
fn imc_memory_mode_matches_a_plain_bank() {
    use rand::{Rng, SeedableRng};
    let size = 32 * 1024;
    let mut imc = Imc::new("imc", size, 16, 4);
    let mut bank = MemoryBank::new(0, size).unwrap();
    let on = [PowerState::Active];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    for now in 0..10_000u64 {
        let offset = rng.gen_range(0..size / 4) * 4;
        let req = if rng.gen_bool(0.5) {
            Request {
                byte_enable: rng.gen_range(1..16),
                ..Request::write(offset, rng.gen())
            }
        } else {
            Request::read(offset)
        };
        let got = imc.slave_access(now, 0, offset, &req, &on);
        let want = bank.access(offset, req.is_write, req.byte_enable, req.write_data);
        assert_eq!(got, want, "access {now} at {offset:#x}");
    }
}

#[derive(Debug, Clone)]
enum Op {
    Load(u32, u32),
    Store(u32, u32),
    Compute(u32),
}

fn op() -> impl Strategy<Value = Op> {
    // data stays in banks 1..4, code is fetched from bank 0
    let addr = (1u32..4, 0u32..256).prop_map(|(b, w)| b * 0x8000 + 4 * w);
    prop_oneof![
        (addr.clone(), 1u32..8).prop_map(|(a, n)| Op::Load(a, n)),
        (addr, 1u32..8).prop_map(|(a, n)| Op::Store(a, n)),
        (1u32..6).prop_map(Op::Compute),
    ]
}

fn cycles(src: &str, topology: BusTopology) -> u64 {
    let cfg = PlatformConfig {
        topology,
        cpu: Some(CpuProfile::new(CoreKind::Cv32e40p)),
        ..PlatformConfig::default()
    };
    let mut p = Platform::new(cfg).unwrap();
    let mut prog = Microprogram::parse(src).unwrap();
    prog.resolve(&BTreeMap::new()).unwrap();
    p.load_program(Arc::new(prog)).unwrap();
    let out = p.run_until(StopCondition::AllHalted, Some(1_000_000)).unwrap();
    assert!(!out.truncated);
    out.cycles
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fully_connected_never_slower(ops in prop::collection::vec(op(), 1..40), reps in 1u32..4) {
        let mut src = format!("LOOP {reps}\n");
        for o in &ops {
            src += &match o {
                Op::Load(a, n) => format!("LOAD {a:#x}, {n}\n"),
                Op::Store(a, n) => format!("STORE {a:#x}, {n}\n"),
                Op::Compute(c) => format!("COMPUTE {c}\n"),
            };
        }
        src += "ENDLOOP\nHALT\n";
        let fc = cycles(&src, BusTopology::FullyConnected);
        let oat = cycles(&src, BusTopology::OneAtATime);
        prop_assert!(fc <= oat, "fully-connected {} > one-at-a-time {}", fc, oat);
    }
}
