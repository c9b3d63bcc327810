//! Microprogram-driven CPU bus master.
//!
//! The core has separate instruction-fetch and data ports. Timing model:
//!
//! * every executed op costs one instruction fetch on the I-port; the op may
//!   start executing in the cycle its fetch is granted;
//! * while an op executes, the fetch of its successor runs ahead (one-entry
//!   prefetch buffer); a prefetched op dispatches at the start of a cycle;
//! * `LOAD`/`STORE` issue one D-port word per transaction with a single
//!   outstanding request; the op retires when its last response arrives;
//! * `COMPUTE n` occupies the execute stage for `n` profile-scaled cycles
//!   (at least one issue cycle); `LOOP`/`ENDLOOP`/`WFI` take one cycle;
//! * `WFI` asks the power manager to put the CPU domain in its idle state
//!   and blocks until an enabled interrupt is pending.

pub mod program;
pub mod traffic;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::interconnect::{Interconnect, MasterId, Request};
use crate::interrupt::InterruptController;
use crate::kernel::{EventKind, SimEvent};
use crate::power::state::PowerState;

pub use program::{ComputeClass, Microprogram, Op};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoreKind {
    Cv32e20,
    Cv32e40x,
    Cv32e40p,
    #[serde(rename = "cv32e40p+xpulp")]
    Cv32e40pXpulp,
}

impl CoreKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "cv32e20" => CoreKind::Cv32e20,
            "cv32e40x" => CoreKind::Cv32e40x,
            "cv32e40p" => CoreKind::Cv32e40p,
            "cv32e40p+xpulp" => CoreKind::Cv32e40pXpulp,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            CoreKind::Cv32e20 => "cv32e20",
            CoreKind::Cv32e40x => "cv32e40x",
            CoreKind::Cv32e40p => "cv32e40p",
            CoreKind::Cv32e40pXpulp => "cv32e40p+xpulp",
        }
    }
}

/// Performance/power knobs of a core option.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CpuProfile {
    pub kind: CoreKind,
    /// Compute cycle scale as `num / den`.
    pub compute_scale_num: u32,
    pub compute_scale_den: u32,
    pub simd_speedup_32b: u32,
    pub simd_speedup_8b: u32,
    pub dynamic_power_scale: f64,
}

impl CpuProfile {
    pub fn new(kind: CoreKind) -> Self {
        let (s32, s8) = match kind {
            CoreKind::Cv32e40pXpulp => (4, 16),
            _ => (1, 1),
        };
        CpuProfile {
            kind,
            compute_scale_num: 1,
            compute_scale_den: 1,
            simd_speedup_32b: s32,
            simd_speedup_8b: s8,
            dynamic_power_scale: 1.0,
        }
    }

    fn speedup(&self, class: ComputeClass) -> u64 {
        match class {
            ComputeClass::Generic => 1,
            ComputeClass::Matmul32 => self.simd_speedup_32b as u64,
            ComputeClass::Matmul8 => self.simd_speedup_8b as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CpuMode {
    Running,
    Wfi,
    Halted,
    Trapped,
}

#[derive(Debug, Clone)]
enum Exec {
    Idle,
    /// Single-cycle control op or a compute op that scaled to zero cycles.
    Control,
    Compute {
        remaining: u64,
    },
    Mem {
        base: u32,
        stride: u32,
        words: u32,
        next: u32,
        done: u32,
        outstanding: bool,
        is_write: bool,
        value: Option<u32>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CpuStats {
    pub ops_executed: u64,
    pub fetches: u64,
    pub load_words: u64,
    pub store_words: u64,
    /// Profile-scaled compute cycles.
    pub compute_cycles: u64,
    pub compute_cycles_generic: u64,
    pub compute_cycles_matmul32: u64,
    pub compute_cycles_matmul8: u64,
    /// Cycles in which the core was clocked and running.
    pub active_cycles: u64,
    pub wfi_cycles: u64,
    pub wakeups: u64,
}

/// Side effects of a CPU phase that the platform applies.
#[derive(Debug, Default)]
pub struct CpuEffects {
    pub power_request: Option<PowerState>,
    pub event: Option<SimEvent>,
}

#[derive(Debug, Clone)]
pub struct Cpu {
    pub profile: CpuProfile,
    program: Arc<Microprogram>,
    code_base: u32,
    i_port: MasterId,
    d_port: MasterId,
    /// State the CPU domain enters on `WFI`.
    pub idle_state: PowerState,
    mode: CpuMode,
    wake_requested: bool,
    exec: Exec,
    buffer: Option<usize>,
    fetch_pc: Option<usize>,
    fetch_in_flight: Option<usize>,
    vars: Vec<u32>,
    load_buffer: Vec<u32>,
    compute_acc: [u64; 3],
    active_this_cycle: bool,
    pub latched_irq: Option<u32>,
    pub wake_log: Vec<(u64, u32)>,
    pub stats: CpuStats,
}

impl Cpu {
    pub fn new(
        profile: CpuProfile,
        program: Arc<Microprogram>,
        code_base: u32,
        i_port: MasterId,
        d_port: MasterId,
    ) -> Self {
        assert!(program.is_resolved(), "microprogram must be resolved before execution");
        let slots = program.slots;
        Cpu {
            profile,
            program,
            code_base,
            i_port,
            d_port,
            idle_state: PowerState::ClockGated,
            mode: CpuMode::Running,
            wake_requested: false,
            exec: Exec::Idle,
            buffer: None,
            fetch_pc: Some(0),
            fetch_in_flight: None,
            vars: vec![0; slots],
            load_buffer: Vec::new(),
            compute_acc: [0; 3],
            active_this_cycle: false,
            latched_irq: None,
            wake_log: Vec::new(),
            stats: CpuStats::default(),
        }
    }

    /// Loads a new program and restarts from its first op.
    pub fn load_program(&mut self, program: Arc<Microprogram>) {
        let fresh = Cpu::new(self.profile, program, self.code_base, self.i_port, self.d_port);
        let stats = std::mem::take(&mut self.stats);
        let idle = self.idle_state;
        let wake_log = std::mem::take(&mut self.wake_log);
        *self = fresh;
        self.stats = stats;
        self.idle_state = idle;
        self.wake_log = wake_log;
    }

    pub fn mode(&self) -> CpuMode {
        self.mode
    }

    pub fn ports(&self) -> (MasterId, MasterId) {
        (self.i_port, self.d_port)
    }

    pub fn is_done(&self) -> bool {
        matches!(self.mode, CpuMode::Halted | CpuMode::Trapped)
    }

    /// Whether the pipeline did work this cycle (drives dynamic energy).
    pub fn active_this_cycle(&self) -> bool {
        self.active_this_cycle
    }

    fn trap(&mut self, now: u64, what: String) -> SimEvent {
        self.mode = CpuMode::Trapped;
        self.exec = Exec::Idle;
        self.buffer = None;
        self.fetch_pc = None;
        SimEvent::new(now, "cpu", EventKind::Trap, what)
    }

    fn scaled_compute(&mut self, cycles: u32, class: ComputeClass) -> u64 {
        let idx = match class {
            ComputeClass::Generic => 0,
            ComputeClass::Matmul32 => 1,
            ComputeClass::Matmul8 => 2,
        };
        let div = self.profile.compute_scale_den as u64 * self.profile.speedup(class);
        let before = self.compute_acc[idx];
        let after = before + cycles as u64 * self.profile.compute_scale_num as u64;
        self.compute_acc[idx] = after;
        let eff = after / div - before / div;
        self.stats.compute_cycles += eff;
        match class {
            ComputeClass::Generic => self.stats.compute_cycles_generic += eff,
            ComputeClass::Matmul32 => self.stats.compute_cycles_matmul32 += eff,
            ComputeClass::Matmul8 => self.stats.compute_cycles_matmul8 += eff,
        }
        eff
    }

    fn dispatch(&mut self, pc: usize, irq: &mut InterruptController, fx: &mut CpuEffects) {
        let program = Arc::clone(&self.program);
        let op = &program.ops[pc];
        self.stats.ops_executed += 1;
        let mut next = Some(pc + 1);
        match op {
            Op::Load {
                addr,
                words,
                stride,
            } => {
                self.load_buffer.clear();
                self.exec = Exec::Mem {
                    base: addr.eval(&self.vars),
                    stride: *stride,
                    words: *words,
                    next: 0,
                    done: 0,
                    outstanding: false,
                    is_write: false,
                    value: None,
                };
            }
            Op::Store {
                addr,
                words,
                stride,
                value,
            } => {
                self.exec = Exec::Mem {
                    base: addr.eval(&self.vars),
                    stride: *stride,
                    words: *words,
                    next: 0,
                    done: 0,
                    outstanding: false,
                    is_write: true,
                    value: *value,
                };
            }
            Op::Compute { cycles, class } => {
                let eff = self.scaled_compute(*cycles, *class);
                self.exec = if eff == 0 {
                    Exec::Control
                } else {
                    Exec::Compute { remaining: eff }
                };
            }
            Op::Wfi => {
                self.exec = Exec::Control;
                if irq.cpu_request() {
                    self.latch(irq);
                } else {
                    self.mode = CpuMode::Wfi;
                    self.wake_requested = false;
                    fx.power_request = Some(self.idle_state);
                }
            }
            Op::Loop {
                count, slot, end, ..
            } => {
                self.exec = Exec::Control;
                if *count == 0 {
                    next = Some(end + 1);
                } else {
                    self.vars[*slot] = 0;
                }
            }
            Op::EndLoop { start } => {
                self.exec = Exec::Control;
                let Op::Loop { count, slot, .. } = program.ops[*start] else {
                    unreachable!("ENDLOOP must match a LOOP")
                };
                self.vars[slot] += 1;
                if self.vars[slot] < count {
                    next = Some(start + 1);
                }
            }
            Op::Halt => {
                self.exec = Exec::Idle;
                self.mode = CpuMode::Halted;
                next = None;
            }
        }
        self.fetch_pc = next;
    }

    fn latch(&mut self, irq: &mut InterruptController) {
        if let Some(id) = irq.claim() {
            self.latched_irq = Some(id);
        }
    }

    /// Phase 1: consume responses, dispatch, issue bus requests.
    pub fn issue(
        &mut self,
        now: u64,
        bus: &mut Interconnect,
        irq: &mut InterruptController,
        domain: PowerState,
    ) -> CpuEffects {
        let mut fx = CpuEffects::default();
        self.active_this_cycle = false;
        bus.take_response(self.i_port, now);
        if let Some(t) = bus.take_response(self.d_port, now) {
            if let Some(f) = t.fault {
                fx.event = Some(self.trap(
                    now,
                    format!("data access fault {f:?} at {:#010x}", t.address),
                ));
                return fx;
            }
            if let Exec::Mem {
                done,
                outstanding,
                words,
                is_write,
                ..
            } = &mut self.exec
            {
                *outstanding = false;
                *done += 1;
                if !*is_write {
                    self.load_buffer.push(t.read_data.unwrap_or(0));
                }
                if *done == *words {
                    self.exec = Exec::Idle;
                }
            }
        }
        match self.mode {
            CpuMode::Halted | CpuMode::Trapped => return fx,
            CpuMode::Wfi => {
                self.stats.wfi_cycles += 1;
                if self.wake_requested && domain == PowerState::Active {
                    self.mode = CpuMode::Running;
                    self.wake_requested = false;
                    self.stats.wakeups += 1;
                    self.latch(irq);
                    if let Some(id) = self.latched_irq {
                        self.wake_log.push((now, id));
                    }
                } else {
                    return fx;
                }
            }
            CpuMode::Running => {}
        }
        if domain != PowerState::Active {
            return fx;
        }
        self.active_this_cycle = true;
        self.stats.active_cycles += 1;
        if matches!(self.exec, Exec::Idle) {
            if let Some(pc) = self.buffer.take() {
                self.dispatch(pc, irq, &mut fx);
            }
        }
        if let Exec::Mem {
            base,
            stride,
            words,
            next,
            outstanding,
            is_write,
            value,
            ..
        } = &mut self.exec
        {
            if !*outstanding && *next < *words {
                let addr = base.wrapping_add(*next * *stride);
                let req = if *is_write {
                    let data = value.unwrap_or_else(|| {
                        if self.load_buffer.is_empty() {
                            0
                        } else {
                            self.load_buffer[*next as usize % self.load_buffer.len()]
                        }
                    });
                    self.stats.store_words += 1;
                    Request::write(addr, data)
                } else {
                    self.stats.load_words += 1;
                    Request::read(addr)
                };
                bus.issue(self.d_port, req, now);
                *outstanding = true;
                *next += 1;
            }
        }
        if self.mode == CpuMode::Running
            && self.buffer.is_none()
            && self.fetch_in_flight.is_none()
            && !bus.busy(self.i_port)
        {
            if let Some(pc) = self.fetch_pc {
                bus.issue(
                    self.i_port,
                    Request::read(self.code_base.wrapping_add(4 * pc as u32)),
                    now,
                );
                self.fetch_in_flight = Some(pc);
            }
        }
        fx
    }

    /// Phase 3, after slaves answered: fetch grants deliver ops.
    pub fn on_grants(
        &mut self,
        now: u64,
        bus: &Interconnect,
        irq: &mut InterruptController,
        domain: PowerState,
    ) -> CpuEffects {
        let mut fx = CpuEffects::default();
        let Some(pc) = self.fetch_in_flight else {
            return fx;
        };
        if bus.waiting(self.i_port) || !bus.busy(self.i_port) {
            return fx;
        }
        let t = bus.granted(self.i_port);
        if t.grant_cycle != Some(now) {
            return fx;
        }
        self.fetch_in_flight = None;
        self.stats.fetches += 1;
        if let Some(f) = t.fault {
            fx.event = Some(self.trap(
                now,
                format!("instruction fetch fault {f:?} at {:#010x}", t.address),
            ));
            return fx;
        }
        if self.mode == CpuMode::Running
            && matches!(self.exec, Exec::Idle)
            && domain == PowerState::Active
        {
            self.dispatch(pc, irq, &mut fx);
        } else {
            self.buffer = Some(pc);
        }
        fx
    }

    /// End of cycle: advance multi-cycle execution.
    pub fn end_cycle(&mut self, domain: PowerState) {
        if domain != PowerState::Active && self.mode != CpuMode::Wfi {
            return;
        }
        match &mut self.exec {
            Exec::Control => self.exec = Exec::Idle,
            Exec::Compute { remaining } => {
                *remaining -= 1;
                if *remaining == 0 {
                    self.exec = Exec::Idle;
                }
            }
            _ => {}
        }
    }

    /// Phase 4: an interrupt pending during WFI requests the clock back.
    pub fn check_wake(&mut self, irq: &InterruptController) -> Option<PowerState> {
        if self.mode == CpuMode::Wfi && !self.wake_requested && irq.cpu_request() {
            self.wake_requested = true;
            return Some(PowerState::Active);
        }
        None
    }
}
