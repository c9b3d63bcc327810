//! Four-lane streaming CGRA model.
//!
//! Slave port 0 holds control registers, slave port 1 the context memory
//! with the kernel descriptor. Each lane owns one master port and processes
//! elements as load `in_words` words, compute, store one result word. The
//! result of an element is the wrapping dot product of its input words with
//! the descriptor weights (cycled).
//!
//! Context memory layout (words):
//!
//! | word | content |
//! |------|---------|
//! | 0 | magic [`KERNEL_MAGIC`] |
//! | 1 | compute cycles per element (0 = calibrated default) |
//! | 2 | lane count (1..=4) |
//! | 3 + 8*l .. | lane `l`: in_base, in_words, in_elem_stride, in_word_stride, out_base, out_stride, elem_count, window |
//! | 35 | weight count `n` |
//! | 36 .. 36+n | weights |
//!
//! `window` describes 2D input windows: bits 0..15 words per window row
//! (0 = one row), bits 16..31 the byte stride between window rows. Input
//! word `k` of element `e` is read from
//! `in_base + e*in_elem_stride + (k / row)*row_stride + (k % row)*in_word_stride`.

use serde_json::json;

use crate::interconnect::Request;
use crate::kernel::{EventKind, SimEvent};
use crate::memory::{merge_bytes, AccessFault, POISON_WORD};
use crate::power::state::{Completed, PowerState};
use crate::power::Capabilities;

use super::{Accelerator, PowerDomainSpec, XaifContext, XaifDescriptor};

pub const KERNEL_MAGIC: u32 = 0xC6A0_0001;
pub const LANES: usize = 4;
pub const CONFIG_WINDOW: u32 = 0x100;
pub const CONTEXT_WORDS: usize = 1024;
pub const WEIGHTS_AT: usize = 35;
const LANE_WORDS: usize = 8;

/// Control register offsets (slave port 0).
pub mod regs {
    /// Write 1 to start.
    pub const CTRL: u32 = 0x0;
    /// Bit 0 busy, bit 1 done, bit 2 error. Writing clears done/error.
    pub const STATUS: u32 = 0x4;
    /// Cycles taken by the last run.
    pub const CYCLES: u32 = 0x8;
    pub const ERROR_ADDR: u32 = 0xC;
}

pub const DOMAIN_LOGIC: usize = 0;
pub const DOMAIN_CONTEXT: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LaneDesc {
    pub in_base: u32,
    pub in_words: u32,
    pub in_elem_stride: u32,
    pub in_word_stride: u32,
    pub out_base: u32,
    pub out_stride: u32,
    pub elem_count: u32,
    pub window_row_words: u16,
    pub window_row_stride: u16,
}

impl LaneDesc {
    fn input_address(&self, elem: u32, word: u32) -> u32 {
        let (row, col) = match self.window_row_words {
            0 => (0, word),
            n => (word / n as u32, word % n as u32),
        };
        self.in_base
            .wrapping_add(elem.wrapping_mul(self.in_elem_stride))
            .wrapping_add(row.wrapping_mul(self.window_row_stride as u32))
            .wrapping_add(col.wrapping_mul(self.in_word_stride))
    }
}

/// A kernel ready to be written into context memory.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KernelDescriptor {
    pub compute_cycles_per_element: u32,
    pub lanes: Vec<LaneDesc>,
    pub weights: Vec<u32>,
}

impl KernelDescriptor {
    pub fn to_words(&self) -> Vec<u32> {
        assert!(!self.lanes.is_empty() && self.lanes.len() <= LANES);
        assert!(WEIGHTS_AT + 1 + self.weights.len() <= CONTEXT_WORDS);
        let mut w = vec![0u32; WEIGHTS_AT + 1 + self.weights.len()];
        w[0] = KERNEL_MAGIC;
        w[1] = self.compute_cycles_per_element;
        w[2] = self.lanes.len() as u32;
        for (l, d) in self.lanes.iter().enumerate() {
            let b = 3 + LANE_WORDS * l;
            w[b..b + LANE_WORDS].copy_from_slice(&[
                d.in_base,
                d.in_words,
                d.in_elem_stride,
                d.in_word_stride,
                d.out_base,
                d.out_stride,
                d.elem_count,
                d.window_row_words as u32 | (d.window_row_stride as u32) << 16,
            ]);
        }
        w[WEIGHTS_AT] = self.weights.len() as u32;
        w[WEIGHTS_AT + 1..].copy_from_slice(&self.weights);
        w
    }

    fn from_context(ctx: &[u32]) -> Result<Self, String> {
        if ctx[0] != KERNEL_MAGIC {
            return Err(format!("bad kernel magic {:#010x}", ctx[0]));
        }
        let n = ctx[2] as usize;
        if n == 0 || n > LANES {
            return Err(format!("lane count {n} out of range"));
        }
        let lanes = (0..n)
            .map(|l| {
                let b = 3 + LANE_WORDS * l;
                LaneDesc {
                    in_base: ctx[b],
                    in_words: ctx[b + 1],
                    in_elem_stride: ctx[b + 2],
                    in_word_stride: ctx[b + 3],
                    out_base: ctx[b + 4],
                    out_stride: ctx[b + 5],
                    elem_count: ctx[b + 6],
                    window_row_words: ctx[b + 7] as u16,
                    window_row_stride: (ctx[b + 7] >> 16) as u16,
                }
            })
            .collect();
        let nw = ctx[WEIGHTS_AT] as usize;
        if WEIGHTS_AT + 1 + nw > CONTEXT_WORDS {
            return Err(format!("weight count {nw} exceeds context memory"));
        }
        Ok(KernelDescriptor {
            compute_cycles_per_element: ctx[1],
            lanes,
            weights: ctx[WEIGHTS_AT + 1..WEIGHTS_AT + 1 + nw].to_vec(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Load,
    Compute(u32),
    Store,
    Done,
}

#[derive(Debug, Clone)]
struct Lane {
    desc: LaneDesc,
    elem: u32,
    word: u32,
    acc: u32,
    stage: Stage,
    outstanding: bool,
}

#[derive(Debug, Clone)]
pub struct Cgra {
    name: String,
    default_cpe: u32,
    context: Vec<u32>,
    lanes: Vec<Lane>,
    weights: Vec<u32>,
    cpe: u32,
    running: bool,
    done: bool,
    error: bool,
    error_addr: u32,
    start_cycle: u64,
    last_cycles: u64,
    pending_start: bool,
    pub runs: u64,
    pub elements: u64,
    pub transactions: u64,
}

impl Cgra {
    pub fn new(name: impl Into<String>, default_cycles_per_element: u32) -> Self {
        Cgra {
            name: name.into(),
            default_cpe: default_cycles_per_element,
            context: vec![0; CONTEXT_WORDS],
            lanes: Vec::new(),
            weights: Vec::new(),
            cpe: 0,
            running: false,
            done: false,
            error: false,
            error_addr: 0,
            start_cycle: 0,
            last_cycles: 0,
            pending_start: false,
            runs: 0,
            elements: 0,
            transactions: 0,
        }
    }

    /// Backdoor load of the context memory (scenario preload).
    pub fn load_context(&mut self, words: &[u32]) {
        self.context[..words.len()].copy_from_slice(words);
    }

    pub fn context(&self) -> &[u32] {
        &self.context
    }

    pub fn last_run_cycles(&self) -> u64 {
        self.last_cycles
    }

    fn status(&self) -> u32 {
        self.running as u32 | (self.done as u32) << 1 | (self.error as u32) << 2
    }

    fn start(&mut self, now: u64) -> Result<(), String> {
        let k = KernelDescriptor::from_context(&self.context)?;
        self.cpe = if k.compute_cycles_per_element == 0 {
            self.default_cpe
        } else {
            k.compute_cycles_per_element
        };
        self.weights = if k.weights.is_empty() { vec![1] } else { k.weights };
        self.lanes = k
            .lanes
            .into_iter()
            .map(|desc| Lane {
                desc,
                elem: 0,
                word: 0,
                acc: 0,
                stage: if desc.elem_count == 0 { Stage::Done } else { Stage::Load },
                outstanding: false,
            })
            .collect();
        self.running = true;
        self.done = false;
        self.start_cycle = now;
        self.runs += 1;
        Ok(())
    }

    fn fail(&mut self, ctx: &mut XaifContext<'_>, addr: u32, what: String) {
        self.running = false;
        self.error = true;
        self.error_addr = addr;
        ctx.irqs.push(0);
        ctx.events.push(SimEvent::new(ctx.now, &self.name, EventKind::AcceleratorError, what));
    }
}

impl Accelerator for Cgra {
    fn name(&self) -> &str {
        &self.name
    }

    fn descriptor(&self) -> XaifDescriptor {
        XaifDescriptor {
            slave_windows: vec![CONFIG_WINDOW, CONTEXT_WORDS as u32 * 4],
            master_ports: LANES,
            irq_lines: 1,
            power_domains: vec![
                PowerDomainSpec {
                    name: "logic".into(),
                    capabilities: Capabilities::LOGIC,
                },
                PowerDomainSpec {
                    name: "context".into(),
                    capabilities: Capabilities::MEMORY,
                },
            ],
        }
    }

    fn reset(&mut self) {
        self.lanes.clear();
        self.running = false;
        self.done = false;
        self.error = false;
        self.pending_start = false;
    }

    fn slave_access(
        &mut self,
        _now: u64,
        port: usize,
        offset: u32,
        req: &Request,
        domains: &[PowerState],
    ) -> Result<u32, AccessFault> {
        match port {
            0 => {
                if let Some(f) = AccessFault::from_state(domains[DOMAIN_LOGIC]) {
                    return Err(f);
                }
                if !req.is_write {
                    return Ok(match offset {
                        regs::STATUS => self.status(),
                        regs::CYCLES => self.last_cycles as u32,
                        regs::ERROR_ADDR => self.error_addr,
                        _ => 0,
                    });
                }
                match offset {
                    regs::CTRL if req.write_data & 1 != 0 => {
                        if self.running {
                            return Err(AccessFault::Rejected);
                        }
                        self.pending_start = true;
                    }
                    regs::STATUS => {
                        self.done = false;
                        self.error = false;
                    }
                    _ => {}
                }
                Ok(0)
            }
            _ => {
                if let Some(f) = AccessFault::from_state(domains[DOMAIN_CONTEXT]) {
                    return Err(f);
                }
                let i = offset as usize / 4;
                if req.is_write {
                    self.context[i] = merge_bytes(self.context[i], req.write_data, req.byte_enable);
                    Ok(0)
                } else {
                    Ok(self.context[i])
                }
            }
        }
    }

    fn tick(&mut self, ctx: &mut XaifContext<'_>) {
        if self.pending_start {
            self.pending_start = false;
            if ctx.domains[DOMAIN_CONTEXT] != PowerState::Active {
                self.fail(ctx, 0, "context memory not active at start".into());
            } else if let Err(e) = self.start(ctx.now) {
                self.fail(ctx, 0, e);
            }
        }
        if !self.running {
            return;
        }
        if ctx.domains[DOMAIN_LOGIC] != PowerState::Active {
            return;
        }
        let mut busy_lanes = 0;
        for l in 0..self.lanes.len() {
            let lane = &mut self.lanes[l];
            if let Some(t) = ctx.masters.take_response(l, ctx.now) {
                lane.outstanding = false;
                if let Some(f) = t.fault {
                    let addr = t.address;
                    self.fail(ctx, addr, format!("lane {l} {f:?} at {addr:#010x}"));
                    return;
                }
                match lane.stage {
                    Stage::Load => {
                        let w = self.weights[lane.word as usize % self.weights.len()];
                        lane.acc = lane.acc.wrapping_add(t.read_data.unwrap_or(0).wrapping_mul(w));
                        lane.word += 1;
                        if lane.word == lane.desc.in_words {
                            lane.stage = Stage::Compute(self.cpe);
                        }
                    }
                    Stage::Store => {
                        lane.elem += 1;
                        lane.word = 0;
                        lane.acc = 0;
                        self.elements += 1;
                        lane.stage = if lane.elem == lane.desc.elem_count {
                            Stage::Done
                        } else {
                            Stage::Load
                        };
                    }
                    _ => {}
                }
            }
            if let Stage::Compute(n) = lane.stage {
                lane.stage = if n <= 1 { Stage::Store } else { Stage::Compute(n - 1) };
                if n > 0 {
                    busy_lanes += 1;
                    continue;
                }
            }
            if lane.outstanding || lane.stage == Stage::Done {
                continue;
            }
            busy_lanes += 1;
            let d = lane.desc;
            let req = match lane.stage {
                Stage::Load => {
                    if d.in_words == 0 {
                        lane.stage = Stage::Compute(self.cpe);
                        continue;
                    }
                    Request::read(d.input_address(lane.elem, lane.word))
                }
                Stage::Store => Request::write(
                    d.out_base.wrapping_add(lane.elem.wrapping_mul(d.out_stride)),
                    lane.acc,
                ),
                _ => unreachable!(),
            };
            ctx.masters.issue(l, req, ctx.now);
            lane.outstanding = true;
            self.transactions += 1;
        }
        ctx.activity[DOMAIN_LOGIC] += busy_lanes;
        if self.lanes.iter().all(|l| l.stage == Stage::Done && !l.outstanding) {
            self.running = false;
            self.done = true;
            self.last_cycles = ctx.now - self.start_cycle;
            ctx.irqs.push(0);
        }
    }

    fn on_power(&mut self, domain: usize, done: Completed) {
        if done.to != PowerState::Off {
            return;
        }
        match domain {
            DOMAIN_CONTEXT => self.context.fill(POISON_WORD),
            _ => {
                // datapath state is lost; a run in flight is abandoned
                if self.running {
                    self.running = false;
                    self.error = true;
                }
                self.lanes.clear();
            }
        }
    }

    fn peek(&self, port: usize, offset: u32) -> Option<u32> {
        match port {
            1 => self.context.get(offset as usize / 4).copied(),
            _ => None,
        }
    }

    fn busy(&self) -> bool {
        self.running || self.pending_start
    }

    fn stats(&self) -> serde_json::Value {
        json!({
            "runs": self.runs,
            "elements": self.elements,
            "transactions": self.transactions,
            "last_run_cycles": self.last_cycles,
        })
    }
}
