//! Synthetic bus master that replays a microprogram without fetching it.
//!
//! Control ops cost nothing, `COMPUTE n` idles for `n` cycles and every
//! load/store word is one bus transaction. Used to load the bus in
//! bandwidth experiments.

use std::sync::Arc;

use crate::interconnect::{Interconnect, MasterId, Request};
use crate::kernel::{EventKind, SimEvent};

use super::program::{Microprogram, Op};

#[derive(Debug, Clone)]
pub struct TrafficMaster {
    pub name: String,
    program: Arc<Microprogram>,
    port: MasterId,
    pc: Option<usize>,
    vars: Vec<u32>,
    idle: u64,
    mem: Option<(u32, u32, u32, u32, bool, Option<u32>)>,
    outstanding: bool,
    last_read: u32,
    pub words: u64,
    pub faults: u64,
}

impl TrafficMaster {
    pub fn new(name: impl Into<String>, program: Arc<Microprogram>, port: MasterId) -> Self {
        assert!(program.is_resolved(), "microprogram must be resolved before execution");
        TrafficMaster {
            name: name.into(),
            vars: vec![0; program.slots],
            program,
            port,
            pc: Some(0),
            idle: 0,
            mem: None,
            outstanding: false,
            last_read: 0,
            words: 0,
            faults: 0,
        }
    }

    pub fn port(&self) -> MasterId {
        self.port
    }

    pub fn is_done(&self) -> bool {
        self.pc.is_none() && self.mem.is_none() && !self.outstanding
    }

    /// Runs zero-cost ops until a memory or compute op becomes current.
    fn advance(&mut self) {
        let program = Arc::clone(&self.program);
        while self.mem.is_none() && self.idle == 0 {
            let Some(pc) = self.pc else { return };
            let mut next = Some(pc + 1);
            match &program.ops[pc] {
                Op::Load {
                    addr,
                    words,
                    stride,
                } => self.mem = Some((addr.eval(&self.vars), *stride, *words, 0, false, None)),
                Op::Store {
                    addr,
                    words,
                    stride,
                    value,
                } => self.mem = Some((addr.eval(&self.vars), *stride, *words, 0, true, *value)),
                Op::Compute { cycles, .. } => self.idle = *cycles as u64,
                Op::Wfi => {}
                Op::Loop {
                    count, slot, end, ..
                } => {
                    if *count == 0 {
                        next = Some(end + 1);
                    } else {
                        self.vars[*slot] = 0;
                    }
                }
                Op::EndLoop { start } => {
                    let Op::Loop { count, slot, .. } = program.ops[*start] else {
                        unreachable!("ENDLOOP must match a LOOP")
                    };
                    self.vars[slot] += 1;
                    if self.vars[slot] < count {
                        next = Some(start + 1);
                    }
                }
                Op::Halt => next = None,
            }
            self.pc = next;
            if let Some((_, _, 0, ..)) = self.mem {
                self.mem = None;
            }
        }
    }

    pub fn issue(&mut self, now: u64, bus: &mut Interconnect) -> Option<SimEvent> {
        let mut event = None;
        if let Some(t) = bus.take_response(self.port, now) {
            self.outstanding = false;
            if let Some(f) = t.fault {
                self.faults += 1;
                event = Some(SimEvent::new(
                    now,
                    &self.name,
                    EventKind::BusFault,
                    format!("{f:?} at {:#010x}", t.address),
                ));
            } else if let Some(d) = t.read_data {
                self.last_read = d;
            }
        }
        if self.outstanding {
            return event;
        }
        self.advance();
        if let Some((base, stride, words, next, is_write, value)) = &mut self.mem {
            let addr = base.wrapping_add(*next * *stride);
            let req = if *is_write {
                Request::write(addr, value.unwrap_or(self.last_read))
            } else {
                Request::read(addr)
            };
            bus.issue(self.port, req, now);
            self.outstanding = true;
            self.words += 1;
            *next += 1;
            if *next == *words {
                self.mem = None;
            }
        }
        event
    }

    pub fn end_cycle(&mut self) {
        if self.idle > 0 {
            self.idle -= 1;
        }
    }
}
