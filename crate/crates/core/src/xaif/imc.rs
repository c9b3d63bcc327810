//! In-memory computing macro with memory and computation modes.
//!
//! The slave window is the array followed by 16 bytes of control registers.
//! In memory mode the array behaves as a plain SRAM bank. In computation
//! mode a write to the array is a command and a read returns `RESULT`.
//!
//! Command encoding (write to array word `a`, row `A = a / row_words`):
//!
//! | `data[31:28]` | command | operands |
//! |---|---|---|
//! | 1 | MAC_ROW | `RESULT = sum_k row[A][k] * row[B][k]`, `B = data[11:0]` |
//! | 2 | SHIFT_ROW | shift row `A` by `data[4:0]` words, left if `data[8]`, zero fill |
//! | 3 | MAC_BATCH | `count = data[27:16]`; for `i < count`: word `ARG + i` of the array = MAC of row `A` with row `B + i` |
//!
//! Each row MAC takes `mac_row_cycles` cycles; a shift takes one cycle. A
//! command arriving while busy is dropped and sets the sticky error bit.
//! Draining the command queue raises the completion line.

use serde_json::json;

use crate::interconnect::Request;
use crate::kernel::{EventKind, SimEvent};
use crate::memory::{merge_bytes, AccessFault, POISON_WORD};
use crate::power::state::{Completed, PowerState};
use crate::power::Capabilities;

use super::{Accelerator, PowerDomainSpec, XaifContext, XaifDescriptor};

/// Control register offsets relative to the end of the array.
pub mod regs {
    /// 0 memory mode, 1 computation mode.
    pub const MODE: u32 = 0x0;
    /// Bit 0 busy, bit 1 done, bit 2 error (sticky). Writing clears done/error.
    pub const STATUS: u32 = 0x4;
    pub const RESULT: u32 = 0x8;
    pub const ARG: u32 = 0xC;
}

pub const CONTROL_BYTES: u32 = 16;

pub const OP_MAC_ROW: u32 = 1;
pub const OP_SHIFT_ROW: u32 = 2;
pub const OP_MAC_BATCH: u32 = 3;

pub fn mac_row_command(b: u32) -> u32 {
    OP_MAC_ROW << 28 | (b & 0xFFF)
}

pub fn shift_row_command(amount: u32, left: bool) -> u32 {
    OP_SHIFT_ROW << 28 | (left as u32) << 8 | (amount & 0x1F)
}

pub fn mac_batch_command(b: u32, count: u32) -> u32 {
    OP_MAC_BATCH << 28 | (count & 0xFFF) << 16 | (b & 0xFFF)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Pending {
    Mac { a: u32, b: u32, dest: Option<u32> },
    Shift { row: u32, amount: u32, left: bool },
}

#[derive(Debug, Clone)]
pub struct Imc {
    name: String,
    words: Vec<u32>,
    row_words: u32,
    mac_row_cycles: u32,
    compute_mode: bool,
    result: u32,
    arg: u32,
    done: bool,
    error: bool,
    queue: std::collections::VecDeque<Pending>,
    remaining: u32,
    pub commands: u64,
    pub macs: u64,
    pub rejected: u64,
    rejected_now: Option<u32>,
}

impl Imc {
    pub fn new(name: impl Into<String>, size_bytes: u32, row_words: u32, mac_row_cycles: u32) -> Self {
        assert!(size_bytes.is_multiple_of(4 * row_words), "array must hold whole rows");
        Imc {
            name: name.into(),
            words: vec![0; size_bytes as usize / 4],
            row_words,
            mac_row_cycles: mac_row_cycles.max(1),
            compute_mode: false,
            result: 0,
            arg: 0,
            done: false,
            error: false,
            queue: Default::default(),
            remaining: 0,
            commands: 0,
            macs: 0,
            rejected: 0,
            rejected_now: None,
        }
    }

    pub fn array_bytes(&self) -> u32 {
        self.words.len() as u32 * 4
    }

    pub fn rows(&self) -> u32 {
        self.words.len() as u32 / self.row_words
    }

    pub fn row_words(&self) -> u32 {
        self.row_words
    }

    pub fn words(&self) -> &[u32] {
        &self.words
    }

    /// Backdoor write (scenario preload).
    pub fn poke(&mut self, word: usize, value: u32) {
        self.words[word] = value;
    }

    pub fn busy_now(&self) -> bool {
        !self.queue.is_empty() || self.remaining > 0
    }

    fn status(&self) -> u32 {
        self.busy_now() as u32 | (self.done as u32) << 1 | (self.error as u32) << 2
    }

    fn row(&self, r: u32) -> &[u32] {
        let s = (r * self.row_words) as usize;
        &self.words[s..s + self.row_words as usize]
    }

    /// Wrapping dot product of two rows.
    pub fn mac(&self, a: u32, b: u32) -> u32 {
        self.row(a)
            .iter()
            .zip(self.row(b))
            .fold(0u32, |acc, (x, y)| acc.wrapping_add(x.wrapping_mul(*y)))
    }

    fn command(&mut self, word: u32, data: u32) -> Result<(), String> {
        let rows = self.rows();
        let a = word / self.row_words;
        let op = data >> 28;
        let b = data & 0xFFF;
        match op {
            OP_MAC_ROW => {
                if b >= rows {
                    return Err(format!("row {b} out of range"));
                }
                self.queue.push_back(Pending::Mac { a, b, dest: None });
            }
            OP_SHIFT_ROW => self.queue.push_back(Pending::Shift {
                row: a,
                amount: data & 0x1F,
                left: data & 0x100 != 0,
            }),
            OP_MAC_BATCH => {
                let count = (data >> 16) & 0xFFF;
                if b + count > rows || self.arg as u64 + count as u64 > self.words.len() as u64 {
                    return Err(format!("batch of {count} from row {b} out of range"));
                }
                for i in 0..count {
                    self.queue.push_back(Pending::Mac {
                        a,
                        b: b + i,
                        dest: Some(self.arg + i),
                    });
                }
            }
            _ => return Err(format!("unknown command {op}")),
        }
        self.commands += 1;
        self.done = false;
        Ok(())
    }

    fn finish(&mut self, p: Pending) {
        match p {
            Pending::Mac { a, b, dest } => {
                let r = self.mac(a, b);
                self.result = r;
                self.macs += 1;
                if let Some(d) = dest {
                    self.words[d as usize] = r;
                }
            }
            Pending::Shift { row, amount, left } => {
                let s = (row * self.row_words) as usize;
                let r = &mut self.words[s..s + self.row_words as usize];
                let n = (amount as usize).min(r.len());
                if left {
                    r.rotate_left(n);
                    let len = r.len();
                    r[len - n..].fill(0);
                } else {
                    r.rotate_right(n);
                    r[..n].fill(0);
                }
            }
        }
    }

    fn cost(&self, p: &Pending) -> u32 {
        match p {
            Pending::Mac { .. } => self.mac_row_cycles,
            Pending::Shift { .. } => 1,
        }
    }
}

impl Accelerator for Imc {
    fn name(&self) -> &str {
        &self.name
    }

    fn descriptor(&self) -> XaifDescriptor {
        XaifDescriptor {
            slave_windows: vec![self.array_bytes() + CONTROL_BYTES],
            master_ports: 0,
            irq_lines: 1,
            power_domains: vec![PowerDomainSpec {
                name: "array".into(),
                capabilities: Capabilities::MEMORY,
            }],
        }
    }

    fn reset(&mut self) {
        self.compute_mode = false;
        self.queue.clear();
        self.remaining = 0;
        self.done = false;
        self.error = false;
    }

    fn slave_access(
        &mut self,
        now: u64,
        _port: usize,
        offset: u32,
        req: &Request,
        domains: &[PowerState],
    ) -> Result<u32, AccessFault> {
        if let Some(f) = AccessFault::from_state(domains[0]) {
            return Err(f);
        }
        let array = self.array_bytes();
        if offset >= array {
            let reg = offset - array;
            if req.is_write {
                match reg {
                    regs::MODE => self.compute_mode = req.write_data & 1 != 0,
                    regs::STATUS => {
                        self.done = false;
                        self.error = false;
                    }
                    regs::ARG => self.arg = req.write_data,
                    _ => {}
                }
                return Ok(0);
            }
            return Ok(match reg {
                regs::MODE => self.compute_mode as u32,
                regs::STATUS => self.status(),
                regs::RESULT => self.result,
                regs::ARG => self.arg,
                _ => 0,
            });
        }
        let i = offset as usize / 4;
        if !self.compute_mode {
            if req.is_write {
                self.words[i] = merge_bytes(self.words[i], req.write_data, req.byte_enable);
                return Ok(0);
            }
            return Ok(self.words[i]);
        }
        if !req.is_write {
            return Ok(self.result);
        }
        if self.busy_now() {
            self.error = true;
            self.rejected += 1;
            self.rejected_now = Some(now as u32);
            return Ok(0);
        }
        if self.command(i as u32, req.write_data).is_err() {
            self.error = true;
            self.rejected += 1;
            self.rejected_now = Some(now as u32);
        }
        Ok(0)
    }

    fn tick(&mut self, ctx: &mut XaifContext<'_>) {
        if self.rejected_now.take().is_some() {
            ctx.events.push(SimEvent::new(
                ctx.now,
                &self.name,
                EventKind::CommandRejected,
                "command rejected",
            ));
        }
        if ctx.domains[0] != PowerState::Active || !self.busy_now() {
            return;
        }
        if self.remaining == 0 {
            let c = self.cost(self.queue.front().expect("busy"));
            self.remaining = c;
        }
        ctx.activity[0] += 1;
        self.remaining -= 1;
        if self.remaining == 0 {
            let p = self.queue.pop_front().expect("busy");
            self.finish(p);
            if self.queue.is_empty() {
                self.done = true;
                ctx.irqs.push(0);
            }
        }
    }

    fn on_power(&mut self, _domain: usize, done: Completed) {
        if done.to == PowerState::Off {
            self.words.fill(POISON_WORD);
            self.queue.clear();
            self.remaining = 0;
        }
    }

    fn peek(&self, _port: usize, offset: u32) -> Option<u32> {
        self.words.get(offset as usize / 4).copied()
    }

    fn busy(&self) -> bool {
        self.busy_now()
    }

    fn stats(&self) -> serde_json::Value {
        json!({
            "commands": self.commands,
            "row_macs": self.macs,
            "rejected": self.rejected,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mac_matches_scalar_reference() {
        let mut imc = Imc::new("imc", 1024, 16, 4);
        for k in 0..16 {
            imc.poke(k, k as u32 + 1);
            imc.poke(16 * 3 + k, 2 * k as u32 + 1);
        }
        let expect: u32 = (0..16u32).map(|k| (k + 1) * (2 * k + 1)).sum();
        assert_eq!(imc.mac(0, 3), expect);
    }

    #[test]
    fn shift_fills_zero() {
        let mut imc = Imc::new("imc", 64, 4, 1);
        for k in 0..4 {
            imc.poke(k, k as u32 + 1);
        }
        imc.finish(Pending::Shift {
            row: 0,
            amount: 1,
            left: false,
        });
        assert_eq!(&imc.words()[..4], &[0, 1, 2, 3]);
        imc.finish(Pending::Shift {
            row: 0,
            amount: 2,
            left: true,
        });
        assert_eq!(&imc.words()[..4], &[2, 3, 0, 0]);
    }

    #[test]
    fn command_encoding() {
        assert_eq!(mac_row_command(5), 0x1000_0005);
        assert_eq!(mac_batch_command(2, 3), 0x3003_0002);
        assert_eq!(shift_row_command(3, true), 0x2000_0103);
    }
}
