//! Single-channel DMA engine with separate read and write master ports.
//!
//! Pipeline: a word read in cycle `t` (memory source) is written in `t + 1`.
//! With one outstanding transaction per port this sustains one word per
//! cycle. A FIFO source hands words over directly without a bus read.

use std::collections::VecDeque;

use serde::Serialize;

use crate::interconnect::{Interconnect, MasterId, Request};
use crate::kernel::{EventKind, SimEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DmaEndpoint {
    Memory { address: u32 },
    /// Peripheral FIFO by id (0 = ADC, 1 = flash).
    Fifo { id: u8 },
}

pub const FIFO_ADC: u8 = 0;
pub const FIFO_FLASH: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DmaStatus {
    Idle,
    Busy,
    Done,
    Error,
}

impl DmaStatus {
    pub fn code(self) -> u32 {
        match self {
            DmaStatus::Idle => 0,
            DmaStatus::Busy => 1,
            DmaStatus::Done => 2,
            DmaStatus::Error => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DmaConfig {
    pub src: DmaEndpoint,
    /// Destination must be memory-mapped.
    pub dst: u32,
    pub length_bytes: u32,
    /// Source address increment in words (0 repeats one address).
    pub word_stride: u32,
}

/// Register offsets inside the DMA window.
pub mod regs {
    pub const SRC: u32 = 0x00;
    pub const DST: u32 = 0x04;
    pub const LEN: u32 = 0x08;
    pub const STRIDE: u32 = 0x0C;
    /// Bit 0 start. Bit 1 source is a FIFO, bits 8..15 its id.
    pub const CTRL: u32 = 0x10;
    pub const STATUS: u32 = 0x14;
}

/// Source of FIFO words during a transfer.
pub trait FifoSource {
    fn pop_word(&mut self, id: u8) -> Option<u32>;
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct DmaStats {
    pub transfers: u64,
    pub words_read: u64,
    pub words_written: u64,
}

#[derive(Debug, Clone)]
pub struct Dma {
    read_port: MasterId,
    write_port: MasterId,
    pub irq_line: Option<u32>,
    regs: [u32; 4],
    status: DmaStatus,
    cfg: Option<DmaConfig>,
    words: u32,
    reads_issued: u32,
    writes_issued: u32,
    writes_done: u32,
    buffer: VecDeque<u32>,
    read_outstanding: bool,
    write_outstanding: bool,
    pub stats: DmaStats,
}

/// What one DMA cycle produced.
#[derive(Debug, Default)]
pub struct DmaEffects {
    pub raise_irq: bool,
    pub event: Option<SimEvent>,
}

impl Dma {
    pub fn new(read_port: MasterId, write_port: MasterId) -> Self {
        Dma {
            read_port,
            write_port,
            irq_line: None,
            regs: [0; 4],
            status: DmaStatus::Idle,
            cfg: None,
            words: 0,
            reads_issued: 0,
            writes_issued: 0,
            writes_done: 0,
            buffer: VecDeque::with_capacity(2),
            read_outstanding: false,
            write_outstanding: false,
            stats: DmaStats::default(),
        }
    }

    pub fn ports(&self) -> (MasterId, MasterId) {
        (self.read_port, self.write_port)
    }

    pub fn status(&self) -> DmaStatus {
        self.status
    }

    pub fn is_busy(&self) -> bool {
        self.status == DmaStatus::Busy
    }

    pub fn config(&self) -> Option<DmaConfig> {
        self.cfg
    }

    /// Starts a transfer. Rejected while busy or for unaligned lengths.
    pub fn start(&mut self, cfg: DmaConfig) -> Result<(), String> {
        if self.is_busy() {
            return Err("channel busy".into());
        }
        if !cfg.length_bytes.is_multiple_of(4) || cfg.length_bytes == 0 {
            return Err(format!("length {} is not a positive multiple of 4", cfg.length_bytes));
        }
        self.cfg = Some(cfg);
        self.words = cfg.length_bytes / 4;
        self.reads_issued = 0;
        self.writes_issued = 0;
        self.writes_done = 0;
        self.buffer.clear();
        self.status = DmaStatus::Busy;
        self.stats.transfers += 1;
        Ok(())
    }

    pub fn mmio_read(&self, offset: u32) -> u32 {
        match offset {
            regs::STATUS => self.status.code(),
            o if o < regs::CTRL => self.regs[(o / 4) as usize],
            _ => 0,
        }
    }

    pub fn mmio_write(&mut self, offset: u32, value: u32) -> Result<(), String> {
        if self.is_busy() && offset <= regs::CTRL {
            return Err("reconfiguration while busy".into());
        }
        match offset {
            o if o < regs::CTRL => self.regs[(o / 4) as usize] = value,
            regs::CTRL if value & 1 != 0 => {
                let src = if value & 2 != 0 {
                    DmaEndpoint::Fifo {
                        id: (value >> 8) as u8,
                    }
                } else {
                    DmaEndpoint::Memory {
                        address: self.regs[0],
                    }
                };
                self.start(DmaConfig {
                    src,
                    dst: self.regs[1],
                    length_bytes: self.regs[2],
                    word_stride: self.regs[3],
                })?;
            }
            _ => {}
        }
        Ok(())
    }

    fn fail(&mut self, now: u64, what: String) -> DmaEffects {
        self.status = DmaStatus::Error;
        DmaEffects {
            raise_irq: true,
            event: Some(SimEvent::new(now, "dma", EventKind::DmaError, what)),
        }
    }

    /// Phase 1: take responses and issue the next read and write.
    pub fn issue(&mut self, now: u64, bus: &mut Interconnect, fifos: &mut dyn FifoSource) -> DmaEffects {
        if let Some(t) = bus.take_response(self.read_port, now) {
            self.read_outstanding = false;
            if let Some(f) = t.fault {
                return self.fail(now, format!("read fault {f:?} at {:#010x}", t.address));
            }
            self.buffer.push_back(t.read_data.unwrap_or(0));
            self.stats.words_read += 1;
        }
        if let Some(t) = bus.take_response(self.write_port, now) {
            self.write_outstanding = false;
            if let Some(f) = t.fault {
                return self.fail(now, format!("write fault {f:?} at {:#010x}", t.address));
            }
            self.writes_done += 1;
            self.stats.words_written += 1;
        }
        if self.status != DmaStatus::Busy {
            return DmaEffects::default();
        }
        let cfg = self.cfg.expect("busy channel has a config");
        if self.writes_done == self.words {
            self.status = DmaStatus::Done;
            return DmaEffects {
                raise_irq: true,
                event: None,
            };
        }
        // the FIFO handshake stands in for the read stage
        if let DmaEndpoint::Fifo { id } = cfg.src {
            if self.buffer.is_empty() && self.reads_issued < self.words {
                if let Some(w) = fifos.pop_word(id) {
                    self.buffer.push_back(w);
                    self.reads_issued += 1;
                    self.stats.words_read += 1;
                }
            }
        }
        if !self.write_outstanding && self.writes_issued < self.words {
            if let Some(w) = self.buffer.pop_front() {
                let addr = cfg.dst.wrapping_add(4 * self.writes_issued);
                bus.issue(self.write_port, Request::write(addr, w), now);
                self.write_outstanding = true;
                self.writes_issued += 1;
            }
        }
        if let DmaEndpoint::Memory { address } = cfg.src {
            let in_pipe = self.buffer.len() + self.read_outstanding as usize;
            if !self.read_outstanding && in_pipe < 2 && self.reads_issued < self.words {
                let addr = address.wrapping_add(4 * cfg.word_stride * self.reads_issued);
                bus.issue(self.read_port, Request::read(addr), now);
                self.read_outstanding = true;
                self.reads_issued += 1;
            }
        }
        DmaEffects::default()
    }
}
