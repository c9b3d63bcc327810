//! Peripheral models: DMA, ADC stream, flash reader, timer and UART sink.

pub mod adc;
pub mod dma;

use std::collections::VecDeque;

use serde::Serialize;

pub use adc::{AdcStream, SampleSource};
pub use dma::{Dma, DmaConfig, DmaEndpoint, DmaStatus};

/// Register window offsets inside the always-on peripheral region.
pub mod windows {
    pub const POWER: u32 = 0x0000;
    pub const FLL: u32 = 0x1000;
    pub const DMA: u32 = 0x2000;
    pub const TIMER: u32 = 0x3000;
    pub const UART: u32 = 0x4000;
    pub const ADC: u32 = 0x5000;
    pub const FLASH: u32 = 0x6000;
    pub const SIZE: u32 = 0x1000;
    /// Offsets inside the switchable peripheral-domain region.
    pub const PLIC: u32 = 0x0000;
    pub const GPIO: u32 = 0x1000;
}

/// ADC register offsets.
pub mod adc_regs {
    /// Pops one sample.
    pub const DATA: u32 = 0x0;
    pub const LEVEL: u32 = 0x4;
    /// Bit 0 enable.
    pub const CTRL: u32 = 0x8;
    pub const DROPPED: u32 = 0xC;
}

/// Compare-match timer counting system cycles.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Timer {
    pub count: u64,
    pub compare: u64,
    pub enabled: bool,
    pub periodic: bool,
    #[serde(skip)]
    pub irq_line: Option<u32>,
    pub fired: u64,
}

pub mod timer_regs {
    pub const COUNT: u32 = 0x0;
    pub const COMPARE: u32 = 0x4;
    /// Bit 0 enable, bit 1 periodic. Writing restarts the count.
    pub const CTRL: u32 = 0x8;
}

impl Timer {
    /// Arms the timer to fire after `cycles` cycles.
    pub fn arm(&mut self, cycles: u64, periodic: bool) {
        self.count = 0;
        self.compare = cycles.max(1);
        self.enabled = true;
        self.periodic = periodic;
    }

    /// Advances one cycle; true when the compare value is hit.
    pub fn tick(&mut self) -> bool {
        if !self.enabled {
            return false;
        }
        self.count += 1;
        if self.count >= self.compare {
            self.fired += 1;
            if self.periodic {
                self.count = 0;
            } else {
                self.enabled = false;
            }
            return true;
        }
        false
    }

    pub fn mmio_read(&self, offset: u32) -> u32 {
        match offset {
            timer_regs::COUNT => self.count as u32,
            timer_regs::COMPARE => self.compare as u32,
            timer_regs::CTRL => self.enabled as u32 | (self.periodic as u32) << 1,
            _ => 0,
        }
    }

    pub fn mmio_write(&mut self, offset: u32, value: u32) {
        match offset {
            timer_regs::COMPARE => self.compare = value as u64,
            timer_regs::CTRL => {
                self.count = 0;
                self.enabled = value & 1 != 0;
                self.periodic = value & 2 != 0;
            }
            _ => {}
        }
    }
}

/// Transmit-only UART collecting written bytes.
#[derive(Debug, Clone, Default)]
pub struct Uart {
    pub log: Vec<u8>,
}

impl Uart {
    pub fn mmio_write(&mut self, offset: u32, value: u32) {
        if offset == 0 {
            self.log.push(value as u8);
        }
    }

    pub fn text(&self) -> String {
        String::from_utf8_lossy(&self.log).into_owned()
    }
}

/// Off-chip SPI flash exposed as a read-only word FIFO.
#[derive(Debug, Clone, Default)]
pub struct Flash {
    image: Vec<u32>,
    pos: usize,
    /// Extra cycles per word over SPI.
    pub word_latency: u32,
    wait: u32,
    pub words_read: u64,
}

impl Flash {
    pub fn new(image: Vec<u32>, word_latency: u32) -> Self {
        Flash {
            image,
            pos: 0,
            word_latency,
            wait: word_latency,
            words_read: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.image.len() - self.pos
    }

    /// Called once per cycle to let the SPI link make progress.
    pub fn tick(&mut self) {
        self.wait = self.wait.saturating_sub(1);
    }

    pub fn pop_word(&mut self) -> Option<u32> {
        if self.wait > 0 || self.pos >= self.image.len() {
            return None;
        }
        let w = self.image[self.pos];
        self.pos += 1;
        self.wait = self.word_latency;
        self.words_read += 1;
        Some(w)
    }

    pub fn mmio_read(&mut self, offset: u32) -> u32 {
        match offset {
            0x0 => self.pop_word().unwrap_or(0),
            0x4 => self.remaining() as u32,
            _ => 0,
        }
    }
}

/// FIFO multiplexer for DMA sources.
pub struct Fifos<'a> {
    pub adc: Option<&'a mut AdcStream>,
    pub flash: Option<&'a mut Flash>,
}

impl dma::FifoSource for Fifos<'_> {
    fn pop_word(&mut self, id: u8) -> Option<u32> {
        match id {
            dma::FIFO_ADC => self.adc.as_mut()?.pop_word(),
            dma::FIFO_FLASH => self.flash.as_mut()?.pop_word(),
            _ => None,
        }
    }
}

/// Queue used by tests and scenarios to feed words into a FIFO port.
impl dma::FifoSource for VecDeque<u32> {
    fn pop_word(&mut self, _id: u8) -> Option<u32> {
        self.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_shot_and_periodic_timer() {
        let mut t = Timer::default();
        t.arm(3, false);
        let fired: Vec<bool> = (0..5).map(|_| t.tick()).collect();
        assert_eq!(fired, [false, false, true, false, false]);
        t.arm(2, true);
        assert_eq!((0..6).filter(|_| t.tick()).count(), 3);
    }

    #[test]
    fn flash_latency() {
        let mut f = Flash::new(vec![1, 2], 1);
        assert_eq!(f.pop_word(), None);
        f.tick();
        assert_eq!(f.pop_word(), Some(1));
        f.tick();
        assert_eq!(f.pop_word(), Some(2));
        f.tick();
        assert_eq!(f.pop_word(), None);
    }

    #[test]
    fn uart_collects_text() {
        let mut u = Uart::default();
        for b in b"ok\n" {
            u.mmio_write(0, *b as u32);
        }
        assert_eq!(u.text(), "ok\n");
    }
}
