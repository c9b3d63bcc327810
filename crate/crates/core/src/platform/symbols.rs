//! Built-in symbol table for microprograms.

use std::collections::BTreeMap;

use super::{Platform, AO_PERIPH_BASE, FLASH_XIP_BASE, PERIPH_BASE};
use crate::peripherals::{adc_regs, dma::regs as dma, timer_regs, windows};
use crate::power::fll::regs as fll;

impl Platform {
    /// Names usable in microprogram address expressions: memory and bank
    /// bases, peripheral registers, power registers per domain and the
    /// accelerator windows (`<name>.s<port>`).
    pub fn symbols(&self) -> BTreeMap<String, u32> {
        let mut s = BTreeMap::new();
        let map = self.bus.map();
        let mem = map.memory_region();
        s.insert("ram".to_string(), mem.base);
        for b in 0..self.banks.len() as u32 {
            s.insert(format!("bank{b}"), map.address_of(b, 0));
        }
        let ao = |w: u32, r: u32| AO_PERIPH_BASE + w + r;
        let fixed = [
            ("fll.freq", ao(windows::FLL, fll::FREQ_HZ)),
            ("fll.voltage", ao(windows::FLL, fll::VOLTAGE_MV)),
            ("fll.bypass", ao(windows::FLL, fll::BYPASS)),
            ("fll.status", ao(windows::FLL, fll::STATUS)),
            ("dma.src", ao(windows::DMA, dma::SRC)),
            ("dma.dst", ao(windows::DMA, dma::DST)),
            ("dma.len", ao(windows::DMA, dma::LEN)),
            ("dma.stride", ao(windows::DMA, dma::STRIDE)),
            ("dma.ctrl", ao(windows::DMA, dma::CTRL)),
            ("dma.status", ao(windows::DMA, dma::STATUS)),
            ("timer.count", ao(windows::TIMER, timer_regs::COUNT)),
            ("timer.compare", ao(windows::TIMER, timer_regs::COMPARE)),
            ("timer.ctrl", ao(windows::TIMER, timer_regs::CTRL)),
            ("uart.tx", ao(windows::UART, 0)),
            ("adc.data", ao(windows::ADC, adc_regs::DATA)),
            ("adc.level", ao(windows::ADC, adc_regs::LEVEL)),
            ("adc.ctrl", ao(windows::ADC, adc_regs::CTRL)),
            ("adc.dropped", ao(windows::ADC, adc_regs::DROPPED)),
            ("flash.data", ao(windows::FLASH, 0)),
            ("flash.xip", FLASH_XIP_BASE),
            ("plic", PERIPH_BASE + windows::PLIC),
            ("plic.claim", PERIPH_BASE + windows::PLIC + 0xC00),
            ("gpio", PERIPH_BASE + windows::GPIO),
        ];
        for (k, v) in fixed {
            s.insert(k.to_string(), v);
        }
        for (i, d) in self.pm.domains().iter().enumerate() {
            s.insert(format!("power.{}", d.name), ao(windows::POWER, 4 * i as u32));
        }
        for r in map.regions() {
            if matches!(r.target, crate::interconnect::RegionTarget::Xaif { .. }) {
                s.insert(r.name.clone(), r.base);
            }
        }
        s
    }
}
