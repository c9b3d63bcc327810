//! The per-cycle phase loop and slave-side request handling.

use num_rational::Ratio;

use crate::error::ConfigError;
use crate::interconnect::{BusTransaction, SlaveId};
use crate::kernel::{EventKind, RunOutcome, SimEvent, StopCondition};
use crate::memory::AccessFault;
use crate::peripherals::{adc_regs, windows, Fifos};
use crate::power::state::PowerState;
use crate::power::DomainKind;
use crate::xaif::{MasterPorts, XaifContext};

use super::{Platform, AO_PERIPH_BASE, FLASH_XIP_BASE, PERIPH_BASE};

/// Response latency of a memory bank.
const SRAM_LATENCY: u32 = 1;

impl Platform {
    fn event(&mut self, e: SimEvent) {
        self.events.push(e);
    }

    fn raise(&mut self, id: u32) {
        self.plic.raise(id).expect("platform lines are registered");
    }

    /// Advances the platform by exactly one cycle.
    pub fn step(&mut self) {
        let now = self.clock.cycle();
        if self.fll.update(now) {
            self.apply_clock();
        }
        self.plic.set_time(now);
        if let Some(adc) = &mut self.adc {
            if now >= adc.next_due() {
                let dropped = adc.tick(&self.clock);
                if dropped > 0 {
                    let e = SimEvent::new(now, "adc", EventKind::AdcOverflow, format!("{dropped} samples dropped"));
                    self.events.push(e);
                }
            }
        }
        if let Some(f) = &mut self.flash {
            f.tick();
        }

        // phase 1: masters
        let cpu_state = self.pm.state(self.fixed.cpu);
        if let Some(cpu) = &mut self.cpu {
            let fx = cpu.issue(now, &mut self.bus, &mut self.plic, cpu_state);
            if cpu.active_this_cycle() {
                self.activity[self.fixed.cpu] += 1;
            }
            self.apply_cpu_effects(fx);
        }
        {
            let mut fifos = Fifos {
                adc: self.adc.as_mut(),
                flash: self.flash.as_mut(),
            };
            let fx = self.dma.issue(now, &mut self.bus, &mut fifos);
            if fx.raise_irq {
                let id = self.irqs.dma;
                self.raise(id);
            }
            if let Some(e) = fx.event {
                self.event(e);
            }
        }
        for i in 0..self.traffic.len() {
            if let Some(e) = self.traffic[i].issue(now, &mut self.bus) {
                self.event(e);
            }
        }
        self.tick_accelerators(now);

        // phase 2: arbitration
        let mut grants = std::mem::take(&mut self.grant_buf);
        grants.clear();
        grants.extend_from_slice(self.bus.arbitrate(now));

        // phase 3: slaves answer, masters observe grants
        for g in &grants {
            let t = self.bus.granted(g.master).clone();
            let (result, latency) = self.serve(now, &t);
            self.bus.complete(g.master, result, latency);
            self.activity[self.master_domain[g.master.0 as usize]] += 1;
            self.activity[self.fixed.always_on] += 1;
            if let Some(d) = self.slave_domain(&t) {
                if result.is_ok() {
                    self.activity[d] += 1;
                }
            }
        }
        self.grant_buf = grants;
        if let Some(cpu) = &mut self.cpu {
            let fx = cpu.on_grants(now, &self.bus, &mut self.plic, cpu_state);
            cpu.end_cycle(cpu_state);
            self.apply_cpu_effects(fx);
        }
        for t in &mut self.traffic {
            t.end_cycle();
        }
        if self.timer.tick() {
            let id = self.irqs.timer;
            self.raise(id);
        }

        // phase 4: interrupts reach the CPU
        if let Some(cpu) = &mut self.cpu {
            if let Some(s) = cpu.check_wake(&self.plic) {
                let cpu_dom = self.fixed.cpu;
                if let Err(e) = self.request_power(cpu_dom, s) {
                    self.event(SimEvent::new(now, "power", EventKind::PowerRejected, e.to_string()));
                }
            }
        }

        // phase 5: power transitions
        for (idx, done) in self.pm.tick() {
            if let DomainKind::Accelerator { accel, index } = self.pm.domains()[idx].kind {
                self.accels[accel as usize].model.on_power(index as usize, done);
            }
        }
        for b in &mut self.banks {
            b.tick_power();
        }

        // phase 6: energy
        for d in 0..self.activity.len() {
            let state = self.domain_state(d);
            let events = std::mem::take(&mut self.activity[d]);
            self.pm.account(d, state, events);
        }
        self.clock.tick();
    }

    fn apply_cpu_effects(&mut self, fx: crate::cpu::CpuEffects) {
        if let Some(s) = fx.power_request {
            let cpu_dom = self.fixed.cpu;
            if let Err(e) = self.request_power(cpu_dom, s) {
                let now = self.clock.cycle();
                self.event(SimEvent::new(now, "power", EventKind::PowerRejected, e.to_string()));
            }
        }
        if let Some(e) = fx.event {
            self.event(e);
        }
    }

    fn tick_accelerators(&mut self, now: u64) {
        for a in 0..self.accels.len() {
            let acc = &mut self.accels[a];
            for (k, &d) in acc.domains.iter().enumerate() {
                acc.domain_states[k] = self.pm.state(d);
            }
            acc.activity.fill(0);
            let mut ctx = XaifContext {
                now,
                masters: MasterPorts::new(&mut self.bus, &acc.masters),
                domains: &acc.domain_states,
                activity: &mut acc.activity,
                irqs: Vec::new(),
                power_requests: Vec::new(),
                events: Vec::new(),
            };
            acc.model.tick(&mut ctx);
            let XaifContext {
                irqs,
                power_requests,
                events,
                ..
            } = ctx;
            for (k, &d) in acc.domains.iter().enumerate() {
                self.activity[d] += acc.activity[k];
            }
            for i in irqs {
                let id = self.accels[a].irq_ids[i];
                self.raise(id);
            }
            for (k, s) in power_requests {
                let d = self.accels[a].domains[k];
                if let Err(e) = self.request_power(d, s) {
                    self.event(SimEvent::new(now, "power", EventKind::PowerRejected, e.to_string()));
                }
            }
            self.events.extend(events);
        }
    }

    fn slave_domain(&self, t: &BusTransaction) -> Option<usize> {
        let d = t.target.ok()?;
        match d.slave {
            SlaveId::Bank(b) => Some(self.bank_domains[b as usize]),
            SlaveId::Peripheral => {
                let base = self.bus.map().regions()[d.region].base;
                Some(if base == PERIPH_BASE {
                    self.fixed.peripheral
                } else {
                    self.fixed.ao_peripherals
                })
            }
            SlaveId::Xaif { accel, port } => {
                let doms = &self.accels[accel as usize].domains;
                doms.get((port as usize).min(doms.len().saturating_sub(1))).copied()
            }
            SlaveId::Error => None,
        }
    }

    /// Slave response for a transaction granted this cycle.
    fn serve(&mut self, now: u64, t: &BusTransaction) -> (Result<u32, AccessFault>, u32) {
        let d = match t.target {
            Ok(d) => d,
            Err(f) => return (Err(f), 1),
        };
        match d.slave {
            SlaveId::Bank(b) => {
                let r = self.banks[b as usize].access(d.offset, t.is_write, t.byte_enable, t.write_data);
                (r, SRAM_LATENCY)
            }
            SlaveId::Xaif { accel, port } => {
                let a = &mut self.accels[accel as usize];
                for (k, &dom) in a.domains.iter().enumerate() {
                    a.domain_states[k] = self.pm.state(dom);
                }
                let req = crate::interconnect::Request {
                    address: t.address,
                    is_write: t.is_write,
                    byte_enable: t.byte_enable,
                    write_data: t.write_data,
                };
                let r = a
                    .model
                    .slave_access(now, port as usize, d.offset, &req, &a.domain_states);
                (r, SRAM_LATENCY)
            }
            SlaveId::Peripheral => {
                let base = self.bus.map().regions()[d.region].base;
                let lat = 1 + self.config.peripheral_latency;
                let r = match base {
                    AO_PERIPH_BASE => self.ao_register(now, d.offset, t),
                    PERIPH_BASE => match AccessFault::from_state(self.pm.state(self.fixed.peripheral)) {
                        Some(f) => Err(f),
                        None => self.periph_register(d.offset, t),
                    },
                    FLASH_XIP_BASE => {
                        if t.is_write {
                            Err(AccessFault::Rejected)
                        } else {
                            return (Ok(0), lat + self.config.flash_fetch_latency);
                        }
                    }
                    _ => Err(AccessFault::Decode),
                };
                (r, lat)
            }
            SlaveId::Error => (Err(AccessFault::Decode), 1),
        }
    }

    fn ao_register(&mut self, now: u64, offset: u32, t: &BusTransaction) -> Result<u32, AccessFault> {
        let window = offset & !(windows::SIZE - 1);
        let reg = offset & (windows::SIZE - 1);
        match window {
            windows::POWER => {
                let idx = (reg / 4) as usize;
                if idx >= self.pm.domains().len() {
                    return Err(AccessFault::Decode);
                }
                if !t.is_write {
                    return Ok(self.pm.target(idx).code());
                }
                let Some(state) = PowerState::from_code(t.write_data) else {
                    return Err(AccessFault::Rejected);
                };
                if let Err(e) = self.request_power(idx, state) {
                    self.event(SimEvent::new(now, "power", EventKind::PowerRejected, e.to_string()));
                }
                Ok(0)
            }
            windows::FLL => {
                if !t.is_write {
                    return Ok(self.fll.mmio_read(reg));
                }
                let env = self.config.calibration.envelope.clone();
                match self.fll.mmio_write(now, reg, t.write_data, &env) {
                    Ok(()) => Ok(0),
                    Err(e) => {
                        self.event(SimEvent::new(now, "fll", EventKind::FrequencyRejected, e.to_string()));
                        Err(AccessFault::Rejected)
                    }
                }
            }
            windows::DMA => {
                if !t.is_write {
                    return Ok(self.dma.mmio_read(reg));
                }
                self.dma.mmio_write(reg, t.write_data).map(|_| 0).map_err(|e| {
                    self.events.push(SimEvent::new(now, "dma", EventKind::DmaError, e));
                    AccessFault::Rejected
                })
            }
            windows::TIMER => {
                if t.is_write {
                    self.timer.mmio_write(reg, t.write_data);
                    Ok(0)
                } else {
                    Ok(self.timer.mmio_read(reg))
                }
            }
            windows::UART => {
                if t.is_write {
                    self.uart.mmio_write(reg, t.write_data);
                }
                Ok(0)
            }
            windows::ADC => {
                let Some(adc) = &mut self.adc else {
                    return Err(AccessFault::Decode);
                };
                if t.is_write {
                    if reg == adc_regs::CTRL {
                        if t.write_data & 1 != 0 {
                            adc.enable(&self.clock);
                        } else {
                            adc.disable();
                        }
                    }
                    return Ok(0);
                }
                Ok(match reg {
                    adc_regs::DATA => adc.pop_sample().unwrap_or(0) as u32,
                    adc_regs::LEVEL => adc.level() as u32,
                    adc_regs::CTRL => adc.enabled() as u32,
                    adc_regs::DROPPED => adc.stats.dropped as u32,
                    _ => 0,
                })
            }
            windows::FLASH => match &mut self.flash {
                Some(f) if !t.is_write => Ok(f.mmio_read(reg)),
                Some(_) => Ok(0),
                None => Err(AccessFault::Decode),
            },
            _ => Err(AccessFault::Decode),
        }
    }

    fn periph_register(&mut self, offset: u32, t: &BusTransaction) -> Result<u32, AccessFault> {
        let window = offset & !(windows::SIZE - 1);
        let reg = offset & (windows::SIZE - 1);
        match window {
            windows::PLIC => {
                if t.is_write {
                    self.plic.mmio_write(reg, t.write_data).map(|_| 0).map_err(|_| AccessFault::Rejected)
                } else {
                    Ok(self.plic.mmio_read(reg))
                }
            }
            windows::GPIO => Ok(0),
            _ => Err(AccessFault::Decode),
        }
    }

    /// Runs until `stop` holds. Returns the number of cycles executed in
    /// this call and whether a limit cut the run short.
    pub fn run_until(&mut self, stop: StopCondition, cycle_limit: Option<u64>) -> Result<RunOutcome, ConfigError> {
        if cycle_limit == Some(0) {
            return Err(ConfigError::ZeroCycleLimit);
        }
        let start = self.clock.cycle();
        let limit = cycle_limit.map(|l| start + l);
        let truncated = loop {
            let now = self.clock.cycle();
            match stop {
                StopCondition::AllHalted if self.quiescent() => break false,
                StopCondition::CycleLimit { cycles } if now - start >= cycles => break true,
                StopCondition::WallTime { nanoseconds }
                    if self.clock.wall_time() >= Ratio::new(nanoseconds as u128, 1_000_000_000) =>
                {
                    break false
                }
                StopCondition::CycleLimit { cycles: 0 } => return Err(ConfigError::ZeroCycleLimit),
                _ => {}
            }
            if limit.is_some_and(|l| now >= l) {
                break true;
            }
            self.step();
        };
        Ok(RunOutcome {
            cycles: self.clock.cycle() - start,
            truncated,
        })
    }
}
