//! A fully wired platform instance: bus, memory, CPU, peripherals,
//! interrupt controller, power manager and attached accelerators.

mod step;
mod symbols;

use std::sync::Arc;

use serde::Serialize;

use crate::cpu::traffic::TrafficMaster;
use crate::cpu::{Cpu, CpuProfile, Microprogram};
use crate::error::ConfigError;
use crate::interconnect::{
    AddressMap, AddressingMode, BusTopology, Interconnect, MasterId, MemoryLayout, Region, RegionTarget,
};
use crate::interrupt::{InterruptController, IrqSource, XAIF_DEFAULT_PRIORITY};
use crate::kernel::{SimClock, SimEvent};
use crate::memory::{MemoryBank, DEFAULT_BANK_SIZE};
use crate::peripherals::{AdcStream, Dma, Flash, Timer, Uart};
use crate::power::calibration::{CalibrationTable, DomainParams};
use crate::power::fll::{Fll, OperatingPoint};
use crate::power::state::PowerState;
use crate::power::{Capabilities, DomainKind, PowerManager};
use crate::xaif::{Accelerator, XaifCapacity};

/// Base of the always-on peripheral register region.
pub const AO_PERIPH_BASE: u32 = 0x2000_0000;
/// Base of the switchable peripheral-domain region.
pub const PERIPH_BASE: u32 = 0x3000_0000;
pub const PERIPH_REGION_SIZE: u32 = 0x1_0000;
/// Execute-in-place window of the off-chip flash.
pub const FLASH_XIP_BASE: u32 = 0x4000_0000;
pub const FLASH_XIP_SIZE: u32 = 0x100_0000;
/// Default base for accelerator windows.
pub const XAIF_BASE: u32 = 0xF000_0000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlatformConfig {
    /// `None` builds a platform without a CPU.
    pub cpu: Option<CpuProfile>,
    pub bank_count: u32,
    pub bank_size: u32,
    pub addressing: AddressingMode,
    pub topology: BusTopology,
    pub memory_base: u32,
    /// Extra response latency of the peripheral port.
    pub peripheral_latency: u32,
    /// Extra latency of instruction fetches from the flash window.
    pub flash_fetch_latency: u32,
    pub code_base: u32,
    pub xaif: XaifCapacity,
    pub operating_point: OperatingPoint,
    pub fll_bypass: bool,
    pub fll_lock_latency: u32,
    #[serde(skip)]
    pub calibration: Arc<CalibrationTable>,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            cpu: Some(CpuProfile::new(crate::cpu::CoreKind::Cv32e40p)),
            bank_count: 8,
            bank_size: DEFAULT_BANK_SIZE,
            addressing: AddressingMode::Contiguous,
            topology: BusTopology::FullyConnected,
            memory_base: 0,
            peripheral_latency: 2,
            flash_fetch_latency: 0,
            code_base: 0,
            xaif: XaifCapacity {
                slave_ports: 4,
                master_ports: 8,
                irq_lines: 4,
                power_domains: 4,
            },
            operating_point: OperatingPoint {
                voltage_v: 0.8,
                frequency_hz: 1_000_000,
            },
            fll_bypass: false,
            fll_lock_latency: 0,
            calibration: Arc::new(CalibrationTable::default()),
        }
    }
}

#[derive(Debug)]
pub(crate) struct Attached {
    pub model: Box<dyn Accelerator>,
    pub masters: Vec<MasterId>,
    /// Power manager indices of the accelerator's domains.
    pub domains: Vec<usize>,
    pub irq_ids: Vec<u32>,
    pub domain_states: Vec<PowerState>,
    pub activity: Vec<u64>,
}

/// Power-domain indices of the fixed platform domains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FixedDomains {
    pub always_on: usize,
    pub ao_peripherals: usize,
    pub cpu: usize,
    pub peripheral: usize,
}

/// Interrupt ids of the built-in sources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct IrqIds {
    pub dma: u32,
    pub timer: u32,
    pub adc: u32,
}

#[derive(Debug)]
pub struct Platform {
    pub config: PlatformConfig,
    pub clock: SimClock,
    pub bus: Interconnect,
    pub banks: Vec<MemoryBank>,
    pub cpu: Option<Cpu>,
    cpu_ports: Option<(MasterId, MasterId)>,
    pub traffic: Vec<TrafficMaster>,
    pub dma: Dma,
    pub adc: Option<AdcStream>,
    pub flash: Option<Flash>,
    pub timer: Timer,
    pub uart: Uart,
    pub plic: InterruptController,
    pub pm: PowerManager,
    pub fll: Fll,
    pub(crate) accels: Vec<Attached>,
    pub fixed: FixedDomains,
    pub bank_domains: Vec<usize>,
    pub irqs: IrqIds,
    pub events: Vec<SimEvent>,
    /// Power domain charged for each master port's transactions.
    master_domain: Vec<usize>,
    activity: Vec<u64>,
    grant_buf: Vec<crate::interconnect::Grant>,
}

fn bank_params(cal: &CalibrationTable) -> DomainParams {
    cal.domain("bank")
}

impl Platform {
    pub fn new(config: PlatformConfig) -> Result<Self, ConfigError> {
        let cal = Arc::clone(&config.calibration);
        cal.envelope.check(config.operating_point)?;
        let layout = MemoryLayout {
            mode: config.addressing,
            bank_count: config.bank_count,
            bank_size: config.bank_size,
        };
        let mut map = AddressMap::new(config.memory_base, layout)?;
        map.add(Region {
            name: "ao-periph".into(),
            base: AO_PERIPH_BASE,
            size: PERIPH_REGION_SIZE,
            target: RegionTarget::Peripheral,
        })?;
        map.add(Region {
            name: "periph".into(),
            base: PERIPH_BASE,
            size: PERIPH_REGION_SIZE,
            target: RegionTarget::Peripheral,
        })?;
        map.add(Region {
            name: "flash".into(),
            base: FLASH_XIP_BASE,
            size: FLASH_XIP_SIZE,
            target: RegionTarget::Peripheral,
        })?;
        let mut bus = Interconnect::new(config.topology, map);
        let banks = (0..config.bank_count as usize)
            .map(|i| MemoryBank::new(i, config.bank_size))
            .collect::<Result<Vec<_>, _>>()?;

        let mut pm = PowerManager::new(&cal, config.operating_point);
        let ao = cal.domain("always-on");
        let essential = cal.always_on_essential_fraction;
        let always_on = pm.add_domain(
            "always-on",
            DomainKind::AlwaysOn,
            DomainParams {
                leak_active_w: ao.leak_active_w * essential,
                leak_gated_w: ao.leak_gated_w * essential,
                leak_retention_w: ao.leak_retention_w * essential,
                ..ao
            },
            Capabilities::NONE,
        );
        let ao_peripherals = pm.add_domain(
            "ao-peripherals",
            DomainKind::AlwaysOnPeripherals,
            DomainParams {
                leak_active_w: ao.leak_active_w * (1.0 - essential),
                leak_gated_w: ao.leak_gated_w * (1.0 - essential),
                leak_retention_w: ao.leak_retention_w * (1.0 - essential),
                clock_j: 0.0,
                activity_j: 0.0,
            },
            Capabilities::NONE,
        );
        let cpu_dom = pm.add_domain("cpu", DomainKind::Cpu, cal.domain("cpu"), Capabilities::LOGIC);
        let peripheral = pm.add_domain(
            "peripheral",
            DomainKind::Peripheral,
            cal.domain("peripheral"),
            Capabilities::LOGIC,
        );
        let bank_domains = (0..config.bank_count as u16)
            .map(|i| {
                pm.add_domain(
                    format!("bank{i}"),
                    DomainKind::Bank { index: i },
                    bank_params(&cal),
                    Capabilities::MEMORY,
                )
            })
            .collect();

        let mut master_domain = Vec::new();
        let cpu_ports = config.cpu.map(|_| {
            let i = bus.add_master();
            let d = bus.add_master();
            master_domain.extend([cpu_dom, cpu_dom]);
            (i, d)
        });
        let dma_r = bus.add_master();
        let dma_w = bus.add_master();
        master_domain.extend([always_on, always_on]);
        let mut dma = Dma::new(dma_r, dma_w);

        let mut plic = InterruptController::new();
        let dma_irq = plic.add_line(IrqSource::Dma, 3, false);
        let timer_irq = plic.add_line(IrqSource::Peripheral { name: "timer".into() }, 2, true);
        let adc_irq = plic.add_line(IrqSource::Peripheral { name: "adc".into() }, 1, false);
        dma.irq_line = Some(dma_irq);
        let timer = Timer {
            irq_line: Some(timer_irq),
            ..Timer::default()
        };

        let mut fll = Fll::new(config.operating_point, config.fll_bypass);
        fll.lock_latency = config.fll_lock_latency;
        let op = fll.output();
        pm.set_operating_point(op);
        let clock = SimClock::new(op.frequency_hz, op.voltage_v);
        let n_domains = pm.domains().len();

        let mut p = Platform {
            clock,
            bus,
            banks,
            cpu: None,
            cpu_ports,
            traffic: Vec::new(),
            dma,
            adc: None,
            flash: None,
            timer,
            uart: Uart::default(),
            plic,
            pm,
            fll,
            accels: Vec::new(),
            fixed: FixedDomains {
                always_on,
                ao_peripherals,
                cpu: cpu_dom,
                peripheral,
            },
            bank_domains,
            irqs: IrqIds {
                dma: dma_irq,
                timer: timer_irq,
                adc: adc_irq,
            },
            events: Vec::new(),
            master_domain,
            activity: vec![0; n_domains],
            grant_buf: Vec::new(),
            config,
        };
        if p.config.cpu.is_none() {
            // nothing to clock in the CPU domain
            p.pm.force(cpu_dom, PowerState::Off)?;
        }
        Ok(p)
    }

    /// Installs a program on the CPU, replacing any previous one.
    pub fn load_program(&mut self, program: Arc<Microprogram>) -> Result<(), ConfigError> {
        let profile = self
            .config
            .cpu
            .ok_or_else(|| ConfigError::invalid("platform has no CPU"))?;
        let (i, d) = self.cpu_ports.expect("CPU ports exist with a CPU");
        match &mut self.cpu {
            Some(cpu) => cpu.load_program(program),
            None => {
                let mut cpu = Cpu::new(profile, program, self.config.code_base, i, d);
                cpu.profile = profile;
                self.cpu = Some(cpu);
                self.pm.domain_mut(self.fixed.cpu).dynamic_scale = profile.dynamic_power_scale;
            }
        }
        Ok(())
    }

    /// Adds a traffic master with its own bus port.
    pub fn add_traffic(&mut self, name: &str, program: Arc<Microprogram>) -> MasterId {
        let m = self.bus.add_master();
        self.master_domain.push(self.fixed.always_on);
        self.traffic.push(TrafficMaster::new(name, program, m));
        m
    }

    /// Attaches an accelerator with its slave windows starting at `base`,
    /// each aligned to 4 KiB.
    pub fn attach(&mut self, model: Box<dyn Accelerator>, base: u32) -> Result<usize, ConfigError> {
        let desc = model.descriptor();
        let existing: Vec<_> = self.accels.iter().map(|a| a.model.descriptor()).collect();
        self.config.xaif.check(existing.iter().chain(std::iter::once(&desc)))?;
        let name = model.name().to_string();
        if self.accels.iter().any(|a| a.model.name() == name) {
            return Err(ConfigError::invalid(format!("accelerator `{name}` attached twice")));
        }
        let accel = self.accels.len() as u16;
        let mut addr = base as u64;
        for (port, &size) in desc.slave_windows.iter().enumerate() {
            self.bus.map_mut().add(Region {
                name: format!("{name}.s{port}"),
                base: addr as u32,
                size,
                target: RegionTarget::Xaif {
                    accel,
                    port: port as u16,
                },
            })?;
            addr += (size as u64).div_ceil(0x1000) * 0x1000;
        }
        let cal = Arc::clone(&self.config.calibration);
        let domains: Vec<usize> = desc
            .power_domains
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let key = format!("{name}.{}", d.name);
                let params = cal.domain(&key);
                self.activity.push(0);
                self.pm.add_domain(
                    key,
                    DomainKind::Accelerator {
                        accel,
                        index: i as u16,
                    },
                    params,
                    d.capabilities,
                )
            })
            .collect();
        let charge = domains.first().copied().unwrap_or(self.fixed.always_on);
        let masters = (0..desc.master_ports)
            .map(|_| {
                self.master_domain.push(charge);
                self.bus.add_master()
            })
            .collect();
        let irq_ids = (0..desc.irq_lines)
            .map(|i| {
                self.plic.add_line(
                    IrqSource::Xaif {
                        accel: name.clone(),
                        index: i as u16,
                    },
                    XAIF_DEFAULT_PRIORITY,
                    false,
                )
            })
            .collect();
        let n = domains.len();
        self.accels.push(Attached {
            model,
            masters,
            domains,
            irq_ids,
            domain_states: vec![PowerState::Active; n],
            activity: vec![0; n],
        });
        Ok(accel as usize)
    }

    pub fn accelerator(&self, idx: usize) -> &dyn Accelerator {
        self.accels[idx].model.as_ref()
    }

    pub fn accelerator_mut(&mut self, idx: usize) -> &mut dyn Accelerator {
        self.accels[idx].model.as_mut()
    }

    pub fn accelerator_count(&self) -> usize {
        self.accels.len()
    }

    pub fn find_accelerator(&self, name: &str) -> Option<usize> {
        self.accels.iter().position(|a| a.model.name() == name)
    }

    pub fn accelerator_irqs(&self, idx: usize) -> &[u32] {
        &self.accels[idx].irq_ids
    }

    pub fn accelerator_domains(&self, idx: usize) -> &[usize] {
        &self.accels[idx].domains
    }

    /// Effective state of any power domain.
    pub fn domain_state(&self, idx: usize) -> PowerState {
        match self.pm.domains()[idx].kind {
            DomainKind::Bank { index } => self.banks[index as usize].power_state(),
            _ => self.pm.state(idx),
        }
    }

    /// Schedules a power transition on any domain.
    pub fn request_power(&mut self, idx: usize, to: PowerState) -> Result<u32, ConfigError> {
        match self.pm.domains()[idx].kind {
            DomainKind::Bank { index } => {
                let from = self.banks[index as usize].power().target();
                if let Err(e) = self.pm.check_from(idx, from, to) {
                    self.pm.rejected += 1;
                    return Err(e);
                }
                let lat = *self.pm.latencies();
                self.banks[index as usize].set_power_state(to, &lat)
            }
            _ => self.pm.request(idx, to),
        }
    }

    /// Immediate power state for phase setup.
    pub fn force_power(&mut self, idx: usize, to: PowerState) -> Result<(), ConfigError> {
        match self.pm.domains()[idx].kind {
            DomainKind::Bank { index } => {
                let from = self.banks[index as usize].power().target();
                self.pm.check_from(idx, from, to)?;
                self.banks[index as usize].force_power_state(to)
            }
            DomainKind::Accelerator { accel, index } => {
                self.pm.check(idx, to)?;
                let from = self.pm.state(idx);
                self.pm.force(idx, to)?;
                if from != to {
                    self.accels[accel as usize]
                        .model
                        .on_power(index as usize, crate::power::state::Completed { from, to });
                }
            }
            _ => self.pm.force(idx, to)?,
        }
        Ok(())
    }

    pub fn domain_index(&self, name: &str) -> Result<usize, ConfigError> {
        self.pm.find(name)
    }

    /// Applies an operating point immediately (phase boundaries).
    pub fn set_operating_point(&mut self, op: OperatingPoint, bypass: bool) -> Result<(), ConfigError> {
        let effective = OperatingPoint {
            voltage_v: op.voltage_v,
            frequency_hz: if bypass { crate::power::fll::BYPASS_HZ } else { op.frequency_hz },
        };
        self.config.calibration.envelope.check(effective)?;
        self.config.calibration.envelope.check(op)?;
        self.fll.force(op, bypass);
        self.apply_clock();
        Ok(())
    }

    fn apply_clock(&mut self) {
        let out = self.fll.output();
        self.clock.set(out.frequency_hz, out.voltage_v);
        self.pm.set_operating_point(out);
        if let Some(adc) = &mut self.adc {
            adc.reschedule(&self.clock);
        }
    }

    /// Backdoor write through the address map (preloading).
    pub fn poke(&mut self, addr: u32, value: u32) -> Result<(), ConfigError> {
        let d = self
            .bus
            .map()
            .decode(addr)
            .map_err(|_| ConfigError::invalid(format!("address {addr:#010x} is unmapped")))?;
        match d.slave {
            crate::interconnect::SlaveId::Bank(b) => {
                self.banks[b as usize].poke(d.offset, value);
                Ok(())
            }
            crate::interconnect::SlaveId::Xaif { accel, port } => {
                let a = &mut self.accels[accel as usize];
                let states: Vec<PowerState> = a.domains.iter().map(|&i| self.pm.state(i)).collect();
                a.model
                    .slave_access(0, port as usize, d.offset, &crate::interconnect::Request::write(addr, value), &states)
                    .map(|_| ())
                    .map_err(|f| ConfigError::invalid(format!("preload at {addr:#010x} faulted: {f:?}")))
            }
            _ => Err(ConfigError::invalid(format!(
                "address {addr:#010x} is not preloadable"
            ))),
        }
    }

    /// Backdoor read of a memory or accelerator word.
    pub fn peek(&self, addr: u32) -> Option<u32> {
        let d = self.bus.map().decode(addr).ok()?;
        match d.slave {
            crate::interconnect::SlaveId::Bank(b) => Some(self.banks[b as usize].peek(d.offset)),
            crate::interconnect::SlaveId::Xaif { accel, port } => {
                self.accels[accel as usize].model.peek(port as usize, d.offset)
            }
            _ => None,
        }
    }

    pub fn cpu_ports(&self) -> Option<(MasterId, MasterId)> {
        self.cpu_ports
    }

    /// True when every master is finished and no engine is busy.
    pub fn quiescent(&self) -> bool {
        self.cpu.as_ref().is_none_or(|c| c.is_done())
            && self.traffic.iter().all(|t| t.is_done())
            && !self.dma.is_busy()
            && self.accels.iter().all(|a| !a.model.busy())
    }

    pub fn now(&self) -> u64 {
        self.clock.cycle()
    }

    pub fn op(&self) -> OperatingPoint {
        self.fll.output()
    }
}
