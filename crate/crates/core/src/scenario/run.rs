//! Scenario instantiation and phase execution.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::{eval_address, resolve_symbols, AcceleratorKind, AcceleratorSpec, DmaSource, PhaseSpec, Scenario};
use crate::error::{ConfigError, Error};
use crate::interconnect::{BusTransaction, RegionTarget};
use crate::kernel::ratio_to_f64;
use crate::peripherals::{AdcStream, DmaConfig, DmaEndpoint, Flash};
use crate::platform::{Platform, XAIF_BASE};
use crate::report::{EnergyReport, PhaseRecord};
use crate::xaif::cgra::{Cgra, KernelDescriptor, LaneDesc};
use crate::xaif::imc::Imc;
use crate::xaif::Accelerator;

/// Phases without an explicit limit stop after this many cycles.
pub const DEFAULT_CYCLE_LIMIT: u64 = 1_000_000_000;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub report: EnergyReport,
    pub trace: Option<Vec<BusTransaction>>,
    pub uart: String,
}

fn next_free_base(p: &Platform) -> u32 {
    p.bus
        .map()
        .regions()
        .iter()
        .filter(|r| matches!(r.target, RegionTarget::Xaif { .. }))
        .map(|r| (r.base as u64 + r.size as u64).div_ceil(0x1000) * 0x1000)
        .max()
        .map_or(XAIF_BASE, |e| e as u32)
}

/// Builds and attaches the accelerator model of `spec`.
pub(crate) fn attach(
    p: &mut Platform,
    spec: &AcceleratorSpec,
    symbols: &BTreeMap<String, u32>,
) -> Result<usize, ConfigError> {
    let base = match &spec.base {
        Some(b) => eval_address(b, symbols).map_err(ConfigError::Invalid)?,
        None => next_free_base(p),
    };
    let model: Box<dyn Accelerator> = match &spec.kind {
        AcceleratorKind::Cgra { cycles_per_element, .. } => Box::new(Cgra::new(&spec.name, *cycles_per_element)),
        AcceleratorKind::Imc {
            size_bytes,
            row_words,
            mac_row_cycles,
        } => Box::new(Imc::new(&spec.name, *size_bytes, *row_words, *mac_row_cycles)),
    };
    let idx = p.attach(model, base)?;
    if let Some(prio) = spec.irq_priority {
        for id in p.accelerator_irqs(idx).to_vec() {
            p.plic.set_priority(id, prio)?;
        }
    }
    Ok(idx)
}

fn kernel_words(k: &super::KernelSpec, symbols: &BTreeMap<String, u32>) -> Result<Vec<u32>, ConfigError> {
    let lanes = k
        .lanes
        .iter()
        .map(|l| {
            Ok(LaneDesc {
                in_base: eval_address(&l.input, symbols).map_err(ConfigError::Invalid)?,
                in_words: l.in_words,
                in_elem_stride: l.elem_stride,
                in_word_stride: l.word_stride,
                out_base: eval_address(&l.output, symbols).map_err(ConfigError::Invalid)?,
                out_stride: l.out_stride,
                elem_count: l.elements,
                window_row_words: l.window_row_words,
                window_row_stride: l.window_row_stride,
            })
        })
        .collect::<Result<Vec<_>, ConfigError>>()?;
    Ok(KernelDescriptor {
        compute_cycles_per_element: k.cycles_per_element,
        lanes,
        weights: k.weights.clone(),
    }
    .to_words())
}

impl Scenario {
    /// Builds a fresh platform with accelerators, data and peripherals in
    /// place. Returns it with the resolved symbol table.
    pub fn instantiate(&self) -> Result<(Platform, BTreeMap<String, u32>), Error> {
        let mut p = Platform::new(self.platform.clone())?;
        let empty = BTreeMap::new();
        for a in &self.accelerators {
            attach(&mut p, a, &empty)?;
        }
        if self.trace {
            p.bus.enable_trace();
        }
        let symbols = resolve_symbols(&self.symbols, &p.symbols()).map_err(|errs| {
            Error::Config(ConfigError::invalid(
                errs.into_iter().map(|(k, e)| format!("{k}: {e}")).collect::<Vec<_>>().join("; "),
            ))
        })?;
        for a in &self.accelerators {
            if let AcceleratorKind::Cgra { kernel: Some(k), .. } = &a.kind {
                let ctx = symbols[&format!("{}.s1", a.name)];
                for (i, w) in kernel_words(k, &symbols)?.into_iter().enumerate() {
                    p.poke(ctx + 4 * i as u32, w)?;
                }
            }
        }
        for pl in &self.preloads {
            let addr = eval_address(&pl.address, &symbols).map_err(ConfigError::Invalid)?;
            for (k, w) in pl.words.iter().enumerate() {
                p.poke(addr.wrapping_add(4 * k as u32), *w)?;
            }
        }
        if let Some(a) = &self.adc {
            p.adc = Some(AdcStream::new(a.leads, a.rate_hz, a.depth, a.source.clone())?);
        }
        if let Some(f) = &self.flash {
            p.flash = Some(Flash::new(f.image.clone(), f.word_latency));
        }
        Ok((p, symbols))
    }

    fn begin_phase(&self, p: &mut Platform, ph: &PhaseSpec, symbols: &BTreeMap<String, u32>) -> Result<(), Error> {
        p.pm.begin_phase(&ph.name);
        p.set_operating_point(ph.op, ph.bypass)?;
        for (d, s) in &ph.power {
            let idx = p.domain_index(d)?;
            p.force_power(idx, *s)?;
        }
        if let Some(pr) = &ph.program {
            let mut prog = pr.program.clone();
            prog.resolve(symbols).map_err(|e| Error::Parse {
                path: pr.label.clone().into(),
                source: e,
            })?;
            if let Some((i, d)) = p.cpu_ports() {
                p.bus.reset_port(i);
                p.bus.reset_port(d);
            }
            p.load_program(Arc::new(prog))?;
        }
        if let Some(cpu) = &mut p.cpu {
            cpu.idle_state = ph.idle;
        }
        for t in &ph.traffic {
            for k in 0..t.copies {
                let mut table = symbols.clone();
                let bank = k % p.banks.len().max(1) as u32;
                table.insert("port.bank".into(), p.bus.map().address_of(bank, 0));
                let mut prog = t.program.program.clone();
                prog.resolve(&table).map_err(|e| Error::Parse {
                    path: t.program.label.clone().into(),
                    source: e,
                })?;
                let name = if t.copies > 1 { format!("{}{k}", t.name) } else { t.name.clone() };
                p.add_traffic(&name, Arc::new(prog));
            }
        }
        match ph.adc {
            Some(true) => {
                let clock = p.clock.clone();
                if let Some(a) = &mut p.adc {
                    a.enable(&clock);
                }
            }
            Some(false) => {
                if let Some(a) = &mut p.adc {
                    a.disable();
                }
            }
            None => {}
        }
        if let Some(d) = &ph.dma {
            let src = match &d.src {
                DmaSource::Fifo(id) => DmaEndpoint::Fifo { id: *id },
                DmaSource::Address(a) => DmaEndpoint::Memory {
                    address: eval_address(a, symbols).map_err(ConfigError::Invalid)?,
                },
            };
            let cfg = DmaConfig {
                src,
                dst: eval_address(&d.dst, symbols).map_err(ConfigError::Invalid)?,
                length_bytes: d.length_bytes,
                word_stride: d.word_stride,
            };
            p.dma.start(cfg).map_err(ConfigError::Invalid)?;
        }
        if let Some((period, periodic)) = ph.timer {
            p.timer.arm(period, periodic);
        }
        Ok(())
    }

    /// Runs all phases on a fresh platform.
    pub fn run(&self) -> Result<RunResult, Error> {
        self.run_inspect(|_, _| {})
    }

    /// Runs all phases, calling `inspect` after each one.
    pub fn run_inspect(&self, mut inspect: impl FnMut(&Platform, &PhaseSpec)) -> Result<RunResult, Error> {
        let (mut p, symbols) = self.instantiate()?;
        let mut records = Vec::with_capacity(self.phases.len());
        for ph in &self.phases {
            self.begin_phase(&mut p, ph, &symbols)?;
            let start_cycle = p.now();
            let wall0 = p.clock.wall_time();
            let op = p.op();
            let outcome = p.run_until(ph.stop, Some(ph.cycle_limit.unwrap_or(DEFAULT_CYCLE_LIMIT)))?;
            records.push(PhaseRecord {
                name: ph.name.clone(),
                voltage_v: op.voltage_v,
                frequency_hz: op.frequency_hz,
                bypass: p.fll.bypass(),
                start_cycle,
                cycles: outcome.cycles,
                wall_time_s: ratio_to_f64(p.clock.wall_time() - wall0),
                truncated: outcome.truncated,
            });
            inspect(&p, ph);
        }
        let report = EnergyReport::collect(&self.name, &mut p, records);
        Ok(RunResult {
            report,
            trace: p.bus.trace().map(|t| t.to_vec()),
            uart: p.uart.text(),
        })
    }
}
