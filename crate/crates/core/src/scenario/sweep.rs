//! Design-space sweeps: one independent simulation per axis value, run in
//! parallel and merged in axis order.

use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::Scenario;
use crate::cpu::{CoreKind, CpuProfile, Microprogram};
use crate::error::{ConfigError, Error};
use crate::interconnect::{AddressingMode, BusStats, BusTopology};
use crate::kernel::StopCondition;
use crate::platform::{Platform, PlatformConfig};
use crate::power::fll::OperatingPoint;
use crate::units::{parse_hz, parse_quantity, Dimension};

/// Word width of every bus transaction.
pub const WORD_BITS: f64 = 32.0;

#[derive(Debug, Clone, PartialEq)]
pub enum SweepAxis {
    /// Number of master/bank pairs: replicas of every traffic master.
    Ports(Vec<u32>),
    Topology(Vec<BusTopology>),
    Addressing(Vec<AddressingMode>),
    BankCount(Vec<u32>),
    Cpu(Vec<CoreKind>),
    OperatingPoint(Vec<OperatingPoint>),
}

fn list<T>(values: &str, f: impl Fn(&str) -> Result<T, ConfigError>) -> Result<Vec<T>, ConfigError> {
    values.split(',').map(|v| f(v.trim())).collect()
}

/// `a..b` (inclusive) or a comma-separated list.
fn counts(values: &str) -> Result<Vec<u32>, ConfigError> {
    let bad = || ConfigError::invalid(format!("bad count list `{values}`"));
    if let Some((a, b)) = values.split_once("..") {
        let a: u32 = a.trim().parse().map_err(|_| bad())?;
        let b: u32 = b.trim().parse().map_err(|_| bad())?;
        return Ok((a..=b).collect());
    }
    list(values, |v| v.parse().map_err(|_| bad()))
}

impl SweepAxis {
    /// Parses `name=values`, for example `ports=1..8`,
    /// `topology=one-at-a-time,fully-connected` or `op=0.8 V@170 MHz`.
    pub fn parse(spec: &str) -> Result<Self, ConfigError> {
        let (name, values) = spec
            .split_once('=')
            .ok_or_else(|| ConfigError::invalid(format!("axis `{spec}` needs `name=values`")))?;
        let values = values.trim();
        if values.is_empty() {
            return Err(ConfigError::invalid(format!("axis `{name}` is empty")));
        }
        let unknown = |kind: &'static str| move |v: &str| ConfigError::Unknown { kind, name: v.to_string() };
        let axis = match name.trim() {
            "ports" => SweepAxis::Ports(counts(values)?),
            "banks" => SweepAxis::BankCount(counts(values)?),
            "topology" => SweepAxis::Topology(list(values, |v| BusTopology::parse(v).ok_or_else(|| unknown("topology")(v)))?),
            "addressing" => SweepAxis::Addressing(list(values, |v| {
                AddressingMode::parse(v).ok_or_else(|| unknown("addressing mode")(v))
            })?),
            "cpu" => SweepAxis::Cpu(list(values, |v| CoreKind::parse(v).ok_or_else(|| unknown("core")(v)))?),
            "op" => SweepAxis::OperatingPoint(list(values, |v| {
                let (volt, freq) = v
                    .split_once('@')
                    .ok_or_else(|| ConfigError::invalid(format!("operating point `{v}` needs `V@Hz`")))?;
                Ok(OperatingPoint {
                    voltage_v: parse_quantity(volt, Dimension::Voltage)?,
                    frequency_hz: parse_hz(freq)?,
                })
            })?),
            other => return Err(unknown("sweep axis")(other)),
        };
        if axis.is_empty() {
            return Err(ConfigError::invalid(format!("axis `{name}` is empty")));
        }
        Ok(axis)
    }

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::Ports(_) => "ports",
            SweepAxis::Topology(_) => "topology",
            SweepAxis::Addressing(_) => "addressing",
            SweepAxis::BankCount(_) => "banks",
            SweepAxis::Cpu(_) => "cpu",
            SweepAxis::OperatingPoint(_) => "op",
        }
    }

    pub fn len(&self) -> usize {
        match self {
            SweepAxis::Ports(v) | SweepAxis::BankCount(v) => v.len(),
            SweepAxis::Topology(v) => v.len(),
            SweepAxis::Addressing(v) => v.len(),
            SweepAxis::Cpu(v) => v.len(),
            SweepAxis::OperatingPoint(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The scenario of point `i` and its label.
    pub fn point(&self, base: &Scenario, i: usize) -> Result<(String, Scenario), ConfigError> {
        let mut s = base.clone();
        let label = match self {
            SweepAxis::Ports(v) => {
                let n = v[i];
                if n == 0 {
                    return Err(ConfigError::invalid("port count must be positive"));
                }
                for ph in &mut s.phases {
                    for t in &mut ph.traffic {
                        t.copies = n;
                    }
                }
                s.platform.bank_count = s.platform.bank_count.max(n);
                n.to_string()
            }
            SweepAxis::Topology(v) => {
                s.platform.topology = v[i];
                serde_json::to_value(v[i]).unwrap().as_str().unwrap().to_string()
            }
            SweepAxis::Addressing(v) => {
                s.platform.addressing = v[i];
                serde_json::to_value(v[i]).unwrap().as_str().unwrap().to_string()
            }
            SweepAxis::BankCount(v) => {
                s.platform.bank_count = v[i];
                v[i].to_string()
            }
            SweepAxis::Cpu(v) => {
                if s.platform.cpu.is_none() {
                    return Err(ConfigError::invalid("cpu axis on a platform without CPU"));
                }
                s.platform.cpu = Some(CpuProfile::new(v[i]));
                v[i].name().to_string()
            }
            SweepAxis::OperatingPoint(v) => {
                let op = v[i];
                s.platform.calibration.envelope.check(op)?;
                s.platform.operating_point = op;
                for ph in &mut s.phases {
                    ph.op = op;
                }
                format!("{} V@{} Hz", op.voltage_v, op.frequency_hz)
            }
        };
        Ok((label, s))
    }
}

/// Metrics of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub cycles: u64,
    pub wall_time_s: f64,
    pub energy_j: f64,
    pub average_power_w: f64,
    pub bus_grants: u64,
    pub bandwidth_bits_per_cycle: f64,
    pub truncated: bool,
    pub faulted: bool,
}

/// Sustained bandwidth: bits moved per cycle in which the bus granted
/// anything.
pub fn sustained_bandwidth(stats: &BusStats) -> f64 {
    let idle = stats.grants_histogram.first().copied().unwrap_or(0);
    let busy = stats.cycles - idle;
    if busy == 0 {
        0.0
    } else {
        WORD_BITS * stats.grants as f64 / busy as f64
    }
}

/// Runs every point of `axis` on `base`.
pub fn sweep(base: &Scenario, axis: &SweepAxis) -> Result<Vec<SweepRow>, Error> {
    if axis.is_empty() {
        return Err(ConfigError::invalid(format!("axis `{}` is empty", axis.name())).into());
    }
    (0..axis.len())
        .into_par_iter()
        .map(|i| {
            let (value, s) = axis.point(base, i)?;
            let r = s.run()?.report;
            Ok(SweepRow {
                axis: axis.name().to_string(),
                value,
                cycles: r.total_cycles,
                wall_time_s: r.wall_time_s,
                energy_j: r.total_energy_j,
                average_power_w: r.average_power_w,
                bus_grants: r.bus.stats.grants,
                bandwidth_bits_per_cycle: sustained_bandwidth(&r.bus.stats),
                truncated: r.truncated,
                faulted: r.faulted,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(out: W, rows: &[SweepRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Streams `words` words from `n` masters, each to its own bank, and
/// returns the sustained bus bandwidth in bits per cycle.
pub fn measure_peak_bandwidth(config: &PlatformConfig, n: u32) -> Result<f64, ConfigError> {
    if n == 0 {
        return Err(ConfigError::invalid("bandwidth needs at least one master port"));
    }
    let words = 256;
    let mut cfg = config.clone();
    cfg.cpu = None;
    cfg.bank_count = cfg.bank_count.max(n);
    let mut p = Platform::new(cfg)?;
    for k in 0..n {
        let base = p.bus.map().address_of(k, 0);
        let prog = Microprogram::parse(&format!("LOAD {base:#x}, {words}\nHALT"))
            .map_err(|e| ConfigError::invalid(e.to_string()))?;
        p.add_traffic(&format!("stream{k}"), Arc::new(prog));
    }
    p.run_until(StopCondition::AllHalted, Some(words as u64 * n as u64 * 4 + 64))?;
    Ok(sustained_bandwidth(&p.bus.stats))
}
