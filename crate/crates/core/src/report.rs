//! Energy reports: per-domain, per-phase energy with cycle counts, bus and
//! master statistics. Exported as JSON (see `assets/schema`) and as a CSV
//! domain x phase matrix.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::cpu::CpuStats;
use crate::interconnect::BusStats;
use crate::kernel::SimEvent;
use crate::peripherals::adc::AdcStats;
use crate::peripherals::dma::DmaStats;
use crate::platform::Platform;
use crate::power::{DomainEnergy, DomainKind};

/// JSON schema the serialized report conforms to.
pub const REPORT_SCHEMA: &str = include_str!("../assets/schema/energy-report.schema.json");

/// One executed phase as seen by the runner.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseRecord {
    pub name: String,
    pub voltage_v: f64,
    pub frequency_hz: u64,
    pub bypass: bool,
    pub start_cycle: u64,
    pub cycles: u64,
    pub wall_time_s: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhaseReport {
    #[serde(flatten)]
    pub record: PhaseRecord,
    pub energy_j: f64,
    pub average_power_w: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DomainReport {
    pub name: String,
    pub kind: DomainKind,
    pub energy_j: f64,
    pub leakage_j: f64,
    pub dynamic_j: f64,
    /// Same order as `EnergyReport::phases`.
    pub phases: Vec<DomainEnergy>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusReport {
    #[serde(flatten)]
    pub stats: BusStats,
    pub utilization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub scenario: String,
    pub total_cycles: u64,
    pub wall_time_s: f64,
    pub total_energy_j: f64,
    pub average_power_w: f64,
    pub truncated: bool,
    pub faulted: bool,
    pub phases: Vec<PhaseReport>,
    pub domains: Vec<DomainReport>,
    pub bus: BusReport,
    pub cpu: Option<CpuStats>,
    /// `(cycle, interrupt id)` per CPU wake-up.
    pub wakeups: Vec<(u64, u32)>,
    pub dma: DmaStats,
    pub adc: Option<AdcStats>,
    pub accelerators: BTreeMap<String, serde_json::Value>,
    pub events: Vec<SimEvent>,
}

fn power(energy: f64, seconds: f64) -> f64 {
    if seconds > 0.0 {
        energy / seconds
    } else {
        0.0
    }
}

impl EnergyReport {
    /// Builds the report from a platform after its phases ran. `phases`
    /// must match the power manager's reporting phases one to one.
    pub fn collect(scenario: &str, p: &mut Platform, phases: Vec<PhaseRecord>) -> Self {
        let names: Vec<String> = p.pm.phases().to_vec();
        let matrix = p.pm.energy().to_vec();
        assert_eq!(names.len(), phases.len(), "phase records out of sync with the power manager");

        let domains: Vec<DomainReport> = p
            .pm
            .domains()
            .iter()
            .zip(matrix)
            .map(|(d, row)| {
                let leakage_j = row.iter().map(|e| e.leakage_j).sum();
                let dynamic_j = row.iter().map(|e| e.dynamic_j).sum();
                DomainReport {
                    name: d.name.clone(),
                    kind: d.kind,
                    energy_j: row.iter().map(DomainEnergy::total_j).sum(),
                    leakage_j,
                    dynamic_j,
                    phases: row,
                }
            })
            .collect();

        let phases: Vec<PhaseReport> = phases
            .into_iter()
            .enumerate()
            .map(|(i, record)| {
                let energy_j = domains.iter().map(|d| d.phases[i].total_j()).sum();
                PhaseReport {
                    average_power_w: power(energy_j, record.wall_time_s),
                    energy_j,
                    record,
                }
            })
            .collect();

        let total_energy_j: f64 = domains.iter().map(|d| d.energy_j).sum();
        let wall_time_s: f64 = phases.iter().map(|p| p.record.wall_time_s).sum();
        let accelerators = (0..p.accelerator_count())
            .map(|i| {
                let a = p.accelerator(i);
                (a.name().to_string(), a.stats())
            })
            .collect();

        EnergyReport {
            scenario: scenario.to_string(),
            total_cycles: phases.iter().map(|p| p.record.cycles).sum(),
            wall_time_s,
            total_energy_j,
            average_power_w: power(total_energy_j, wall_time_s),
            truncated: phases.iter().any(|p| p.record.truncated),
            faulted: p.events.iter().any(|e| e.kind.is_fault()),
            phases,
            domains,
            bus: BusReport {
                utilization: p.bus.stats.utilization(),
                stats: p.bus.stats.clone(),
            },
            cpu: p.cpu.as_ref().map(|c| c.stats.clone()),
            wakeups: p.cpu.as_ref().map(|c| c.wake_log.clone()).unwrap_or_default(),
            dma: p.dma.stats.clone(),
            adc: p.adc.as_ref().map(|a| a.stats.clone()),
            accelerators,
            events: p.events.clone(),
        }
    }

    pub fn phase(&self, name: &str) -> Option<&PhaseReport> {
        self.phases.iter().find(|p| p.record.name == name)
    }

    pub fn domain(&self, name: &str) -> Option<&DomainReport> {
        self.domains.iter().find(|d| d.name == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Domain x phase energy matrix in joules, followed by total, wall
    /// time and average power rows.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["domain".to_string()];
        header.extend(self.phases.iter().map(|p| format!("{}_j", p.record.name)));
        header.push("total_j".into());
        w.write_record(&header)?;
        for d in &self.domains {
            let mut row = vec![d.name.clone()];
            row.extend(d.phases.iter().map(|e| e.total_j().to_string()));
            row.push(d.energy_j.to_string());
            w.write_record(&row)?;
        }
        let mut row = vec!["total".to_string()];
        row.extend(self.phases.iter().map(|p| p.energy_j.to_string()));
        row.push(self.total_energy_j.to_string());
        w.write_record(&row)?;
        let mut row = vec!["wall_time_s".to_string()];
        row.extend(self.phases.iter().map(|p| p.record.wall_time_s.to_string()));
        row.push(self.wall_time_s.to_string());
        w.write_record(&row)?;
        let mut row = vec!["average_power_w".to_string()];
        row.extend(self.phases.iter().map(|p| p.average_power_w.to_string()));
        row.push(self.average_power_w.to_string());
        w.write_record(&row)?;
        w.flush()?;
        Ok(())
    }
}
