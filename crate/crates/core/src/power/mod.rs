//! Power domains, the power manager and energy accounting.
//!
//! Per cycle and domain the accumulated energy is
//!
//! ```text
//! E += leak(state) * (V/Vref)^a / f
//!    + [clocked] * (V/Vref)^b * scale * (clock + events * activity)
//! ```
//!
//! where `events` counts the bus transactions and busy cycles attributed to
//! the domain. Counters are integers per operating-point segment and turned
//! into joules only when the operating point or reporting phase changes, so
//! long runs cost a few increments per domain and cycle.

pub mod calibration;
pub mod fll;
pub mod state;

use serde::Serialize;

use crate::error::ConfigError;
use calibration::{CalibrationTable, DomainParams};
use fll::OperatingPoint;
use state::{Completed, PowerState, PowerStateMachine, TransitionLatencies};

/// What a domain powers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum DomainKind {
    /// Always-on logic other than peripherals (power manager, bus, debug).
    AlwaysOn,
    /// General-purpose peripherals inside the always-on domain.
    AlwaysOnPeripherals,
    Cpu,
    Peripheral,
    Bank { index: u16 },
    Accelerator { accel: u16, index: u16 },
}

/// Which gating controls a domain supports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Capabilities {
    pub clock_gate: bool,
    pub power_gate: bool,
    pub retention: bool,
}

impl Capabilities {
    pub const NONE: Capabilities = Capabilities {
        clock_gate: false,
        power_gate: false,
        retention: false,
    };
    pub const LOGIC: Capabilities = Capabilities {
        clock_gate: true,
        power_gate: true,
        retention: false,
    };
    pub const MEMORY: Capabilities = Capabilities {
        clock_gate: true,
        power_gate: true,
        retention: true,
    };

    pub fn allows(&self, state: PowerState) -> bool {
        match state {
            PowerState::Active => true,
            PowerState::ClockGated => self.clock_gate,
            PowerState::Retention => self.retention,
            PowerState::Off => self.power_gate,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Segment {
    state_cycles: [u64; 4],
    clocked: u64,
    events: u64,
}

/// Energy of one domain over one reporting phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct DomainEnergy {
    pub leakage_j: f64,
    pub dynamic_j: f64,
    /// Cycles spent in active, clock-gated, retention, off.
    pub cycles_by_state: [u64; 4],
    /// Activity events while clocked.
    pub events: u64,
}

impl DomainEnergy {
    pub fn total_j(&self) -> f64 {
        self.leakage_j + self.dynamic_j
    }
}

#[derive(Debug, Clone)]
pub struct PowerDomain {
    pub name: String,
    pub kind: DomainKind,
    pub params: DomainParams,
    pub capabilities: Capabilities,
    /// Multiplier on dynamic energy (CPU profile scale).
    pub dynamic_scale: f64,
    machine: PowerStateMachine,
    segment: Segment,
}

impl PowerDomain {
    pub fn state(&self) -> PowerState {
        self.machine.effective()
    }

    pub fn machine(&self) -> &PowerStateMachine {
        &self.machine
    }
}

#[derive(Debug, Clone)]
pub struct PowerManager {
    domains: Vec<PowerDomain>,
    latencies: TransitionLatencies,
    vref: f64,
    dyn_exp: f64,
    leak_exp: f64,
    op: OperatingPoint,
    phases: Vec<String>,
    /// `energy[domain][phase]`.
    energy: Vec<Vec<DomainEnergy>>,
    pub rejected: u64,
}

impl PowerManager {
    pub fn new(cal: &CalibrationTable, op: OperatingPoint) -> Self {
        PowerManager {
            domains: Vec::new(),
            latencies: cal.latencies,
            vref: cal.reference_voltage_v,
            dyn_exp: cal.dynamic_voltage_exponent,
            leak_exp: cal.leakage_voltage_exponent,
            op,
            phases: vec!["main".to_string()],
            energy: Vec::new(),
            rejected: 0,
        }
    }

    pub fn latencies(&self) -> &TransitionLatencies {
        &self.latencies
    }

    pub fn add_domain(
        &mut self,
        name: impl Into<String>,
        kind: DomainKind,
        params: DomainParams,
        capabilities: Capabilities,
    ) -> usize {
        self.domains.push(PowerDomain {
            name: name.into(),
            kind,
            params,
            capabilities,
            dynamic_scale: 1.0,
            machine: PowerStateMachine::new(PowerState::Active),
            segment: Segment::default(),
        });
        self.energy.push(vec![DomainEnergy::default(); self.phases.len()]);
        self.domains.len() - 1
    }

    pub fn domains(&self) -> &[PowerDomain] {
        &self.domains
    }

    pub fn domain_mut(&mut self, idx: usize) -> &mut PowerDomain {
        &mut self.domains[idx]
    }

    pub fn find(&self, name: &str) -> Result<usize, ConfigError> {
        self.domains
            .iter()
            .position(|d| d.name == name)
            .ok_or_else(|| ConfigError::Unknown {
                kind: "power domain",
                name: name.to_string(),
            })
    }

    pub fn state(&self, idx: usize) -> PowerState {
        self.domains[idx].machine.effective()
    }

    pub fn target(&self, idx: usize) -> PowerState {
        self.domains[idx].machine.target()
    }

    /// Checks a transition against the domain's capabilities.
    pub fn check(&self, idx: usize, to: PowerState) -> Result<(), ConfigError> {
        self.check_from(idx, self.domains[idx].machine.target(), to)
    }

    /// Same as [`check`](Self::check) for domains whose state machine
    /// lives elsewhere (memory banks).
    pub fn check_from(&self, idx: usize, from: PowerState, to: PowerState) -> Result<(), ConfigError> {
        let d = &self.domains[idx];
        let illegal = || ConfigError::IllegalTransition {
            from: format!("{}:{from}", d.name),
            to: to.to_string(),
        };
        if from == to {
            return Ok(());
        }
        if !d.capabilities.allows(to) || (from == PowerState::Off && to == PowerState::Retention) {
            return Err(illegal());
        }
        Ok(())
    }

    /// Schedules a transition of a domain whose state machine lives here.
    pub fn request(&mut self, idx: usize, to: PowerState) -> Result<u32, ConfigError> {
        if let Err(e) = self.check(idx, to) {
            self.rejected += 1;
            return Err(e);
        }
        let lat = self.latencies;
        self.domains[idx].machine.request(to, &lat)
    }

    /// Immediate state change for initial conditions.
    pub fn force(&mut self, idx: usize, to: PowerState) -> Result<(), ConfigError> {
        self.check(idx, to)?;
        self.domains[idx].machine.force(to);
        Ok(())
    }

    /// Advances all in-flight transitions; returns completions.
    pub fn tick(&mut self) -> Vec<(usize, Completed)> {
        let mut done = Vec::new();
        for (i, d) in self.domains.iter_mut().enumerate() {
            if let Some(c) = d.machine.tick() {
                done.push((i, c));
            }
        }
        done
    }

    /// Records one cycle of a domain in `state` with `events` activity.
    #[inline]
    pub fn account(&mut self, idx: usize, state: PowerState, events: u64) {
        let s = &mut self.domains[idx].segment;
        s.state_cycles[state as usize] += 1;
        if state == PowerState::Active {
            s.clocked += 1;
            s.events += events;
        }
    }

    fn flush(&mut self) {
        let phase = self.phases.len() - 1;
        let ratio = self.op.voltage_v / self.vref;
        let leak_scale = ratio.powf(self.leak_exp) / self.op.frequency_hz as f64;
        let dyn_scale = ratio.powf(self.dyn_exp);
        for (d, energy) in self.domains.iter_mut().zip(self.energy.iter_mut()) {
            let s = std::mem::take(&mut d.segment);
            let p = &d.params;
            let leak_w = [p.leak_active_w, p.leak_gated_w, p.leak_retention_w, 0.0];
            let e = &mut energy[phase];
            for k in 0..4 {
                if s.state_cycles[k] > 0 {
                    e.leakage_j += s.state_cycles[k] as f64 * leak_w[k] * leak_scale;
                    e.cycles_by_state[k] += s.state_cycles[k];
                }
            }
            e.events += s.events;
            e.dynamic_j += dyn_scale
                * d.dynamic_scale
                * (s.clocked as f64 * p.clock_j + s.events as f64 * p.activity_j);
        }
    }

    pub fn operating_point(&self) -> OperatingPoint {
        self.op
    }

    /// Switches the operating point used for subsequent cycles.
    pub fn set_operating_point(&mut self, op: OperatingPoint) {
        if op != self.op {
            self.flush();
            self.op = op;
        }
    }

    /// Starts a new reporting phase. The implicit first phase is renamed
    /// if nothing has been accounted yet.
    pub fn begin_phase(&mut self, name: &str) {
        self.flush();
        let untouched = self.phases.len() == 1
            && self
                .energy
                .iter()
                .all(|e| e[0].cycles_by_state.iter().sum::<u64>() == 0);
        if untouched {
            self.phases[0] = name.to_string();
            return;
        }
        self.phases.push(name.to_string());
        for e in &mut self.energy {
            e.push(DomainEnergy::default());
        }
    }

    pub fn phases(&self) -> &[String] {
        &self.phases
    }

    /// Energy matrix `[domain][phase]`, flushing pending counters first.
    pub fn energy(&mut self) -> &[Vec<DomainEnergy>] {
        self.flush();
        &self.energy
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pm(f: u64, v: f64) -> PowerManager {
        let cal = CalibrationTable::default();
        PowerManager::new(
            &cal,
            OperatingPoint {
                voltage_v: v,
                frequency_hz: f,
            },
        )
    }

    fn params() -> DomainParams {
        DomainParams {
            leak_active_w: 1e-6,
            leak_gated_w: 1e-6,
            leak_retention_w: 0.575e-6,
            clock_j: 1e-12,
            activity_j: 2e-12,
        }
    }

    #[test]
    fn leakage_and_dynamic_terms() {
        let mut p = pm(1_000_000, 0.8);
        let d = p.add_domain("x", DomainKind::Cpu, params(), Capabilities::MEMORY);
        for _ in 0..1000 {
            p.account(d, PowerState::Active, 1);
        }
        let e = p.energy()[d][0];
        // 1 ms at 1 uW, plus 1000 * (1 + 2) pJ
        assert!((e.leakage_j - 1e-9).abs() < 1e-21);
        assert!((e.dynamic_j - 3e-9).abs() < 1e-21);
    }

    #[test]
    fn gated_states_have_no_dynamic_energy() {
        let mut p = pm(1_000_000, 0.8);
        let d = p.add_domain("x", DomainKind::Cpu, params(), Capabilities::MEMORY);
        for s in [PowerState::ClockGated, PowerState::Retention, PowerState::Off] {
            p.account(d, s, 5);
        }
        let e = p.energy()[d][0];
        assert_eq!(e.dynamic_j, 0.0);
        assert!((e.leakage_j - (1.0 + 0.575) * 1e-12).abs() < 1e-24);
        assert_eq!(e.cycles_by_state, [0, 1, 1, 1]);
    }

    #[test]
    fn voltage_scaling() {
        let mut p = pm(1_000_000, 1.2);
        let d = p.add_domain("x", DomainKind::Cpu, params(), Capabilities::LOGIC);
        p.account(d, PowerState::Active, 0);
        let e = p.energy()[d][0];
        let r = 1.2 / 0.8;
        assert!((e.leakage_j - 1e-12 * r).abs() < 1e-24);
        assert!((e.dynamic_j - 1e-12 * r * r).abs() < 1e-24);
    }

    #[test]
    fn capabilities_enforced() {
        let mut p = pm(1_000_000, 0.8);
        let ao = p.add_domain("always-on", DomainKind::AlwaysOn, params(), Capabilities::NONE);
        let cpu = p.add_domain("cpu", DomainKind::Cpu, params(), Capabilities::LOGIC);
        assert!(p.request(ao, PowerState::Off).is_err());
        assert!(p.request(cpu, PowerState::Retention).is_err());
        assert_eq!(p.request(cpu, PowerState::ClockGated).unwrap(), 1);
        assert_eq!(p.rejected, 2);
    }

    #[test]
    fn phases_split_energy() {
        let mut p = pm(1_000_000, 0.8);
        let d = p.add_domain("x", DomainKind::Cpu, params(), Capabilities::LOGIC);
        p.begin_phase("a");
        p.account(d, PowerState::Active, 0);
        p.begin_phase("b");
        p.account(d, PowerState::Active, 0);
        p.account(d, PowerState::Active, 0);
        assert_eq!(p.phases(), ["a", "b"]);
        let e = p.energy();
        assert_eq!(e[d][0].cycles_by_state[0], 1);
        assert_eq!(e[d][1].cycles_by_state[0], 2);
    }
}
