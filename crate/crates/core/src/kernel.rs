//! Global time, simulation events and stop conditions.
//!
//! The per-cycle phase loop itself lives in [`crate::platform::Platform::step`]:
//!
//! 1. masters consume responses and issue requests,
//! 2. the interconnect arbitrates,
//! 3. slaves respond to this cycle's grants,
//! 4. interrupts propagate to the CPU,
//! 5. the power manager advances transitions,
//! 6. energy is accumulated.

use num_rational::Ratio;
use serde::Serialize;

use crate::error::ConfigError;

/// Cycle counter plus exact wall time across frequency changes.
#[derive(Debug, Clone)]
pub struct SimClock {
    cycle: u64,
    frequency_hz: u64,
    voltage_v: f64,
    segment_start: u64,
    /// Wall time at `segment_start`.
    segment_wall: Ratio<u128>,
}

impl SimClock {
    pub fn new(frequency_hz: u64, voltage_v: f64) -> Self {
        assert!(frequency_hz > 0);
        SimClock {
            cycle: 0,
            frequency_hz,
            voltage_v,
            segment_start: 0,
            segment_wall: Ratio::from_integer(0),
        }
    }

    pub fn cycle(&self) -> u64 {
        self.cycle
    }

    pub fn frequency_hz(&self) -> u64 {
        self.frequency_hz
    }

    pub fn voltage_v(&self) -> f64 {
        self.voltage_v
    }

    pub fn tick(&mut self) {
        self.cycle += 1;
    }

    /// Changes the clock for cycles from now on.
    pub fn set(&mut self, frequency_hz: u64, voltage_v: f64) {
        assert!(frequency_hz > 0);
        self.voltage_v = voltage_v;
        if frequency_hz == self.frequency_hz {
            return;
        }
        self.segment_wall = self.wall_time();
        self.segment_start = self.cycle;
        self.frequency_hz = frequency_hz;
    }

    /// Exact elapsed wall time in seconds after `cycle()` cycles.
    pub fn wall_time(&self) -> Ratio<u128> {
        self.segment_wall
            + Ratio::new(
                (self.cycle - self.segment_start) as u128,
                self.frequency_hz as u128,
            )
    }

    pub fn wall_seconds(&self) -> f64 {
        ratio_to_f64(self.wall_time())
    }

    /// First cycle `c >= cycle()` with wall time at `c` at least `t`,
    /// assuming the current frequency holds.
    pub fn cycle_at(&self, t: Ratio<u128>) -> u64 {
        if t <= self.segment_wall {
            return self.cycle;
        }
        let dt = (t - self.segment_wall) * Ratio::from_integer(self.frequency_hz as u128);
        let n = dt.ceil().to_integer() as u64;
        (self.segment_start + n).max(self.cycle)
    }
}

pub fn ratio_to_f64(r: Ratio<u128>) -> f64 {
    let whole = r.trunc().to_integer() as f64;
    let frac = r.fract();
    whole + *frac.numer() as f64 / *frac.denom() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Trap,
    BusFault,
    DmaError,
    AdcOverflow,
    AcceleratorError,
    PowerRejected,
    FrequencyRejected,
    CommandRejected,
    PhaseComplete,
}

impl EventKind {
    /// Events that make a run count as faulted.
    pub fn is_fault(self) -> bool {
        !matches!(self, EventKind::PhaseComplete | EventKind::AdcOverflow)
    }
}

/// Runtime occurrence recorded during simulation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SimEvent {
    pub cycle: u64,
    pub source: String,
    pub kind: EventKind,
    pub detail: String,
}

impl SimEvent {
    pub fn new(cycle: u64, source: &str, kind: EventKind, detail: impl Into<String>) -> Self {
        SimEvent {
            cycle,
            source: source.to_string(),
            kind,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum StopCondition {
    /// Every CPU and traffic master halted and all DMA channels idle.
    AllHalted,
    CycleLimit { cycles: u64 },
    /// Stop after a wall-time budget (used by acquisition phases).
    WallTime { nanoseconds: u64 },
}

impl StopCondition {
    pub fn cycle_limit(cycles: u64) -> Result<Self, ConfigError> {
        if cycles == 0 {
            return Err(ConfigError::ZeroCycleLimit);
        }
        Ok(StopCondition::CycleLimit { cycles })
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunOutcome {
    pub cycles: u64,
    pub truncated: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wall_time_is_exact_across_changes() {
        let mut c = SimClock::new(1_000_000, 0.8);
        for _ in 0..1_000 {
            c.tick();
        }
        c.set(170_000_000, 0.8);
        for _ in 0..170 {
            c.tick();
        }
        assert_eq!(c.wall_time(), Ratio::new(1_001, 1_000_000));
        c.set(32_768, 0.8);
        for _ in 0..32_768 {
            c.tick();
        }
        assert_eq!(c.wall_time(), Ratio::new(1_001, 1_000_000) + Ratio::from_integer(1));
    }

    #[test]
    fn cycle_at_rounds_up() {
        let mut c = SimClock::new(1_000_000, 0.8);
        c.tick();
        assert_eq!(c.cycle_at(Ratio::new(1, 256)), 3907);
        assert_eq!(c.cycle_at(Ratio::from_integer(0)), 1);
    }

    #[test]
    fn zero_cycle_limit_rejected() {
        assert_eq!(StopCondition::cycle_limit(0), Err(ConfigError::ZeroCycleLimit));
    }
}
