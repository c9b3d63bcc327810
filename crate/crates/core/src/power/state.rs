//! Gating state machine shared by every power domain, memory banks included.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PowerState {
    Active,
    ClockGated,
    Retention,
    Off,
}

impl PowerState {
    /// Restrictiveness rank; higher means less capable.
    fn rank(self) -> u8 {
        match self {
            PowerState::Active => 0,
            PowerState::ClockGated => 1,
            PowerState::Retention => 2,
            PowerState::Off => 3,
        }
    }

    pub fn more_restrictive(self, other: PowerState) -> PowerState {
        if self.rank() >= other.rank() {
            self
        } else {
            other
        }
    }

    /// Register encoding used by the power-manager MMIO block.
    pub fn code(self) -> u32 {
        self.rank() as u32
    }

    pub fn from_code(code: u32) -> Option<PowerState> {
        Some(match code {
            0 => PowerState::Active,
            1 => PowerState::ClockGated,
            2 => PowerState::Retention,
            3 => PowerState::Off,
            _ => return None,
        })
    }

    pub fn parse(s: &str) -> Option<PowerState> {
        Some(match s {
            "active" | "on" => PowerState::Active,
            "clock-gated" | "gated" => PowerState::ClockGated,
            "retention" => PowerState::Retention,
            "off" => PowerState::Off,
            _ => return None,
        })
    }
}

impl fmt::Display for PowerState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PowerState::Active => "active",
            PowerState::ClockGated => "clock-gated",
            PowerState::Retention => "retention",
            PowerState::Off => "off",
        })
    }
}

/// Transition latencies in cycles.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransitionLatencies {
    pub gate: u32,
    pub ungate: u32,
    pub retention_enter: u32,
    pub retention_exit: u32,
    pub power_off: u32,
    pub power_on: u32,
}

impl Default for TransitionLatencies {
    fn default() -> Self {
        TransitionLatencies {
            gate: 1,
            ungate: 1,
            retention_enter: 2,
            retention_exit: 2,
            power_off: 1,
            power_on: 10,
        }
    }
}

impl TransitionLatencies {
    /// Latency of `from -> to`, or an error for `off -> retention`.
    pub fn latency(&self, from: PowerState, to: PowerState) -> Result<u32, ConfigError> {
        use PowerState::*;
        Ok(match (from, to) {
            (a, b) if a == b => 0,
            (Off, Retention) => {
                return Err(ConfigError::IllegalTransition {
                    from: from.to_string(),
                    to: to.to_string(),
                })
            }
            (Off, _) => self.power_on,
            (_, Off) => self.power_off,
            (_, Retention) => self.retention_enter,
            (Retention, _) => self.retention_exit,
            (Active, ClockGated) => self.gate,
            (ClockGated, Active) => self.ungate,
            _ => unreachable!(),
        })
    }
}

/// Outcome of a completed transition, reported by [`PowerStateMachine::tick`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Completed {
    pub from: PowerState,
    pub to: PowerState,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PowerStateMachine {
    state: PowerState,
    pending: Option<(PowerState, u32)>,
}

impl PowerStateMachine {
    pub fn new(state: PowerState) -> Self {
        PowerStateMachine {
            state,
            pending: None,
        }
    }

    pub fn state(&self) -> PowerState {
        self.state
    }

    pub fn target(&self) -> PowerState {
        self.pending.map(|(t, _)| t).unwrap_or(self.state)
    }

    pub fn in_transition(&self) -> bool {
        self.pending.is_some()
    }

    /// State seen by the rest of the system: during a transition, the more
    /// restrictive of source and target.
    pub fn effective(&self) -> PowerState {
        match self.pending {
            Some((target, _)) => self.state.more_restrictive(target),
            None => self.state,
        }
    }

    /// Schedules a transition. A request made while another is in flight
    /// replaces it, starting from the committed state.
    pub fn request(
        &mut self,
        target: PowerState,
        latencies: &TransitionLatencies,
    ) -> Result<u32, ConfigError> {
        let latency = latencies.latency(self.state, target)?;
        if latency == 0 {
            self.pending = None;
        } else {
            self.pending = Some((target, latency));
        }
        Ok(latency)
    }

    /// Advances one cycle; returns the transition that completed, if any.
    pub fn tick(&mut self) -> Option<Completed> {
        let (target, remaining) = self.pending.as_mut()?;
        *remaining -= 1;
        if *remaining == 0 {
            let done = Completed {
                from: self.state,
                to: *target,
            };
            self.state = *target;
            self.pending = None;
            Some(done)
        } else {
            None
        }
    }

    /// Forces a state without latency (reset and scenario initial states).
    pub fn force(&mut self, state: PowerState) {
        self.state = state;
        self.pending = None;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use PowerState::*;

    #[test]
    fn default_latency_table() {
        let t = TransitionLatencies::default();
        assert_eq!(t.latency(Active, ClockGated).unwrap(), 1);
        assert_eq!(t.latency(ClockGated, Active).unwrap(), 1);
        assert_eq!(t.latency(Active, Retention).unwrap(), 2);
        assert_eq!(t.latency(Retention, Active).unwrap(), 2);
        assert_eq!(t.latency(Active, Off).unwrap(), 1);
        assert_eq!(t.latency(Off, Active).unwrap(), 10);
        assert_eq!(t.latency(Off, ClockGated).unwrap(), 10);
        assert_eq!(t.latency(Retention, ClockGated).unwrap(), 2);
        assert!(t.latency(Off, Retention).is_err());
        for s in [Active, ClockGated, Retention, Off] {
            assert_eq!(t.latency(s, s).unwrap(), 0);
        }
    }

    #[test]
    fn restrictive_state_during_transition() {
        let t = TransitionLatencies::default();
        let mut m = PowerStateMachine::new(Off);
        assert_eq!(m.request(Active, &t).unwrap(), 10);
        for _ in 0..9 {
            assert_eq!(m.effective(), Off);
            assert!(m.tick().is_none());
        }
        assert_eq!(
            m.tick(),
            Some(Completed {
                from: Off,
                to: Active
            })
        );
        assert_eq!(m.effective(), Active);
    }
}
