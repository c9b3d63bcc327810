//! Operating-point envelope and the FLL clock source.

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Frequency of the external reference used in FLL bypass.
pub const BYPASS_HZ: u64 = 32_768;

/// A (voltage, frequency) pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub voltage_v: f64,
    pub frequency_hz: u64,
}

/// Maximum frequency per supply voltage, linearly interpolated between
/// characterized points. Voltages outside the table are unsupported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    points: Vec<(f64, u64)>,
}

impl Envelope {
    pub fn new(mut points: Vec<(f64, u64)>) -> Result<Self, ConfigError> {
        if points.is_empty() {
            return Err(ConfigError::invalid("envelope needs at least one operating point"));
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in points.windows(2) {
            if w[1].0 == w[0].0 || w[1].1 < w[0].1 {
                return Err(ConfigError::invalid(
                    "envelope f_max must be strictly ordered and monotone in voltage",
                ));
            }
        }
        Ok(Envelope { points })
    }

    pub fn points(&self) -> &[(f64, u64)] {
        &self.points
    }

    pub fn voltage_range(&self) -> (f64, f64) {
        (self.points[0].0, self.points[self.points.len() - 1].0)
    }

    /// Highest supported frequency at `voltage_v`.
    pub fn f_max(&self, voltage_v: f64) -> Option<u64> {
        const EPS: f64 = 1e-9;
        let (lo, hi) = self.voltage_range();
        if voltage_v < lo - EPS || voltage_v > hi + EPS {
            return None;
        }
        let i = self.points.partition_point(|p| p.0 < voltage_v - EPS);
        if i < self.points.len() && (self.points[i].0 - voltage_v).abs() <= EPS {
            return Some(self.points[i].1);
        }
        let (v0, f0) = self.points[i - 1];
        let (v1, f1) = self.points[i];
        let t = (voltage_v - v0) / (v1 - v0);
        Some((f0 as f64 + t * (f1 as f64 - f0 as f64)).floor() as u64)
    }

    pub fn check(&self, op: OperatingPoint) -> Result<(), ConfigError> {
        let f_max = self
            .f_max(op.voltage_v)
            .ok_or(ConfigError::VoltageRange(op.voltage_v))?;
        if op.frequency_hz == 0 || op.frequency_hz > f_max {
            return Err(ConfigError::Envelope {
                frequency_hz: op.frequency_hz,
                voltage_v: op.voltage_v,
                f_max_hz: f_max,
            });
        }
        Ok(())
    }
}

/// FLL register offsets within its window.
pub mod regs {
    pub const FREQ_HZ: u32 = 0x0;
    pub const VOLTAGE_MV: u32 = 0x4;
    pub const BYPASS: u32 = 0x8;
    /// Bit 0: change pending. Bit 1: last request rejected.
    pub const STATUS: u32 = 0xC;
}

/// Programmable clock source. Accepted changes apply at the start of the
/// cycle after the write plus `lock_latency` cycles.
#[derive(Debug, Clone)]
pub struct Fll {
    /// Frequency synthesized when not bypassed.
    locked_hz: u64,
    voltage_v: f64,
    bypass: bool,
    pub lock_latency: u32,
    pending: Option<(u64, OperatingPoint, bool)>,
    last_rejected: bool,
    pub rejections: u64,
}

impl Fll {
    pub fn new(op: OperatingPoint, bypass: bool) -> Self {
        Fll {
            locked_hz: op.frequency_hz,
            voltage_v: op.voltage_v,
            bypass,
            lock_latency: 0,
            pending: None,
            last_rejected: false,
            rejections: 0,
        }
    }

    pub fn bypass(&self) -> bool {
        self.bypass
    }

    /// Output frequency and voltage currently driving the system.
    pub fn output(&self) -> OperatingPoint {
        OperatingPoint {
            voltage_v: self.voltage_v,
            frequency_hz: if self.bypass { BYPASS_HZ } else { self.locked_hz },
        }
    }

    fn target(&self) -> (OperatingPoint, bool) {
        match self.pending {
            Some((_, op, bypass)) => (op, bypass),
            None => (
                OperatingPoint {
                    voltage_v: self.voltage_v,
                    frequency_hz: self.locked_hz,
                },
                self.bypass,
            ),
        }
    }

    fn schedule(
        &mut self,
        now: u64,
        op: OperatingPoint,
        bypass: bool,
        envelope: &Envelope,
    ) -> Result<(), ConfigError> {
        let effective = OperatingPoint {
            voltage_v: op.voltage_v,
            frequency_hz: if bypass { BYPASS_HZ } else { op.frequency_hz },
        };
        let check = envelope.check(effective).and_then(|_| {
            // the synthesizer setting must stay legal even while bypassed
            envelope.check(op)
        });
        match check {
            Ok(()) => {
                self.last_rejected = false;
                self.pending = Some((now + 1 + self.lock_latency as u64, op, bypass));
                Ok(())
            }
            Err(e) => {
                self.last_rejected = true;
                self.rejections += 1;
                Err(e)
            }
        }
    }

    pub fn request_frequency(&mut self, now: u64, hz: u64, envelope: &Envelope) -> Result<(), ConfigError> {
        let (mut op, bypass) = self.target();
        op.frequency_hz = hz;
        self.schedule(now, op, bypass, envelope)
    }

    pub fn request_voltage(&mut self, now: u64, volts: f64, envelope: &Envelope) -> Result<(), ConfigError> {
        let (mut op, bypass) = self.target();
        op.voltage_v = volts;
        self.schedule(now, op, bypass, envelope)
    }

    pub fn request_bypass(&mut self, now: u64, bypass: bool, envelope: &Envelope) -> Result<(), ConfigError> {
        let (op, _) = self.target();
        self.schedule(now, op, bypass, envelope)
    }

    /// Applies an immediate change (phase boundaries, initial conditions).
    pub fn force(&mut self, op: OperatingPoint, bypass: bool) {
        self.locked_hz = op.frequency_hz;
        self.voltage_v = op.voltage_v;
        self.bypass = bypass;
        self.pending = None;
    }

    /// Called at the start of cycle `now`; true if the output changed.
    pub fn update(&mut self, now: u64) -> bool {
        match self.pending {
            Some((at, op, bypass)) if at <= now => {
                let before = self.output();
                self.locked_hz = op.frequency_hz;
                self.voltage_v = op.voltage_v;
                self.bypass = bypass;
                self.pending = None;
                self.output() != before
            }
            _ => false,
        }
    }

    pub fn mmio_read(&self, offset: u32) -> u32 {
        match offset {
            regs::FREQ_HZ => self.locked_hz.min(u32::MAX as u64) as u32,
            regs::VOLTAGE_MV => (self.voltage_v * 1000.0).round() as u32,
            regs::BYPASS => self.bypass as u32,
            regs::STATUS => self.pending.is_some() as u32 | (self.last_rejected as u32) << 1,
            _ => 0,
        }
    }

    pub fn mmio_write(&mut self, now: u64, offset: u32, value: u32, envelope: &Envelope) -> Result<(), ConfigError> {
        match offset {
            regs::FREQ_HZ => self.request_frequency(now, value as u64, envelope),
            regs::VOLTAGE_MV => self.request_voltage(now, value as f64 / 1000.0, envelope),
            regs::BYPASS => self.request_bypass(now, value & 1 != 0, envelope),
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env() -> Envelope {
        Envelope::new(vec![(0.8, 170_000_000), (1.2, 470_000_000)]).unwrap()
    }

    fn op(v: f64, f: u64) -> OperatingPoint {
        OperatingPoint {
            voltage_v: v,
            frequency_hz: f,
        }
    }

    #[test]
    fn envelope_endpoints_and_interpolation() {
        let e = env();
        assert_eq!(e.f_max(0.8), Some(170_000_000));
        assert_eq!(e.f_max(1.2), Some(470_000_000));
        assert_eq!(e.f_max(1.0), Some(320_000_000));
        assert_eq!(e.f_max(0.7), None);
        assert!(e.check(op(0.8, 170_000_000)).is_ok());
        assert!(matches!(e.check(op(0.8, 200_000_000)), Err(ConfigError::Envelope { .. })));
    }

    #[test]
    fn non_monotone_envelope_rejected() {
        assert!(Envelope::new(vec![(0.8, 200), (1.2, 100)]).is_err());
    }

    #[test]
    fn change_applies_next_cycle() {
        let e = env();
        let mut fll = Fll::new(op(0.8, 1_000_000), false);
        fll.request_frequency(5, 170_000_000, &e).unwrap();
        assert!(!fll.update(5));
        assert_eq!(fll.output().frequency_hz, 1_000_000);
        assert!(fll.update(6));
        assert_eq!(fll.output().frequency_hz, 170_000_000);
    }

    #[test]
    fn lock_latency_delays() {
        let e = env();
        let mut fll = Fll::new(op(0.8, 1_000_000), false);
        fll.lock_latency = 3;
        fll.request_frequency(0, 2_000_000, &e).unwrap();
        assert!(!fll.update(3));
        assert!(fll.update(4));
    }

    #[test]
    fn rejection_keeps_clock() {
        let e = env();
        let mut fll = Fll::new(op(0.8, 1_000_000), false);
        assert!(fll.mmio_write(0, regs::FREQ_HZ, 200_000_000, &e).is_err());
        assert_eq!(fll.mmio_read(regs::STATUS), 2);
        fll.update(1);
        assert_eq!(fll.output().frequency_hz, 1_000_000);
    }

    #[test]
    fn bypass_selects_reference() {
        let e = env();
        let mut fll = Fll::new(op(0.8, 1_000_000), false);
        fll.mmio_write(0, regs::BYPASS, 1, &e).unwrap();
        fll.update(1);
        assert_eq!(fll.output().frequency_hz, BYPASS_HZ);
        fll.request_bypass(1, false, &e).unwrap();
        fll.update(2);
        assert_eq!(fll.output().frequency_hz, 1_000_000);
    }

    #[test]
    fn lowering_voltage_below_current_frequency_is_rejected() {
        let e = env();
        let mut fll = Fll::new(op(1.2, 400_000_000), false);
        assert!(fll.request_voltage(0, 0.8, &e).is_err());
    }
}
