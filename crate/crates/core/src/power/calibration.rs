//! Energy calibration table.
//!
//! A TOML file with explicit units on every physical value:
//!
//! ```toml
//! reference_voltage = "0.8 V"
//! dynamic_voltage_exponent = 2.0
//! leakage_voltage_exponent = 1.0
//! retention_leakage_factor = 0.575
//! always_on_essential_fraction = 0.35
//!
//! [[operating_point]]
//! voltage = "0.8 V"
//! f_max = "170 MHz"
//!
//! [domain.cpu]
//! leak = "24 uW"
//! clock = "3 pJ"        # per clocked cycle
//! activity = "20 pJ"    # per activity event
//!
//! [anchors]
//! acquisition-all-on = "384 uW"
//! ```
//!
//! Domain keys: `always-on`, `cpu`, `peripheral`, `bank` (applied to every
//! bank), and `<accelerator>.<domain>` for accelerator domains.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, Error};
use crate::power::fll::Envelope;
use crate::power::state::TransitionLatencies;
use crate::units::{parse_hz, parse_quantity, Dimension};

/// Shipped default calibration.
pub const DEFAULT_CALIBRATION: &str = include_str!("../../assets/calibration/default.toml");

/// Energy parameters of one power domain at the reference voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomainParams {
    pub leak_active_w: f64,
    pub leak_gated_w: f64,
    pub leak_retention_w: f64,
    /// Clock-tree energy per cycle while the domain is clocked.
    pub clock_j: f64,
    /// Energy per activity event (bus transaction or busy cycle).
    pub activity_j: f64,
}

impl DomainParams {
    pub fn zero() -> Self {
        DomainParams {
            leak_active_w: 0.0,
            leak_gated_w: 0.0,
            leak_retention_w: 0.0,
            clock_j: 0.0,
            activity_j: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CalibrationTable {
    pub reference_voltage_v: f64,
    pub dynamic_voltage_exponent: f64,
    pub leakage_voltage_exponent: f64,
    pub retention_leakage_factor: f64,
    pub always_on_essential_fraction: f64,
    #[serde(skip)]
    pub envelope: Envelope,
    #[serde(skip)]
    pub latencies: TransitionLatencies,
    pub domains: BTreeMap<String, DomainParams>,
    /// Free-form per-accelerator numeric parameters.
    pub accelerators: BTreeMap<String, BTreeMap<String, f64>>,
    /// Named reference powers in watts.
    pub anchors: BTreeMap<String, f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTable {
    reference_voltage: String,
    #[serde(default = "two")]
    dynamic_voltage_exponent: f64,
    #[serde(default = "one")]
    leakage_voltage_exponent: f64,
    #[serde(default = "retention_default")]
    retention_leakage_factor: f64,
    #[serde(default = "essential_default")]
    always_on_essential_fraction: f64,
    operating_point: Vec<RawPoint>,
    #[serde(default)]
    latencies: Option<RawLatencies>,
    #[serde(default)]
    domain: BTreeMap<String, RawDomain>,
    #[serde(default)]
    accelerator: BTreeMap<String, BTreeMap<String, f64>>,
    #[serde(default)]
    anchors: BTreeMap<String, String>,
}

fn two() -> f64 {
    2.0
}
fn one() -> f64 {
    1.0
}
fn retention_default() -> f64 {
    0.575
}
fn essential_default() -> f64 {
    0.35
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoint {
    voltage: String,
    f_max: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLatencies {
    gate: u32,
    ungate: u32,
    retention_enter: u32,
    retention_exit: u32,
    power_off: u32,
    power_on: u32,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDomain {
    leak: String,
    #[serde(default)]
    leak_gated: Option<String>,
    #[serde(default)]
    leak_retention: Option<String>,
    #[serde(default)]
    clock: Option<String>,
    #[serde(default)]
    activity: Option<String>,
}

fn ctx(key: &str, e: ConfigError) -> ConfigError {
    ConfigError::invalid(format!("{key}: {e}"))
}

impl CalibrationTable {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let raw: RawTable =
            toml::from_str(text).map_err(|e| ConfigError::invalid(format!("calibration: {e}")))?;
        let vref = parse_quantity(&raw.reference_voltage, Dimension::Voltage)
            .map_err(|e| ctx("reference_voltage", e))?;
        if !(0.0..1.0).contains(&raw.retention_leakage_factor) {
            return Err(ConfigError::invalid("retention_leakage_factor must be in [0, 1)"));
        }
        if !(0.0..=1.0).contains(&raw.always_on_essential_fraction) {
            return Err(ConfigError::invalid("always_on_essential_fraction must be in [0, 1]"));
        }
        let mut points = Vec::new();
        for (i, p) in raw.operating_point.iter().enumerate() {
            let key = format!("operating_point[{i}]");
            let v = parse_quantity(&p.voltage, Dimension::Voltage).map_err(|e| ctx(&key, e))?;
            let f = parse_hz(&p.f_max).map_err(|e| ctx(&key, e))?;
            points.push((v, f));
        }
        let envelope = Envelope::new(points)?;
        let latencies = raw
            .latencies
            .map(|l| TransitionLatencies {
                gate: l.gate,
                ungate: l.ungate,
                retention_enter: l.retention_enter,
                retention_exit: l.retention_exit,
                power_off: l.power_off,
                power_on: l.power_on,
            })
            .unwrap_or_default();
        let mut domains = BTreeMap::new();
        for (name, d) in &raw.domain {
            let key = format!("domain.{name}");
            let power = |s: &str| parse_quantity(s, Dimension::Power).map_err(|e| ctx(&key, e));
            let energy = |s: &Option<String>| match s {
                Some(s) => parse_quantity(s, Dimension::Energy).map_err(|e| ctx(&key, e)),
                None => Ok(0.0),
            };
            let leak = power(&d.leak)?;
            let params = DomainParams {
                leak_active_w: leak,
                leak_gated_w: d.leak_gated.as_deref().map(power).transpose()?.unwrap_or(leak),
                leak_retention_w: d
                    .leak_retention
                    .as_deref()
                    .map(power)
                    .transpose()?
                    .unwrap_or(leak * raw.retention_leakage_factor),
                clock_j: energy(&d.clock)?,
                activity_j: energy(&d.activity)?,
            };
            if params.leak_retention_w > params.leak_gated_w || params.leak_gated_w > params.leak_active_w {
                return Err(ConfigError::invalid(format!(
                    "{key}: leakage must satisfy retention < clock-gated <= active"
                )));
            }
            domains.insert(name.clone(), params);
        }
        for required in ["always-on", "cpu", "peripheral", "bank"] {
            if !domains.contains_key(required) {
                return Err(ConfigError::invalid(format!(
                    "calibration is missing domain `{required}`"
                )));
            }
        }
        let mut anchors = BTreeMap::new();
        for (name, p) in &raw.anchors {
            let w = parse_quantity(p, Dimension::Power).map_err(|e| ctx(&format!("anchors.{name}"), e))?;
            anchors.insert(name.clone(), w);
        }
        Ok(CalibrationTable {
            reference_voltage_v: vref,
            dynamic_voltage_exponent: raw.dynamic_voltage_exponent,
            leakage_voltage_exponent: raw.leakage_voltage_exponent,
            retention_leakage_factor: raw.retention_leakage_factor,
            always_on_essential_fraction: raw.always_on_essential_fraction,
            envelope,
            latencies,
            domains,
            accelerators: raw.accelerator,
            anchors,
        })
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Parameters for a domain key; unknown accelerator domains cost nothing.
    pub fn domain(&self, key: &str) -> DomainParams {
        self.domains.get(key).copied().unwrap_or_else(DomainParams::zero)
    }

    pub fn accelerator_param(&self, accel: &str, key: &str) -> Option<f64> {
        self.accelerators.get(accel).and_then(|m| m.get(key)).copied()
    }

    pub fn anchor(&self, name: &str) -> Option<f64> {
        self.anchors.get(name).copied()
    }
}

impl Default for CalibrationTable {
    fn default() -> Self {
        CalibrationTable::parse(DEFAULT_CALIBRATION).expect("shipped calibration parses")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_table_parses() {
        let t = CalibrationTable::default();
        assert_eq!(t.envelope.f_max(0.8), Some(170_000_000));
        assert_eq!(t.envelope.f_max(1.2), Some(470_000_000));
        let bank = t.domain("bank");
        assert!((bank.leak_retention_w / bank.leak_active_w - 0.575).abs() < 1e-12);
        assert!(t.anchor("acquisition-all-on").is_some());
    }

    #[test]
    fn bare_number_rejected() {
        let text = DEFAULT_CALIBRATION.replacen("reference_voltage = \"0.8 V\"", "reference_voltage = \"0.8\"", 1);
        assert!(CalibrationTable::parse(&text).is_err());
    }
}
