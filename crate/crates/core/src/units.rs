//! Physical quantities with mandatory units.
//!
//! Scenario and calibration files spell every physical value with its unit
//! (`"0.8 V"`, `"170 MHz"`, `"32 KiB"`, `"384 uW"`). A bare number where a
//! quantity is expected is rejected.

use std::fmt;

use crate::error::ConfigError;

/// Dimension of a parsed quantity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Voltage,
    Frequency,
    Power,
    Energy,
    Time,
    Bytes,
    Cycles,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Dimension::Voltage => "voltage (V)",
            Dimension::Frequency => "frequency (Hz)",
            Dimension::Power => "power (W)",
            Dimension::Energy => "energy (J)",
            Dimension::Time => "time (s)",
            Dimension::Bytes => "size (B)",
            Dimension::Cycles => "cycles",
        };
        f.write_str(s)
    }
}

fn si_prefix(p: &str) -> Option<f64> {
    Some(match p {
        "" => 1.0,
        "p" => 1e-12,
        "n" => 1e-9,
        "u" | "µ" | "μ" => 1e-6,
        "m" => 1e-3,
        "k" => 1e3,
        "M" => 1e6,
        "G" => 1e9,
        _ => return None,
    })
}

fn split_unit(unit: &str) -> Option<(f64, Dimension)> {
    match unit {
        "B" => return Some((1.0, Dimension::Bytes)),
        "KiB" => return Some((1024.0, Dimension::Bytes)),
        "MiB" => return Some((1024.0 * 1024.0, Dimension::Bytes)),
        "cycle" | "cycles" => return Some((1.0, Dimension::Cycles)),
        _ => {}
    }
    let (base, dim) = [
        ("Hz", Dimension::Frequency),
        ("V", Dimension::Voltage),
        ("W", Dimension::Power),
        ("J", Dimension::Energy),
        ("s", Dimension::Time),
    ]
    .into_iter()
    .find(|(suffix, _)| unit.ends_with(suffix))?;
    let prefix = &unit[..unit.len() - base.len()];
    Some((si_prefix(prefix)?, dim))
}

/// Parses `"<number> <unit>"` and checks the dimension. Returns the value in
/// base units (V, Hz, W, J, s, bytes, cycles).
pub fn parse_quantity(text: &str, expected: Dimension) -> Result<f64, ConfigError> {
    let text = text.trim();
    let split = text
        .find(|c: char| c.is_whitespace())
        .or_else(|| text.find(|c: char| c.is_alphabetic() || c == 'µ' || c == 'μ'));
    let Some(idx) = split else {
        return Err(ConfigError::MissingUnit {
            value: text.to_string(),
            expected,
        });
    };
    let (num, unit) = text.split_at(idx);
    let unit = unit.trim();
    let value: f64 = num.trim().parse().map_err(|_| ConfigError::BadQuantity {
        value: text.to_string(),
        reason: format!("`{}` is not a number", num.trim()),
    })?;
    let (scale, dim) = split_unit(unit).ok_or_else(|| ConfigError::BadQuantity {
        value: text.to_string(),
        reason: format!("unknown unit `{unit}`"),
    })?;
    if dim != expected {
        return Err(ConfigError::BadQuantity {
            value: text.to_string(),
            reason: format!("expected {expected}, found {dim}"),
        });
    }
    Ok(value * scale)
}

/// Parses a frequency that must be a whole number of hertz.
pub fn parse_hz(text: &str) -> Result<u64, ConfigError> {
    let hz = parse_quantity(text, Dimension::Frequency)?;
    let rounded = hz.round();
    if hz <= 0.0 || (hz - rounded).abs() > 1e-6 * hz.max(1.0) {
        return Err(ConfigError::BadQuantity {
            value: text.to_string(),
            reason: "frequency must be a positive whole number of Hz".into(),
        });
    }
    Ok(rounded as u64)
}

/// Parses a byte size that must be integral.
pub fn parse_bytes(text: &str) -> Result<u64, ConfigError> {
    let b = parse_quantity(text, Dimension::Bytes)?;
    if b < 0.0 || b.fract() != 0.0 {
        return Err(ConfigError::BadQuantity {
            value: text.to_string(),
            reason: "size must be a whole number of bytes".into(),
        });
    }
    Ok(b as u64)
}

/// Parses a cycle count.
pub fn parse_cycles(text: &str) -> Result<u64, ConfigError> {
    let c = parse_quantity(text, Dimension::Cycles)?;
    if c < 0.0 || c.fract() != 0.0 {
        return Err(ConfigError::BadQuantity {
            value: text.to_string(),
            reason: "cycle count must be a non-negative integer".into(),
        });
    }
    Ok(c as u64)
}

/// Parses a 32-bit address written as decimal or `0x` hex.
pub fn parse_address(text: &str) -> Result<u32, ConfigError> {
    let t = text.trim().replace('_', "");
    let parsed = if let Some(hex) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u32::from_str_radix(hex, 16)
    } else {
        t.parse()
    };
    parsed.map_err(|_| ConfigError::BadQuantity {
        value: text.to_string(),
        reason: "not a 32-bit address".into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_prefixed_units() {
        assert_eq!(parse_quantity("0.8 V", Dimension::Voltage).unwrap(), 0.8);
        assert_eq!(parse_hz("170 MHz").unwrap(), 170_000_000);
        assert_eq!(parse_hz("32768 Hz").unwrap(), 32_768);
        assert!((parse_quantity("384 uW", Dimension::Power).unwrap() - 384e-6).abs() < 1e-18);
        assert!((parse_quantity("8.17mW", Dimension::Power).unwrap() - 8.17e-3).abs() < 1e-15);
        assert_eq!(parse_bytes("32 KiB").unwrap(), 32768);
        assert_eq!(parse_cycles("10 cycles").unwrap(), 10);
        assert!((parse_quantity("2 pJ", Dimension::Energy).unwrap() - 2e-12).abs() < 1e-24);
    }

    #[test]
    fn rejects_missing_or_wrong_unit() {
        assert!(matches!(
            parse_quantity("0.8", Dimension::Voltage),
            Err(ConfigError::MissingUnit { .. })
        ));
        assert!(parse_quantity("0.8 Hz", Dimension::Voltage).is_err());
        assert!(parse_quantity("3 furlongs", Dimension::Time).is_err());
        assert!(parse_hz("0.5 Hz").is_err());
    }

    #[test]
    fn addresses() {
        assert_eq!(parse_address("0x2000_0000").unwrap(), 0x2000_0000);
        assert_eq!(parse_address("4096").unwrap(), 4096);
        assert!(parse_address("0x1_0000_0000").is_err());
    }
}
