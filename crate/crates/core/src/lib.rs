//! Cycle-driven simulator of a configurable RISC-V microcontroller platform
//! with bus, memory, power-domain and accelerator models and an energy
//! accounting model.

pub mod cpu;
pub mod error;
pub mod interconnect;
pub mod interrupt;
pub mod kernel;
pub mod memory;
pub mod peripherals;
pub mod platform;
pub mod power;
pub mod report;
pub mod scenario;
pub mod units;
pub mod xaif;

pub use error::{ConfigError, Error};
