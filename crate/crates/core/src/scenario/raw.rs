//! Serde mirror of the scenario file. Quantities stay strings here and
//! are unit-checked during validation.

use std::collections::BTreeMap;

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawScenario {
    pub name: String,
    pub calibration: Option<String>,
    pub benchmark: Option<String>,
    #[serde(default)]
    pub platform: RawPlatform,
    #[serde(default, rename = "accelerator")]
    pub accelerators: Vec<RawAccelerator>,
    #[serde(default)]
    pub symbols: BTreeMap<String, String>,
    #[serde(default, rename = "preload")]
    pub preloads: Vec<RawPreload>,
    pub adc: Option<RawAdc>,
    pub flash: Option<RawFlash>,
    #[serde(default, rename = "phase")]
    pub phases: Vec<RawPhase>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPlatform {
    pub cpu: Option<String>,
    pub banks: Option<u32>,
    pub bank_size: Option<String>,
    pub addressing: Option<String>,
    pub topology: Option<String>,
    pub memory_base: Option<String>,
    pub code_base: Option<String>,
    pub peripheral_latency: Option<String>,
    pub flash_fetch_latency: Option<String>,
    pub voltage: Option<String>,
    pub frequency: Option<String>,
    pub fll_bypass: Option<bool>,
    pub fll_lock_latency: Option<String>,
    pub trace: Option<bool>,
    pub xaif: Option<RawXaif>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawXaif {
    pub slave_ports: Option<usize>,
    pub master_ports: Option<usize>,
    pub irq_lines: Option<usize>,
    pub power_domains: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAccelerator {
    pub name: String,
    pub kind: String,
    pub base: Option<String>,
    pub irq_priority: Option<u8>,
    /// CGRA: default compute cycles per element.
    pub cycles_per_element: Option<u32>,
    pub kernel: Option<RawKernel>,
    /// IMC: array size.
    pub size: Option<String>,
    pub row_words: Option<u32>,
    pub mac_row_cycles: Option<u32>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawKernel {
    #[serde(default)]
    pub cycles_per_element: u32,
    #[serde(default)]
    pub weights: Vec<u32>,
    #[serde(rename = "lane")]
    pub lanes: Vec<RawLane>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLane {
    pub input: String,
    pub in_words: u32,
    pub elem_stride: String,
    #[serde(default = "word_stride")]
    pub word_stride: String,
    pub output: String,
    #[serde(default = "word_stride")]
    pub out_stride: String,
    pub elements: u32,
    #[serde(default)]
    pub window_row_words: u16,
    pub window_row_stride: Option<String>,
}

fn word_stride() -> String {
    "4 B".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPreload {
    pub address: String,
    pub words: Option<Vec<u32>>,
    pub file: Option<String>,
    pub fill: Option<RawFill>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFill {
    pub count: u32,
    /// `index`, `constant` or `random`.
    pub pattern: String,
    #[serde(default)]
    pub value: u32,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawAdc {
    pub leads: u32,
    pub sample_rate: String,
    /// FIFO capacity in samples.
    pub fifo_depth: usize,
    #[serde(default)]
    pub source: RawSource,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawSource {
    pub kind: String,
    #[serde(default)]
    pub value: i16,
    #[serde(default)]
    pub amplitude: i16,
    pub frequency: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub path: Option<String>,
}

impl Default for RawSource {
    fn default() -> Self {
        RawSource {
            kind: "prbs".into(),
            value: 0,
            amplitude: 0,
            frequency: None,
            seed: 1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawFlash {
    pub image: Option<String>,
    pub size: Option<String>,
    pub word_latency: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPhase {
    pub name: String,
    pub voltage: Option<String>,
    pub frequency: Option<String>,
    pub bypass: Option<bool>,
    /// Path relative to the scenario file, or `benchmark:<phase>`.
    pub program: Option<String>,
    pub program_text: Option<String>,
    /// CPU state while in WFI: `clock-gated` or `off`.
    pub idle: Option<String>,
    #[serde(default)]
    pub power: BTreeMap<String, String>,
    #[serde(default)]
    pub traffic: Vec<RawTraffic>,
    /// `on` or `off`.
    pub adc: Option<String>,
    pub dma: Option<RawDma>,
    pub timer: Option<RawTimer>,
    #[serde(default)]
    pub stop: RawStop,
    pub cycle_limit: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTraffic {
    pub name: String,
    pub program: Option<String>,
    pub program_text: Option<String>,
    /// Replicas; copy `k` sees the symbol `port.bank` = base of bank `k`.
    #[serde(default = "one")]
    pub copies: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawDma {
    /// Address, or `adc` / `flash` for a FIFO source.
    pub src: String,
    pub dst: String,
    pub length: String,
    #[serde(default = "one")]
    pub word_stride: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawTimer {
    pub period: String,
    #[serde(default)]
    pub periodic: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum RawStop {
    Named(String),
    Cycles { cycles: String },
    WallTime { wall_time: String },
}

impl Default for RawStop {
    fn default() -> Self {
        RawStop::Named("all-halted".into())
    }
}
