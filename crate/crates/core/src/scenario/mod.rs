//! Scenario files: a declarative TOML description of a platform, its data
//! and an ordered list of phases. Every physical quantity carries a unit.
//!
//! ```toml
//! name = "example"
//! [platform]
//! cpu = "cv32e20"
//! banks = 8
//! bank_size = "32 KiB"
//! voltage = "0.8 V"
//! frequency = "1 MHz"
//!
//! [[phase]]
//! name = "main"
//! program = "programs/matmul16.mp"
//! stop = "all-halted"
//! ```

pub mod benchmark;
mod raw;
mod run;
pub mod sweep;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cpu::{CoreKind, CpuProfile, Microprogram};
use crate::error::{ConfigError, Error, ValidationIssue};
use crate::interconnect::{AddressingMode, BusTopology};
use crate::kernel::StopCondition;
use crate::peripherals::dma::{FIFO_ADC, FIFO_FLASH};
use crate::peripherals::SampleSource;
use crate::platform::PlatformConfig;
use crate::power::calibration::CalibrationTable;
use crate::power::fll::OperatingPoint;
use crate::power::state::PowerState;
use crate::units::{parse_address, parse_bytes, parse_cycles, parse_hz, parse_quantity, Dimension};
use crate::xaif::XaifCapacity;

pub use benchmark::{BenchmarkName, BenchmarkSpec};
pub use run::{RunResult, DEFAULT_CYCLE_LIMIT};

/// A microprogram with its origin, symbols still unresolved.
#[derive(Debug, Clone)]
pub struct ProgramSpec {
    pub label: String,
    pub program: Microprogram,
}

#[derive(Debug, Clone)]
pub struct TrafficSpec {
    pub name: String,
    pub program: ProgramSpec,
    pub copies: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DmaSource {
    Fifo(u8),
    Address(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DmaSpec {
    pub src: DmaSource,
    pub dst: String,
    pub length_bytes: u32,
    pub word_stride: u32,
}

#[derive(Debug, Clone)]
pub struct PhaseSpec {
    pub name: String,
    pub op: OperatingPoint,
    pub bypass: bool,
    pub program: Option<ProgramSpec>,
    pub traffic: Vec<TrafficSpec>,
    pub idle: PowerState,
    /// Domain states applied at the start of the phase, in file order.
    pub power: Vec<(String, PowerState)>,
    pub adc: Option<bool>,
    pub dma: Option<DmaSpec>,
    pub timer: Option<(u64, bool)>,
    pub stop: StopCondition,
    pub cycle_limit: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LaneSpec {
    pub input: String,
    pub in_words: u32,
    pub elem_stride: u32,
    pub word_stride: u32,
    pub output: String,
    pub out_stride: u32,
    pub elements: u32,
    pub window_row_words: u16,
    pub window_row_stride: u16,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub cycles_per_element: u32,
    pub weights: Vec<u32>,
    pub lanes: Vec<LaneSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AcceleratorKind {
    Cgra {
        cycles_per_element: u32,
        kernel: Option<KernelSpec>,
    },
    Imc {
        size_bytes: u32,
        row_words: u32,
        mac_row_cycles: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AcceleratorSpec {
    pub name: String,
    pub kind: AcceleratorKind,
    pub base: Option<String>,
    pub irq_priority: Option<u8>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preload {
    pub address: String,
    pub words: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdcSpec {
    pub leads: u32,
    pub rate_hz: u32,
    pub depth: usize,
    pub source: SampleSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlashSpec {
    pub image: Vec<u32>,
    pub word_latency: u32,
}

/// A validated scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub base_dir: PathBuf,
    pub platform: PlatformConfig,
    pub trace: bool,
    pub benchmark: Option<BenchmarkSpec>,
    pub accelerators: Vec<AcceleratorSpec>,
    /// User symbols as address expressions, resolved per instance.
    pub symbols: BTreeMap<String, String>,
    pub preloads: Vec<Preload>,
    pub adc: Option<AdcSpec>,
    pub flash: Option<FlashSpec>,
    pub phases: Vec<PhaseSpec>,
}

/// Collects validation issues with their locations.
#[derive(Default)]
struct Issues(Vec<ValidationIssue>);

impl Issues {
    fn push(&mut self, location: impl Into<String>, message: impl ToString) {
        self.0.push(ValidationIssue {
            location: location.into(),
            message: message.to_string(),
        });
    }

    /// Records the error of `r` and returns its value if any.
    fn take<T, E: ToString>(&mut self, location: &str, r: Result<T, E>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.push(location, e);
                None
            }
        }
    }
}

/// Evaluates `a + b + ...` where terms are integers or symbols.
pub fn eval_address(expr: &str, symbols: &BTreeMap<String, u32>) -> Result<u32, String> {
    let mut total: u32 = 0;
    for term in expr.split('+') {
        let t = term.trim();
        let v = if t.starts_with(|c: char| c.is_ascii_digit()) {
            parse_address(t).map_err(|e| e.to_string())?
        } else {
            *symbols.get(t).ok_or_else(|| format!("unknown symbol `{t}`"))?
        };
        total = total.wrapping_add(v);
    }
    Ok(total)
}

/// Resolves user symbols against `builtin`, allowing references between
/// user symbols. Returns the merged table.
pub fn resolve_symbols(
    user: &BTreeMap<String, String>,
    builtin: &BTreeMap<String, u32>,
) -> Result<BTreeMap<String, u32>, Vec<(String, String)>> {
    let mut table = builtin.clone();
    let mut todo: Vec<(&String, &String)> = user.iter().collect();
    loop {
        let before = todo.len();
        todo.retain(|(k, v)| match eval_address(v, &table) {
            Ok(a) => {
                table.insert((*k).clone(), a);
                false
            }
            Err(_) => true,
        });
        if todo.is_empty() {
            return Ok(table);
        }
        if todo.len() == before {
            return Err(todo
                .iter()
                .map(|(k, v)| ((*k).clone(), eval_address(v, &table).unwrap_err()))
                .collect());
        }
    }
}

fn read_words(path: &Path) -> Result<Vec<u32>, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(bytes
        .chunks(4)
        .map(|c| {
            let mut w = [0u8; 4];
            w[..c.len()].copy_from_slice(c);
            u32::from_le_bytes(w)
        })
        .collect())
}

fn fill_words(fill: &raw::RawFill) -> Result<Vec<u32>, String> {
    Ok(match fill.pattern.as_str() {
        "index" => (0..fill.count).map(|i| fill.value.wrapping_add(i)).collect(),
        "constant" => vec![fill.value; fill.count as usize],
        "random" => {
            let mut rng = ChaCha8Rng::seed_from_u64(fill.seed);
            (0..fill.count).map(|_| rng.gen()).collect()
        }
        other => return Err(format!("unknown fill pattern `{other}`")),
    })
}

fn op_from(
    issues: &mut Issues,
    loc: &str,
    voltage: Option<&String>,
    frequency: Option<&String>,
    default: OperatingPoint,
) -> OperatingPoint {
    let voltage_v = voltage
        .and_then(|v| issues.take(&format!("{loc}.voltage"), parse_quantity(v, Dimension::Voltage)))
        .unwrap_or(default.voltage_v);
    let frequency_hz = frequency
        .and_then(|f| issues.take(&format!("{loc}.frequency"), parse_hz(f)))
        .unwrap_or(default.frequency_hz);
    OperatingPoint {
        voltage_v,
        frequency_hz,
    }
}

fn u32_of(issues: &mut Issues, loc: &str, v: u64) -> Option<u32> {
    match u32::try_from(v) {
        Ok(v) => Some(v),
        Err(_) => {
            issues.push(loc, format!("{v} does not fit in 32 bits"));
            None
        }
    }
}

impl Scenario {
    /// Reads and validates a scenario file.
    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })
    }

    /// Parses and validates scenario text; relative paths resolve against
    /// `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, Error> {
        let raw: raw::RawScenario = toml::from_str(text).map_err(|e| Error::Format {
            path: PathBuf::from("<scenario>"),
            message: e.to_string(),
        })?;
        Self::validate(raw, base_dir, None)
    }

    /// Same as [`parse`](Self::parse) with an explicit calibration table
    /// taking precedence over the file's.
    pub fn parse_with_calibration(text: &str, base_dir: &Path, cal: Arc<CalibrationTable>) -> Result<Self, Error> {
        let raw: raw::RawScenario = toml::from_str(text).map_err(|e| Error::Format {
            path: PathBuf::from("<scenario>"),
            message: e.to_string(),
        })?;
        Self::validate(raw, base_dir, Some(cal))
    }

    /// Loads with a calibration override.
    pub fn load_with_calibration(path: &Path, cal: Arc<CalibrationTable>) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse_with_calibration(&text, &base, cal)
    }

    fn validate(raw: raw::RawScenario, base: &Path, cal_override: Option<Arc<CalibrationTable>>) -> Result<Self, Error> {
        let mut is = Issues::default();
        let rel = |p: &str| base.join(p);

        let calibration = match (cal_override, &raw.calibration) {
            (Some(c), _) => c,
            (None, Some(p)) => match CalibrationTable::load(&rel(p)) {
                Ok(c) => Arc::new(c),
                Err(e) => {
                    is.push("calibration", e);
                    Arc::new(CalibrationTable::default())
                }
            },
            (None, None) => Arc::new(CalibrationTable::default()),
        };

        let benchmark = raw.benchmark.as_ref().and_then(|b| {
            let r = BenchmarkSpec::parse(b).ok_or_else(|| format!("unknown benchmark `{b}`"));
            is.take("benchmark", r)
        });

        let platform = Self::platform_config(&mut is, &raw.platform, calibration);
        let accelerators = Self::accelerators(&mut is, &raw.accelerators, &platform.calibration);

        let preloads = raw
            .preloads
            .iter()
            .enumerate()
            .filter_map(|(i, p)| {
                let loc = format!("preload[{i}]");
                let words = match (&p.words, &p.file, &p.fill) {
                    (Some(w), None, None) => Ok(w.clone()),
                    (None, Some(f), None) => read_words(&rel(f)).map_err(|e| e.to_string()),
                    (None, None, Some(fill)) => fill_words(fill),
                    _ => Err("exactly one of `words`, `file`, `fill` is required".to_string()),
                };
                let words = is.take(&loc, words)?;
                Some(Preload {
                    address: p.address.clone(),
                    words,
                })
            })
            .collect();

        let adc = raw.adc.as_ref().and_then(|a| {
            let rate = is.take("adc.sample_rate", parse_hz(&a.sample_rate));
            let s = &a.source;
            let source = match s.kind.as_str() {
                "constant" => Some(SampleSource::Constant(s.value)),
                "prbs" => Some(SampleSource::Prbs { seed: s.seed }),
                "sine" => {
                    let f = s
                        .frequency
                        .as_deref()
                        .ok_or_else(|| "sine source needs `frequency`".to_string())
                        .and_then(|f| parse_quantity(f, Dimension::Frequency).map_err(|e| e.to_string()));
                    is.take("adc.source.frequency", f).map(|frequency_hz| SampleSource::Sine {
                        amplitude: s.amplitude,
                        frequency_hz,
                    })
                }
                "trace" => match &s.path {
                    Some(p) => is.take("adc.source.path", SampleSource::from_csv(&rel(p), a.leads)),
                    None => {
                        is.push("adc.source", "trace source needs `path`");
                        None
                    }
                },
                other => {
                    is.push("adc.source.kind", format!("unknown sample source `{other}`"));
                    None
                }
            };
            let rate_hz = u32_of(&mut is, "adc.sample_rate", rate?)?;
            let spec = AdcSpec {
                leads: a.leads,
                rate_hz,
                depth: a.fifo_depth,
                source: source?,
            };
            is.take(
                "adc",
                crate::peripherals::AdcStream::new(spec.leads, spec.rate_hz, spec.depth, spec.source.clone()),
            )?;
            Some(spec)
        });

        let flash = raw.flash.as_ref().and_then(|f| {
            let image = match (&f.image, &f.size) {
                (Some(p), None) => is.take("flash.image", read_words(&rel(p))),
                (None, Some(s)) => is.take("flash.size", parse_bytes(s)).map(|b| vec![0; (b / 4) as usize]),
                _ => {
                    is.push("flash", "exactly one of `image`, `size` is required");
                    None
                }
            };
            let word_latency = match &f.word_latency {
                Some(l) => is.take("flash.word_latency", parse_cycles(l)).and_then(|l| u32_of(&mut is, "flash.word_latency", l)),
                None => Some(0),
            };
            Some(FlashSpec {
                image: image?,
                word_latency: word_latency?,
            })
        });

        let phases: Vec<PhaseSpec> = raw
            .phases
            .iter()
            .enumerate()
            .filter_map(|(i, p)| Self::phase(&mut is, i, p, &platform, benchmark.as_ref(), &raw, base))
            .collect();
        if raw.phases.is_empty() {
            is.push("phase", "a scenario needs at least one phase");
        }

        let scenario = Scenario {
            name: raw.name.clone(),
            base_dir: base.to_path_buf(),
            trace: raw.platform.trace.unwrap_or(false),
            platform,
            benchmark,
            accelerators,
            symbols: raw.symbols.clone(),
            preloads,
            adc,
            flash,
            phases,
        };

        if is.0.is_empty() {
            scenario.check_instance(&mut is);
        }
        if is.0.is_empty() {
            Ok(scenario)
        } else {
            Err(Error::Validation(is.0))
        }
    }

    fn platform_config(is: &mut Issues, p: &raw::RawPlatform, calibration: Arc<CalibrationTable>) -> PlatformConfig {
        let mut c = PlatformConfig {
            calibration,
            ..PlatformConfig::default()
        };
        if let Some(cpu) = &p.cpu {
            if cpu == "none" {
                c.cpu = None;
            } else {
                let kind = CoreKind::parse(cpu).ok_or_else(|| format!("unknown core `{cpu}`"));
                if let Some(k) = is.take("platform.cpu", kind) {
                    c.cpu = Some(CpuProfile::new(k));
                }
            }
        }
        if let Some(b) = p.banks {
            c.bank_count = b;
        }
        if let Some(s) = &p.bank_size {
            if let Some(b) = is.take("platform.bank_size", parse_bytes(s)) {
                c.bank_size = u32_of(is, "platform.bank_size", b).unwrap_or(c.bank_size);
            }
        }
        if let Some(a) = &p.addressing {
            let r = AddressingMode::parse(a).ok_or_else(|| format!("unknown addressing mode `{a}`"));
            if let Some(a) = is.take("platform.addressing", r) {
                c.addressing = a;
            }
        }
        if let Some(t) = &p.topology {
            let r = BusTopology::parse(t).ok_or_else(|| format!("unknown topology `{t}`"));
            if let Some(t) = is.take("platform.topology", r) {
                c.topology = t;
            }
        }
        if let Some(a) = &p.memory_base {
            c.memory_base = is.take("platform.memory_base", parse_address(a)).unwrap_or(0);
        }
        if let Some(a) = &p.code_base {
            c.code_base = is.take("platform.code_base", parse_address(a)).unwrap_or(0);
        }
        let cycles = |is: &mut Issues, loc: &str, v: &Option<String>, d: u32| match v {
            Some(v) => is
                .take(loc, parse_cycles(v))
                .and_then(|c| u32_of(is, loc, c))
                .unwrap_or(d),
            None => d,
        };
        c.peripheral_latency = cycles(is, "platform.peripheral_latency", &p.peripheral_latency, c.peripheral_latency);
        c.flash_fetch_latency = cycles(is, "platform.flash_fetch_latency", &p.flash_fetch_latency, c.flash_fetch_latency);
        c.fll_lock_latency = cycles(is, "platform.fll_lock_latency", &p.fll_lock_latency, c.fll_lock_latency);
        c.fll_bypass = p.fll_bypass.unwrap_or(false);
        c.operating_point = op_from(is, "platform", p.voltage.as_ref(), p.frequency.as_ref(), c.operating_point);
        if let Err(e) = c.calibration.envelope.check(c.operating_point) {
            is.push("platform.frequency", e);
        }
        if let Some(x) = &p.xaif {
            let d = c.xaif;
            c.xaif = XaifCapacity {
                slave_ports: x.slave_ports.unwrap_or(d.slave_ports),
                master_ports: x.master_ports.unwrap_or(d.master_ports),
                irq_lines: x.irq_lines.unwrap_or(d.irq_lines),
                power_domains: x.power_domains.unwrap_or(d.power_domains),
            };
        }
        c
    }

    fn accelerators(is: &mut Issues, raw: &[raw::RawAccelerator], cal: &CalibrationTable) -> Vec<AcceleratorSpec> {
        raw.iter()
            .enumerate()
            .filter_map(|(i, a)| {
                let loc = format!("accelerator[{i}] ({})", a.name);
                let kind = match a.kind.as_str() {
                    "cgra" => {
                        let cpe = a
                            .cycles_per_element
                            .or_else(|| cal.accelerator_param("cgra", "compute_cycles_per_element").map(|v| v as u32))
                            .unwrap_or(1);
                        let kernel = a.kernel.as_ref().and_then(|k| Self::kernel(is, &loc, k));
                        if a.kernel.is_some() && kernel.is_none() {
                            return None;
                        }
                        AcceleratorKind::Cgra {
                            cycles_per_element: cpe,
                            kernel,
                        }
                    }
                    "imc" => {
                        let size = match &a.size {
                            Some(s) => is.take(&format!("{loc}.size"), parse_bytes(s))? as u32,
                            None => 32 * 1024,
                        };
                        let row_words = a.row_words.unwrap_or(16);
                        if row_words == 0 || size % (4 * row_words) != 0 {
                            is.push(&loc, "array size must hold whole rows");
                            return None;
                        }
                        AcceleratorKind::Imc {
                            size_bytes: size,
                            row_words,
                            mac_row_cycles: a
                                .mac_row_cycles
                                .or_else(|| cal.accelerator_param("imc", "mac_row_cycles").map(|v| v as u32))
                                .unwrap_or(1),
                        }
                    }
                    other => {
                        is.push(format!("{loc}.kind"), format!("unknown accelerator kind `{other}`"));
                        return None;
                    }
                };
                Some(AcceleratorSpec {
                    name: a.name.clone(),
                    kind,
                    base: a.base.clone(),
                    irq_priority: a.irq_priority,
                })
            })
            .collect()
    }

    fn kernel(is: &mut Issues, loc: &str, k: &raw::RawKernel) -> Option<KernelSpec> {
        if k.lanes.is_empty() || k.lanes.len() > crate::xaif::cgra::LANES {
            is.push(format!("{loc}.kernel"), format!("lane count {} out of range", k.lanes.len()));
            return None;
        }
        let mut ok = true;
        let mut stride = |is: &mut Issues, l: &str, v: &str| -> u32 {
            match is.take(l, parse_bytes(v)) {
                Some(b) => b as u32,
                None => {
                    ok = false;
                    0
                }
            }
        };
        let lanes = k
            .lanes
            .iter()
            .enumerate()
            .map(|(j, l)| {
                let ll = format!("{loc}.kernel.lane[{j}]");
                LaneSpec {
                    input: l.input.clone(),
                    in_words: l.in_words,
                    elem_stride: stride(is, &format!("{ll}.elem_stride"), &l.elem_stride),
                    word_stride: stride(is, &format!("{ll}.word_stride"), &l.word_stride),
                    output: l.output.clone(),
                    out_stride: stride(is, &format!("{ll}.out_stride"), &l.out_stride),
                    elements: l.elements,
                    window_row_words: l.window_row_words,
                    window_row_stride: l
                        .window_row_stride
                        .as_deref()
                        .map(|s| stride(is, &format!("{ll}.window_row_stride"), s) as u16)
                        .unwrap_or(0),
                }
            })
            .collect();
        ok.then_some(KernelSpec {
            cycles_per_element: k.cycles_per_element,
            weights: k.weights.clone(),
            lanes,
        })
    }

    fn program(
        is: &mut Issues,
        loc: &str,
        path: Option<&String>,
        text: Option<&String>,
        benchmark: Option<&BenchmarkSpec>,
        raw: &raw::RawScenario,
        base: &Path,
    ) -> Option<ProgramSpec> {
        let (label, source) = match (path, text) {
            (Some(p), None) => {
                if let Some(which) = p.strip_prefix("benchmark:") {
                    let Some(b) = benchmark else {
                        is.push(loc, format!("`{p}` needs a `benchmark`"));
                        return None;
                    };
                    let src = match which {
                        "acquisition" => {
                            let input = raw.symbols.get("input").and_then(|s| parse_address(s).ok());
                            let Some(input) = input else {
                                is.push(loc, "benchmark acquisition needs a literal `input` symbol");
                                return None;
                            };
                            b.acquisition_program(input)
                        }
                        "processing" => b.processing_program(),
                        other => {
                            is.push(loc, format!("unknown benchmark program `{other}`"));
                            return None;
                        }
                    };
                    (p.clone(), src)
                } else {
                    let full = base.join(p);
                    match std::fs::read_to_string(&full) {
                        Ok(s) => (p.clone(), s),
                        Err(e) => {
                            is.push(loc, format!("{}: {e}", full.display()));
                            return None;
                        }
                    }
                }
            }
            (None, Some(t)) => (format!("{loc}.program_text"), t.clone()),
            (None, None) => return None,
            (Some(_), Some(_)) => {
                is.push(loc, "`program` and `program_text` are exclusive");
                return None;
            }
        };
        match Microprogram::parse(&source) {
            Ok(program) => Some(ProgramSpec { label, program }),
            Err(e) => {
                is.push(format!("{label}:{}:{}", e.line, e.col), e.message);
                None
            }
        }
    }

    fn phase(
        is: &mut Issues,
        i: usize,
        p: &raw::RawPhase,
        platform: &PlatformConfig,
        benchmark: Option<&BenchmarkSpec>,
        raw: &raw::RawScenario,
        base: &Path,
    ) -> Option<PhaseSpec> {
        let loc = format!("phase[{i}] ({})", p.name);
        let n_before = is.0.len();
        let op = op_from(is, &loc, p.voltage.as_ref(), p.frequency.as_ref(), platform.operating_point);
        let bypass = p.bypass.unwrap_or(platform.fll_bypass);
        if is.0.len() == n_before {
            if let Err(e) = platform.calibration.envelope.check(op) {
                is.push(format!("{loc}.frequency"), e);
            }
        }
        let program = Self::program(is, &format!("{loc}.program"), p.program.as_ref(), p.program_text.as_ref(), benchmark, raw, base);
        if program.is_some() && platform.cpu.is_none() {
            is.push(format!("{loc}.program"), "platform has no CPU");
        }
        let traffic = p
            .traffic
            .iter()
            .enumerate()
            .filter_map(|(j, t)| {
                let tl = format!("{loc}.traffic[{j}] ({})", t.name);
                let prog = Self::program(is, &tl, t.program.as_ref(), t.program_text.as_ref(), benchmark, raw, base);
                if prog.is_none() && t.program.is_none() && t.program_text.is_none() {
                    is.push(&tl, "traffic master needs a program");
                }
                Some(TrafficSpec {
                    name: t.name.clone(),
                    program: prog?,
                    copies: t.copies,
                })
            })
            .collect();
        let idle = match p.idle.as_deref() {
            None | Some("clock-gated") => PowerState::ClockGated,
            Some("off") => PowerState::Off,
            Some(other) => {
                is.push(format!("{loc}.idle"), format!("idle must be `clock-gated` or `off`, not `{other}`"));
                PowerState::ClockGated
            }
        };
        let power = p
            .power
            .iter()
            .filter_map(|(d, s)| {
                let r = PowerState::parse(s).ok_or_else(|| format!("unknown power state `{s}`"));
                is.take(&format!("{loc}.power.{d}"), r).map(|st| (d.clone(), st))
            })
            .collect();
        let adc = match p.adc.as_deref() {
            None => None,
            Some("on") => Some(true),
            Some("off") => Some(false),
            Some(other) => {
                is.push(format!("{loc}.adc"), format!("adc must be `on` or `off`, not `{other}`"));
                None
            }
        };
        if adc.is_some() && raw.adc.is_none() {
            is.push(format!("{loc}.adc"), "no [adc] section");
        }
        let dma = p.dma.as_ref().and_then(|d| {
            let src = match d.src.as_str() {
                "adc" => DmaSource::Fifo(FIFO_ADC),
                "flash" => DmaSource::Fifo(FIFO_FLASH),
                a => DmaSource::Address(a.to_string()),
            };
            let len = is.take(&format!("{loc}.dma.length"), parse_bytes(&d.length))?;
            Some(DmaSpec {
                src,
                dst: d.dst.clone(),
                length_bytes: u32_of(is, &format!("{loc}.dma.length"), len)?,
                word_stride: d.word_stride,
            })
        });
        let timer = p.timer.as_ref().and_then(|t| {
            let c = is.take(&format!("{loc}.timer.period"), parse_cycles(&t.period))?;
            Some((c, t.periodic))
        });
        let stop = match &p.stop {
            raw::RawStop::Named(n) if n == "all-halted" || n == "phase-complete" => Some(StopCondition::AllHalted),
            raw::RawStop::Named(n) => {
                is.push(format!("{loc}.stop"), format!("unknown stop condition `{n}`"));
                None
            }
            raw::RawStop::Cycles { cycles } => is
                .take(&format!("{loc}.stop.cycles"), parse_cycles(cycles))
                .and_then(|c| is.take(&format!("{loc}.stop.cycles"), StopCondition::cycle_limit(c))),
            raw::RawStop::WallTime { wall_time } => is
                .take(&format!("{loc}.stop.wall_time"), parse_quantity(wall_time, Dimension::Time))
                .map(|s| StopCondition::WallTime {
                    nanoseconds: (s * 1e9).round() as u64,
                }),
        };
        let cycle_limit = match &p.cycle_limit {
            Some(c) => {
                let v = is.take(&format!("{loc}.cycle_limit"), parse_cycles(c))?;
                if v == 0 {
                    is.push(format!("{loc}.cycle_limit"), ConfigError::ZeroCycleLimit);
                }
                Some(v)
            }
            None => None,
        };
        Some(PhaseSpec {
            name: p.name.clone(),
            op,
            bypass,
            program,
            traffic,
            idle,
            power,
            adc,
            dma,
            timer,
            stop: stop?,
            cycle_limit,
        })
    }

    /// Instantiates the platform once to check everything that depends on
    /// the address map: overlaps, capacity, symbols, preloads and power
    /// directives.
    fn check_instance(&self, is: &mut Issues) {
        let mut p = match crate::platform::Platform::new(self.platform.clone()) {
            Ok(p) => p,
            Err(e) => {
                is.push("platform", e);
                return;
            }
        };
        let mut ok = true;
        for (i, a) in self.accelerators.iter().enumerate() {
            if let Err(e) = run::attach(&mut p, a, &BTreeMap::new()) {
                is.push(format!("accelerator[{i}] ({})", a.name), e);
                ok = false;
            }
        }
        if !ok {
            return;
        }
        let table = match resolve_symbols(&self.symbols, &p.symbols()) {
            Ok(t) => t,
            Err(errs) => {
                for (k, e) in errs {
                    is.push(format!("symbols.{k}"), e);
                }
                return;
            }
        };
        for a in &self.accelerators {
            if let AcceleratorKind::Cgra { kernel: Some(k), .. } = &a.kind {
                for (j, l) in k.lanes.iter().enumerate() {
                    for (what, e) in [("input", &l.input), ("output", &l.output)] {
                        if let Err(m) = eval_address(e, &table) {
                            is.push(format!("accelerator ({}).kernel.lane[{j}].{what}", a.name), m);
                        }
                    }
                }
            }
        }
        for (i, pl) in self.preloads.iter().enumerate() {
            match eval_address(&pl.address, &table) {
                Ok(addr) => {
                    for (k, w) in pl.words.iter().enumerate() {
                        if let Err(e) = p.poke(addr.wrapping_add(4 * k as u32), *w) {
                            is.push(format!("preload[{i}]"), e);
                            break;
                        }
                    }
                }
                Err(m) => is.push(format!("preload[{i}].address"), m),
            }
        }
        for (i, ph) in self.phases.iter().enumerate() {
            let loc = format!("phase[{i}] ({})", ph.name);
            let progs = ph
                .program
                .iter()
                .map(|pr| (pr, table.clone()))
                .chain(ph.traffic.iter().map(|t| {
                    let mut tt = table.clone();
                    tt.insert("port.bank".into(), 0);
                    (&t.program, tt)
                }));
            for (pr, t) in progs {
                let mut prog = pr.program.clone();
                if let Err(e) = prog.resolve(&t) {
                    is.push(format!("{}:{}:{}", pr.label, e.line, e.col), e.message);
                }
            }
            for (d, s) in &ph.power {
                match p.domain_index(d) {
                    Ok(idx) => {
                        let caps = p.pm.domains()[idx].capabilities;
                        if !caps.allows(*s) {
                            is.push(format!("{loc}.power.{d}"), format!("domain cannot enter {s}"));
                        }
                    }
                    Err(e) => is.push(format!("{loc}.power.{d}"), e),
                }
            }
            if let Some(d) = &ph.dma {
                if let DmaSource::Address(a) = &d.src {
                    if let Err(m) = eval_address(a, &table) {
                        is.push(format!("{loc}.dma.src"), m);
                    }
                }
                if let Err(m) = eval_address(&d.dst, &table) {
                    is.push(format!("{loc}.dma.dst"), m);
                }
            }
        }
    }
}
