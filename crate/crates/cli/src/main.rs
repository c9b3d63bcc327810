use std::fs::File;
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Parser, Subcommand};
use xheep_core::interconnect::write_trace_csv;
use xheep_core::power::calibration::CalibrationTable;
use xheep_core::report::EnergyReport;
use xheep_core::scenario::sweep::{sweep, write_sweep_csv, SweepAxis};
use xheep_core::scenario::Scenario;
use xheep_core::Error;

const EXIT_FAULT: u8 = 1;
const EXIT_USAGE: u8 = 2;

#[derive(Parser)]
#[command(name = "xheep", version, about = "X-HEEP platform simulator and energy estimator")]
struct Cli {
    /// Calibration table replacing the one named by the scenario.
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a scenario and list every problem found.
    Validate {
        scenario: PathBuf,
        /// Print issues as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run all phases and emit the energy report.
    Run {
        scenario: PathBuf,
        /// JSON report path; `-` for stdout.
        #[arg(long, default_value = "-")]
        report: String,
        /// Domain x phase energy matrix.
        #[arg(long)]
        csv: Option<PathBuf>,
        /// Record bus transactions to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Run one simulation per value of an axis, e.g. `ports=1..8`.
    Sweep {
        scenario: PathBuf,
        #[arg(long)]
        axis: String,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run with transaction tracing and write the trace CSV.
    Trace {
        scenario: PathBuf,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load(path: &Path, calibration: Option<&Path>) -> Result<Scenario, Error> {
    match calibration {
        Some(c) => Scenario::load_with_calibration(path, Arc::new(CalibrationTable::load(c)?)),
        None => Scenario::load(path),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, Error> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    }
}

fn fault_code(report: &EnergyReport) -> u8 {
    if report.faulted {
        for e in report.events.iter().filter(|e| e.kind.is_fault()) {
            eprintln!("fault at cycle {}: {:?}", e.cycle, e.kind);
        }
        EXIT_FAULT
    } else {
        0
    }
}

fn execute(cli: Cli) -> Result<u8, Error> {
    let cal = cli.calibration.as_deref();
    match cli.command {
        Command::Validate { scenario, json } => match load(&scenario, cal) {
            Ok(_) => {
                if json {
                    println!("[]");
                } else {
                    println!("{}: ok", scenario.display());
                }
                Ok(0)
            }
            Err(Error::Validation(issues)) if json => {
                println!("{}", serde_json::to_string_pretty(&issues).expect("issues serialize"));
                Ok(EXIT_USAGE)
            }
            Err(e) => Err(e),
        },
        Command::Run {
            scenario,
            report,
            csv,
            trace,
        } => {
            let mut s = load(&scenario, cal)?;
            s.trace |= trace.is_some();
            let r = s.run()?;
            if report == "-" {
                println!("{}", r.report.to_json());
            } else {
                let p = Path::new(&report);
                std::fs::write(p, r.report.to_json()).map_err(|e| Error::io(p, e))?;
            }
            if let Some(p) = csv {
                r.report.write_csv(create(&p)?).map_err(|e| csv_err(&p, e))?;
            }
            if let (Some(p), Some(t)) = (trace, &r.trace) {
                write_trace_csv(create(&p)?, t).map_err(|e| csv_err(&p, e))?;
            }
            if !r.uart.is_empty() {
                eprint!("{}", r.uart);
            }
            Ok(fault_code(&r.report))
        }
        Command::Sweep { scenario, axis, out } => {
            let s = load(&scenario, cal)?;
            let axis = SweepAxis::parse(&axis)?;
            let rows = sweep(&s, &axis)?;
            match out {
                Some(p) => write_sweep_csv(create(&p)?, &rows).map_err(|e| csv_err(&p, e))?,
                None => write_sweep_csv(io::stdout().lock(), &rows).map_err(|e| csv_err(Path::new("-"), e))?,
            }
            Ok(if rows.iter().any(|r| r.faulted) { EXIT_FAULT } else { 0 })
        }
        Command::Trace { scenario, out } => {
            let mut s = load(&scenario, cal)?;
            s.trace = true;
            let r = s.run()?;
            let t = r.trace.as_deref().unwrap_or_default();
            match out {
                Some(p) => write_trace_csv(create(&p)?, t).map_err(|e| csv_err(&p, e))?,
                None => write_trace_csv(io::stdout().lock(), t).map_err(|e| csv_err(Path::new("-"), e))?,
            }
            Ok(fault_code(&r.report))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { 0 });
        }
    };
    match execute(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
