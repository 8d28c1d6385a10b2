//! Command-line front end: CSV ingestion, subcommand dispatch and report
//! serialization. [`run`] maps outcomes to exit codes: 0 on success, 1 on
//! input or usage errors, 2 when a fit did not converge.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

pub mod analyze;
pub mod input;
pub mod report;
pub mod simulate;

pub use input::{parse_csv, Schema, Table};
pub use report::{AnalysisReport, Quantity};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "nvlaser", version, about = "Laser-excitation characterization for NV confocal microscopes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    /// Key-sorted JSON document.
    Json,
    /// Flat `key=value` lines.
    Kv,
}

#[derive(Debug, Clone, clap::Args)]
pub struct OutputArgs {
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write (x, y_data, y_fit) samples here for plotting.
    #[arg(long)]
    pub curve_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

impl Default for OutputArgs {
    fn default() -> Self {
        Self { out: None, curve_out: None, format: Format::Json }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit knife-edge scans; with --lambda-nm and four or more positions, also the caustic.
    KnifeEdge(analyze::KnifeEdgeArgs),
    /// Fit a beam caustic for waist, Rayleigh range and M².
    Caustic(analyze::CausticArgs),
    /// Correlate two timestamp channels into g2(τ).
    G2(analyze::G2Args),
    /// Fit a fluorescence saturation curve.
    Saturation(analyze::SaturationArgs),
    /// Fit fluorescence versus half-wave-plate angle.
    Polarization(analyze::PolarizationArgs),
    /// ZPL and charge-state diagnostics of an emission spectrum.
    Spectrum(analyze::SpectrumArgs),
    /// Rise/fall time, extinction ratio and ripple of a pulse trace.
    Pulse(analyze::PulseArgs),
    /// Direct and Lorentzian contrast of an ODMR sweep.
    Odmr(analyze::OdmrArgs),
    /// Generate seeded synthetic datasets.
    Simulate(simulate::SimulateArgs),
}

/// Samples for external plotting.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Curve {
    pub x: Vec<f64>,
    pub y_data: Vec<f64>,
    /// Empty when the analysis has no fitted model.
    pub y_fit: Vec<f64>,
}

impl Curve {
    pub fn push(&mut self, x: f64, y_data: f64, y_fit: f64) {
        self.x.push(x);
        self.y_data.push(y_data);
        self.y_fit.push(y_fit);
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub report: AnalysisReport,
    pub curve: Option<Curve>,
    pub converged: bool,
}

impl Command {
    /// Where and how the report goes; `simulate` always prints JSON to stdout.
    pub fn output(&self) -> OutputArgs {
        match self {
            Command::KnifeEdge(a) => a.output.clone(),
            Command::Caustic(a) => a.output.clone(),
            Command::G2(a) => a.output.clone(),
            Command::Saturation(a) => a.output.clone(),
            Command::Polarization(a) => a.output.clone(),
            Command::Spectrum(a) => a.output.clone(),
            Command::Pulse(a) => a.output.clone(),
            Command::Odmr(a) => a.output.clone(),
            Command::Simulate(_) => OutputArgs::default(),
        }
    }
}

pub fn execute(command: &Command) -> Result<Outcome> {
    match command {
        Command::KnifeEdge(a) => analyze::knife_edge(a),
        Command::Caustic(a) => analyze::caustic(a),
        Command::G2(a) => analyze::g2(a),
        Command::Saturation(a) => analyze::saturation(a),
        Command::Polarization(a) => analyze::polarization(a),
        Command::Spectrum(a) => analyze::spectrum(a),
        Command::Pulse(a) => analyze::pulse(a),
        Command::Odmr(a) => analyze::odmr(a),
        Command::Simulate(a) => simulate::simulate(a),
    }
}

fn emit(outcome: &Outcome, output: &OutputArgs) -> Result<()> {
    let text = match output.format {
        Format::Json => outcome.report.to_json(),
        Format::Kv => outcome.report.to_key_value(),
    };
    match &output.out {
        Some(path) => std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))?,
        None => std::io::stdout().lock().write_all(text.as_bytes())?,
    }
    if let Some(path) = &output.curve_out {
        let curve = outcome.curve.clone().unwrap_or_default();
        input::write_csv(path, &[("x", &curve.x), ("y_data", &curve.y_data), ("y_fit", &curve.y_fit)])?;
    }
    Ok(())
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_INPUT,
            };
        }
    };
    let outcome = match execute(&cli.command).and_then(|o| emit(&o, &cli.command.output()).map(|_| o)) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_INPUT;
        }
    };
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    if outcome.converged {
        EXIT_OK
    } else {
        eprintln!("error: fit did not converge; report written with converged = false");
        EXIT_NOT_CONVERGED
    }
}
