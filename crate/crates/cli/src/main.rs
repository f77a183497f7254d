//! Command-line harness: one subcommand per experiment, each writing CSV
//! and/or SVG plus a JSON run manifest.

mod commands;
mod manifest;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use ionoline::channel::DEFAULT_LENGTHS;
use ionoline::link::{KNOB_CHANNEL_LENGTH, SUPPORTED_BAUDS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Svg,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        self != Format::Svg
    }

    pub fn svg(self) -> bool {
        self != Format::Csv
    }
}

#[derive(Parser)]
#[command(name = "ionoline", version, about = "Ionic data link experiments")]
struct Cli {
    /// Directory for CSV, SVG and manifest files
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,

    /// Calibration file [default: calibration.txt if present, else built-in values]
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Both)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// |Z| against frequency for a set of tube lengths
    Impedance {
        /// Tube lengths in metres, comma separated
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS.to_vec())]
        lengths: Vec<f64>,
    },
    /// Fundamental gain of the link against drive frequency
    Freqresponse {
        /// Use the buffer and Schmitt trigger front end
        #[arg(long)]
        conditioned: bool,
        #[arg(long, default_value_t = 1.4)]
        length: f64,
    },
    /// Packet loss over lengths and baud rates
    Linkmatrix {
        #[arg(long)]
        conditioned: bool,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_LENGTHS.to_vec())]
        lengths: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = SUPPORTED_BAUDS.to_vec())]
        bauds: Vec<u32>,
    },
    /// Send a potentiometer reading over a long conditioned link
    Knob {
        /// Raw ADC value, 0 to 1023
        pot: u16,
        #[arg(long, default_value_t = KNOB_CHANNEL_LENGTH)]
        length: f64,
    },
    /// Constant-current charge/discharge cycling of the battery module
    Battery {
        #[arg(long, default_value_t = 5)]
        cycles: usize,
        /// Amps
        #[arg(long, default_value_t = ionoline::battery::OPERATING_CURRENT)]
        current: f64,
        /// Seconds
        #[arg(long, default_value_t = 1.0)]
        dt: f64,
    },
    /// Two-node blink-and-pulse protocol driven by a scenario file
    Duplex {
        /// Lines of `t_s inject <event> <node>`
        scenario: PathBuf,
        #[arg(long, default_value_t = 60.0)]
        t_end: f64,
        /// Seconds [default: three blink sequences]
        #[arg(long)]
        peer_timeout: Option<f64>,
        /// Keep a node autonomous once it has failed over
        #[arg(long)]
        no_rejoin: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
