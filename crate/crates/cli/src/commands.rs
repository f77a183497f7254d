use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context as _, Result};

use ionoline::battery::{cycle, cycle_csv, half_cycles, CellConfig, Phase};
use ionoline::channel::{impedance, sweep_grid, ChannelSpec};
use ionoline::duplex::{
    nanos_to_secs, parse_scenario, simulate, DuplexConfig, EventTrace, NodeId, TraceEvent,
};
use ionoline::link::{
    frequency_response, knob_demo, link_matrix, matrix_csv, pot_to_led, response_csv,
    response_grid, rolloff_3db, FrontEnd,
};
use ionoline::Calibration;

use crate::manifest::RunManifest;
use crate::svg::{Plot, Series};
use crate::{Cli, Command, Format};

const DEFAULT_CALIBRATION: &str = "calibration.txt";

/// Bad arguments or input files; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ionoline::Error>() {
        Some(
            ionoline::Error::InvalidInput(_)
            | ionoline::Error::Calibration { .. }
            | ionoline::Error::Aliasing { .. }
            | ionoline::Error::OverCurrent { .. },
        ) => 2,
        _ => 1,
    }
}

struct Ctx {
    out_dir: PathBuf,
    format: Format,
    cal: Calibration,
}

impl Ctx {
    fn manifest(&self, subcommand: &str) -> RunManifest {
        let mut m = RunManifest::new(subcommand, &self.cal.version);
        m.param("format", format!("{:?}", self.format).to_lowercase());
        m
    }

    fn finish(
        &self,
        m: &mut RunManifest,
        stem: &str,
        csv: Option<String>,
        plot: Option<Plot>,
    ) -> Result<()> {
        if let (true, Some(csv)) = (self.format.csv(), csv) {
            m.emit(&self.out_dir, &format!("{stem}.csv"), &csv)?;
        }
        if let (true, Some(plot)) = (self.format.svg(), plot) {
            m.emit(&self.out_dir, &format!("{stem}.svg"), &plot.render())?;
        }
        m.save(&self.out_dir, stem)?;
        Ok(())
    }
}

fn load_calibration(path: Option<&Path>) -> Result<Calibration> {
    match path {
        Some(p) => {
            if !p.exists() {
                return Err(usage(format!("calibration file {} not found", p.display())));
            }
            Ok(Calibration::load(p).with_context(|| format!("loading {}", p.display()))?)
        }
        None => Ok(Calibration::load_or_default(DEFAULT_CALIBRATION)
            .with_context(|| format!("loading {DEFAULT_CALIBRATION}"))?),
    }
}

pub fn run(cli: Cli) -> Result<()> {
    let cal = load_calibration(cli.calibration.as_deref())?;
    fs::create_dir_all(&cli.out_dir)
        .with_context(|| format!("creating {}", cli.out_dir.display()))?;
    let ctx = Ctx {
        out_dir: cli.out_dir,
        format: cli.format,
        cal,
    };
    match cli.command {
        Command::Impedance { lengths } => cmd_impedance(&ctx, &lengths),
        Command::Freqresponse {
            conditioned,
            length,
        } => cmd_freqresponse(&ctx, conditioned, length),
        Command::Linkmatrix {
            conditioned,
            lengths,
            bauds,
        } => cmd_linkmatrix(&ctx, conditioned, &lengths, &bauds),
        Command::Knob { pot, length } => cmd_knob(&ctx, pot, length),
        Command::Battery {
            cycles,
            current,
            dt,
        } => cmd_battery(&ctx, cycles, current, dt),
        Command::Duplex {
            scenario,
            t_end,
            peer_timeout,
            no_rejoin,
        } => cmd_duplex(&ctx, &scenario, t_end, peer_timeout, !no_rejoin),
    }
}

fn join<T: ToString>(xs: &[T]) -> String {
    xs.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

fn cmd_impedance(ctx: &Ctx, lengths: &[f64]) -> Result<()> {
    if lengths.is_empty() {
        return Err(usage("at least one length is required"));
    }
    let grid = sweep_grid();
    let mut csv = String::from("length_m,freq_hz,z_real_ohm,z_imag_ohm,z_mag_ohm\n");
    let mut series = Vec::new();
    for &length in lengths {
        let spec = ChannelSpec::calibrated(length, &ctx.cal)?;
        let mut points = Vec::with_capacity(grid.len());
        for &f in &grid {
            let z = impedance(&spec, f)?;
            csv.push_str(&format!(
                "{length},{f},{:.6},{:.6},{:.6}\n",
                z.re,
                z.im,
                z.norm()
            ));
            points.push((f, z.norm()));
        }
        ensure!(
            points.len() == grid.len(),
            "curve for {length} m is incomplete"
        );
        series.push(Series::new(format!("{length} m"), points));
    }
    let plot = Plot {
        title: "Tube impedance".into(),
        x_label: "frequency (Hz)".into(),
        y_label: "|Z| (ohm)".into(),
        log_x: true,
        log_y: false,
        series,
    };
    let mut m = ctx.manifest("impedance");
    m.param("lengths", join(lengths));
    ctx.finish(&mut m, "impedance", Some(csv), Some(plot))?;
    println!("{} curves x {} points", lengths.len(), grid.len());
    Ok(())
}

fn mode_name(conditioned: bool) -> &'static str {
    if conditioned {
        "conditioned"
    } else {
        "unconditioned"
    }
}

fn cmd_freqresponse(ctx: &Ctx, conditioned: bool, length: f64) -> Result<()> {
    let spec = ChannelSpec::calibrated(length, &ctx.cal)?;
    let fe = FrontEnd::from_calibration(&ctx.cal);
    let points = frequency_response(&spec, &fe, conditioned, &response_grid())?;
    let stem = format!("freqresponse_{}", mode_name(conditioned));
    let plot = Plot {
        title: format!("Frequency response, {length} m, {}", mode_name(conditioned)),
        x_label: "frequency (Hz)".into(),
        y_label: "gain (normalised at 10 kHz)".into(),
        log_x: true,
        log_y: false,
        series: vec![Series::new(
            mode_name(conditioned),
            points.iter().map(|p| (p.freq_hz, p.gain)).collect(),
        )],
    };
    let mut m = ctx.manifest("freqresponse");
    m.param("conditioned", conditioned)
        .param("length_m", length);
    ctx.finish(&mut m, &stem, Some(response_csv(&points)), Some(plot))?;
    match rolloff_3db(&points) {
        Some(f) => println!("-3 dB at {f:.0} Hz"),
        None => println!("no -3 dB crossing on the grid"),
    }
    Ok(())
}

fn cmd_linkmatrix(ctx: &Ctx, conditioned: bool, lengths: &[f64], bauds: &[u32]) -> Result<()> {
    if lengths.is_empty() || bauds.is_empty() {
        return Err(usage("at least one length and one baud rate are required"));
    }
    let mut cells = link_matrix(lengths, bauds, conditioned, &ctx.cal)?;
    cells.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.baud.cmp(&b.baud)));
    ensure!(
        cells.len() == lengths.len() * bauds.len(),
        "matrix is missing cells"
    );
    let series = bauds
        .iter()
        .map(|&baud| {
            let pts = cells
                .iter()
                .filter(|c| c.baud == baud)
                .map(|c| (c.length, c.stats.packets_lost as f64))
                .collect();
            Series::new(format!("{baud} baud"), pts)
        })
        .collect();
    let plot = Plot {
        title: format!("Packets lost, {}", mode_name(conditioned)),
        x_label: "length (m)".into(),
        y_label: "packets lost of 8".into(),
        log_x: false,
        log_y: false,
        series,
    };
    let mut m = ctx.manifest("linkmatrix");
    m.param("conditioned", conditioned)
        .param("lengths", join(lengths))
        .param("bauds", join(bauds));
    let stem = format!("linkmatrix_{}", mode_name(conditioned));
    ctx.finish(&mut m, &stem, Some(matrix_csv(&cells)), Some(plot))?;
    let lost: usize = cells.iter().map(|c| c.stats.packets_lost).sum();
    println!("{} cells, {lost} packets lost", cells.len());
    Ok(())
}

fn cmd_knob(ctx: &Ctx, pot: u16, length: f64) -> Result<()> {
    let expected = pot_to_led(pot)?;
    let got = knob_demo(pot, length, &ctx.cal)?;
    if got != expected {
        bail!("received LED {got}, sent {expected}");
    }
    let mut m = ctx.manifest("knob");
    m.param("pot", pot).param("length_m", length);
    let csv = format!("pot_value,led_index\n{pot},{got}\n");
    ctx.finish(&mut m, "knob", Some(csv), None)?;
    println!("{got}");
    Ok(())
}

fn cmd_battery(ctx: &Ctx, cycles: usize, current: f64, dt: f64) -> Result<()> {
    let cfg = CellConfig::from_calibration(&ctx.cal);
    let trace = cycle(&cfg, cycles, current, dt)?;
    let halves = half_cycles(&trace);
    ensure!(
        halves.len() == 2 * cycles,
        "expected {} half-cycles, got {}",
        2 * cycles,
        halves.len()
    );
    let plot = Plot {
        title: "Battery module cycling".into(),
        x_label: "time (s)".into(),
        y_label: "terminal voltage (V)".into(),
        log_x: false,
        log_y: false,
        series: vec![Series::new(
            "module",
            trace
                .iter()
                .map(|s| (s.t, s.state.terminal_voltage))
                .collect(),
        )],
    };
    let mut m = ctx.manifest("battery");
    m.param("cycles", cycles)
        .param("current_a", current)
        .param("dt_s", dt);
    ctx.finish(&mut m, "battery", Some(cycle_csv(&trace)), Some(plot))?;
    let energy = |p: Phase| {
        halves
            .iter()
            .filter(|h| h.phase == p)
            .map(|h| h.energy)
            .sum::<f64>()
    };
    println!(
        "{} half-cycles, {:.1} J in, {:.1} J out",
        halves.len(),
        energy(Phase::Charge),
        energy(Phase::Discharge)
    );
    Ok(())
}

/// Blink activity per node as a step trace: lane base while idle, raised
/// while blinking.
fn blink_lanes(trace: &EventTrace, t_end: f64) -> Vec<Series> {
    NodeId::ALL
        .iter()
        .enumerate()
        .map(|(lane, &node)| {
            let base = 2.0 * lane as f64;
            let mut level = base;
            let mut pts = vec![(0.0, base)];
            for e in trace.entries().iter().filter(|e| e.node == node) {
                let next = match e.event {
                    TraceEvent::BlinkStart => base + 1.0,
                    TraceEvent::BlinkEnd | TraceEvent::PowerOff => base,
                    _ => continue,
                };
                let t = nanos_to_secs(e.t);
                pts.push((t, level));
                pts.push((t, next));
                level = next;
            }
            pts.push((t_end, level));
            Series::new(node.as_str(), pts)
        })
        .collect()
}

fn cmd_duplex(
    ctx: &Ctx,
    scenario: &Path,
    t_end: f64,
    peer_timeout: Option<f64>,
    rejoin: bool,
) -> Result<()> {
    let text = fs::read_to_string(scenario)
        .map_err(|e| usage(format!("reading {}: {e}", scenario.display())))?;
    let injections = parse_scenario(&text)?;
    let mut cfg = DuplexConfig::from_calibration(&ctx.cal)?;
    if let Some(t) = peer_timeout {
        cfg.peer_timeout = t;
    }
    cfg.rejoin = rejoin;
    let trace = simulate(&cfg, &injections, t_end)?;
    ensure!(trace.is_causal(), "trace violates causality");
    let plot = Plot {
        title: "Blink activity".into(),
        x_label: "time (s)".into(),
        y_label: "left (0-1), right (2-3)".into(),
        log_x: false,
        log_y: false,
        series: blink_lanes(&trace, t_end),
    };
    let mut m = ctx.manifest("duplex");
    m.param("scenario", text.trim_end().replace('\n', "; "))
        .param("t_end_s", t_end)
        .param("peer_timeout_s", cfg.peer_timeout)
        .param("rejoin", rejoin);
    ctx.finish(&mut m, "duplex", Some(trace.to_csv()), Some(plot))?;
    for node in NodeId::ALL {
        for t in trace.times(node, TraceEvent::ModeSwitch) {
            println!("{t:.6} {node} mode_switch");
        }
    }
    println!("{} mode switches", trace.count(TraceEvent::ModeSwitch));
    Ok(())
}
