//! 8N1 UART codec and the end-to-end link runner.
//!
//! A run pushes the transmitter waveform through the channel into the
//! receiver load, optionally through the buffer and Schmitt trigger, and
//! decodes what the receiving UART would see.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::afe::{buffer_apply, schmitt_apply, BufferConfig, LoadModel, SchmittConfig};
use crate::calibration::Calibration;
use crate::channel::{self, ChannelSpec};
use crate::error::{invalid, Error, Result};
use crate::waveform::Waveform;

pub const SUPPORTED_BAUDS: [u32; 6] = [300, 1_200, 2_400, 4_800, 9_600, 19_200];

/// Bits per 8N1 frame: start, eight data bits, stop.
pub const FRAME_BITS: usize = 10;

/// Idle bit-times before the first frame and after every frame.
pub const IDLE_BITS: usize = 2;

/// Minimum sample rate relative to the baud rate.
pub const MIN_SAMPLES_PER_BIT: f64 = 16.0;

pub const TEST_PAYLOAD: [u8; 8] = [0, 1, 2, 3, 4, 5, 6, 7];

pub const KNOB_CHANNEL_LENGTH: f64 = 10.0;
pub const KNOB_BAUD: u32 = 9_600;
pub const LED_COUNT: u16 = 12;

/// 8 data bits, no parity, one stop bit, idle high.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UartConfig {
    pub baud: u32,
    pub v_low: f64,
    pub v_high: f64,
}

impl UartConfig {
    pub fn new(baud: u32) -> Self {
        Self {
            baud,
            ..Self::default()
        }
    }

    pub fn bit_time(&self) -> f64 {
        1.0 / f64::from(self.baud)
    }

    pub fn mid_rail(&self) -> f64 {
        0.5 * (self.v_low + self.v_high)
    }

    pub fn validate(&self) -> Result<()> {
        if self.baud == 0 {
            return Err(invalid("baud must be > 0"));
        }
        if !(self.v_low < self.v_high) {
            return Err(invalid("UART levels must satisfy v_low < v_high"));
        }
        Ok(())
    }
}

impl Default for UartConfig {
    fn default() -> Self {
        Self {
            baud: 9_600,
            v_low: 0.0,
            v_high: 5.0,
        }
    }
}

fn frame_bits(byte: u8) -> impl Iterator<Item = bool> {
    std::iter::once(false)
        .chain((0..8).map(move |k| byte >> k & 1 == 1))
        .chain(std::iter::once(true))
}

/// Frames `payload` back to back.
pub fn uart_encode(payload: &[u8], cfg: &UartConfig, sample_rate: f64) -> Result<Waveform> {
    encode_with_idle(payload, cfg, sample_rate, 0)
}

/// Frames `payload` with `idle_bits` of idle line before the first frame and
/// after each frame.
pub fn encode_with_idle(
    payload: &[u8],
    cfg: &UartConfig,
    sample_rate: f64,
    idle_bits: usize,
) -> Result<Waveform> {
    cfg.validate()?;
    let baud = f64::from(cfg.baud);
    if !(sample_rate >= MIN_SAMPLES_PER_BIT * baud) {
        return Err(invalid(format!(
            "sample rate {sample_rate} Hz is below {MIN_SAMPLES_PER_BIT}x the {baud} baud rate"
        )));
    }
    let idle = || std::iter::repeat_n(true, idle_bits);
    let bits: Vec<bool> = idle()
        .chain(payload.iter().flat_map(|&b| frame_bits(b).chain(idle())))
        .collect();
    if bits.is_empty() {
        return Ok(Waveform::new(sample_rate, vec![cfg.v_high])?.with_band(0.5 * baud));
    }
    // Bit boundaries are computed from the absolute sample index so
    // fractional bit lengths never accumulate drift.
    let len = (bits.len() as f64 * sample_rate / baud).round() as usize;
    let samples = (0..len)
        .map(|i| {
            let bit = ((i as f64 * baud / sample_rate) + 1e-9).floor() as usize;
            if bits[bit.min(bits.len() - 1)] {
                cfg.v_high
            } else {
                cfg.v_low
            }
        })
        .collect();
    Ok(Waveform::new(sample_rate, samples)?.with_band(0.5 * baud))
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Decoded {
    pub bytes: Vec<u8>,
    pub framing_errors: usize,
}

/// Samples each bit at its midpoint after a falling edge through
/// `threshold`.
///
/// A frame whose stop bit reads low, or that runs off the end of the
/// signal, counts as a framing error and is dropped. After a framing error
/// the receiver waits for the line to return high before hunting again.
pub fn uart_decode(signal: &Waveform, cfg: &UartConfig, threshold: f64) -> Result<Decoded> {
    cfg.validate()?;
    if !(cfg.v_low < threshold && threshold < cfg.v_high) {
        return Err(invalid(format!(
            "threshold {threshold} V must lie strictly between {} and {} V",
            cfg.v_low, cfg.v_high
        )));
    }
    let samples = signal.samples();
    let n = samples.len();
    let per_bit = signal.sample_rate() / f64::from(cfg.baud);
    let low = |i: usize| samples[i] < threshold;

    let mut out = Decoded::default();
    let mut armed = true;
    let mut i = 0;
    while i < n {
        if !armed {
            armed = !low(i);
            i += 1;
            continue;
        }
        if !low(i) {
            i += 1;
            continue;
        }
        // The edge lies between samples i - 1 and i.
        let edge = i as f64 - 0.5;
        let mid = |bit: usize| (edge + (bit as f64 + 0.5) * per_bit).round().max(0.0) as usize;
        if mid(FRAME_BITS - 1) >= n {
            out.framing_errors += 1;
            break;
        }
        if !low(mid(0)) {
            // Glitch shorter than half a bit.
            i += 1;
            continue;
        }
        let byte = (0..8).fold(0u8, |acc, k| acc | (u8::from(!low(mid(k + 1))) << k));
        if low(mid(FRAME_BITS - 1)) {
            out.framing_errors += 1;
            armed = false;
        } else {
            out.bytes.push(byte);
        }
        i = mid(FRAME_BITS - 1) + 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LinkStats {
    pub packets_sent: usize,
    pub packets_received: usize,
    pub packets_lost: usize,
    pub bit_errors: usize,
    pub framing_errors: usize,
}

impl LinkStats {
    /// One packet per payload byte. A packet is received when the byte
    /// decoded in the same position matches it.
    pub fn compare(sent: &[u8], decoded: &Decoded) -> Self {
        let received = sent
            .iter()
            .zip(&decoded.bytes)
            .filter(|(a, b)| a == b)
            .count();
        let bit_errors = sent
            .iter()
            .zip(&decoded.bytes)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum();
        Self {
            packets_sent: sent.len(),
            packets_received: received,
            packets_lost: sent.len() - received,
            bit_errors,
            framing_errors: decoded.framing_errors,
        }
    }
}

/// What sits between transmitter and receiver.
#[derive(Debug, Clone, PartialEq)]
pub enum Medium {
    /// A direct wire: the receiver sees the transmitter waveform unchanged.
    Identity,
    Electrolyte(ChannelSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrontEnd {
    pub unconditioned_load: LoadModel,
    pub buffer: BufferConfig,
    pub schmitt: SchmittConfig,
}

impl FrontEnd {
    pub fn from_calibration(cal: &Calibration) -> Self {
        Self {
            unconditioned_load: cal.unconditioned_load,
            buffer: cal.buffer,
            schmitt: SchmittConfig::default(),
        }
    }

    pub fn load(&self, conditioned: bool) -> LoadModel {
        if conditioned {
            self.buffer.input_load
        } else {
            self.unconditioned_load
        }
    }
}

impl Default for FrontEnd {
    fn default() -> Self {
        Self::from_calibration(&Calibration::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkConfig {
    pub medium: Medium,
    pub conditioned: bool,
    pub uart: UartConfig,
    pub sample_rate: f64,
    pub front_end: FrontEnd,
}

/// 64 samples per bit, never below 1 MHz.
pub fn default_sample_rate(baud: u32) -> f64 {
    (64.0 * f64::from(baud)).max(1.0e6)
}

impl LinkConfig {
    pub fn new(medium: Medium, conditioned: bool, uart: UartConfig, cal: &Calibration) -> Self {
        Self {
            medium,
            conditioned,
            uart,
            sample_rate: default_sample_rate(uart.baud),
            front_end: FrontEnd::from_calibration(cal),
        }
    }

    /// Calibrated electrolyte channel of `length` metres.
    pub fn electrolyte(
        length: f64,
        baud: u32,
        conditioned: bool,
        cal: &Calibration,
    ) -> Result<Self> {
        let spec = ChannelSpec::calibrated(length, cal)?;
        Ok(Self::new(
            Medium::Electrolyte(spec),
            conditioned,
            UartConfig::new(baud),
            cal,
        ))
    }

    pub fn validate(&self) -> Result<()> {
        self.uart.validate()?;
        if !(self.sample_rate >= MIN_SAMPLES_PER_BIT * f64::from(self.uart.baud)) {
            return Err(invalid(
                "link sample rate must be at least 16x the baud rate",
            ));
        }
        Ok(())
    }

    /// Voltage the receiving UART compares against.
    pub fn decision_threshold(&self) -> f64 {
        if self.conditioned {
            self.front_end.schmitt.logic_threshold()
        } else {
            self.uart.mid_rail()
        }
    }
}

/// Every intermediate signal of one link run.
#[derive(Debug, Clone)]
pub struct Transmission {
    pub tx: Waveform,
    /// Voltage across the receiver load.
    pub rx: Waveform,
    /// What the receiving UART samples.
    pub logic: Waveform,
    pub decoded: Decoded,
    pub stats: LinkStats,
}

pub fn transmit(cfg: &LinkConfig, payload: &[u8]) -> Result<Transmission> {
    cfg.validate()?;
    let tx = encode_with_idle(payload, &cfg.uart, cfg.sample_rate, IDLE_BITS)?;
    let load = cfg.front_end.load(cfg.conditioned);
    let rx = match &cfg.medium {
        Medium::Identity => tx.clone(),
        Medium::Electrolyte(spec) => channel::propagate(spec, &load, &tx)?,
    };
    let logic = if cfg.conditioned {
        let buffered = buffer_apply(&cfg.front_end.buffer, &rx)?;
        schmitt_apply(&cfg.front_end.schmitt, &buffered)?
    } else {
        rx.clone()
    };
    let decoded = uart_decode(&logic, &cfg.uart, cfg.decision_threshold())?;
    let stats = LinkStats::compare(payload, &decoded);
    Ok(Transmission {
        tx,
        rx,
        logic,
        decoded,
        stats,
    })
}

pub fn run_link(cfg: &LinkConfig, payload: &[u8]) -> Result<LinkStats> {
    transmit(cfg, payload).map(|t| t.stats)
}

/// Gains are normalised to the response at this frequency.
pub const RESPONSE_REFERENCE_HZ: f64 = 10.0e3;
pub const RESPONSE_OVERSAMPLING: f64 = 40.0;
pub const RESPONSE_CYCLES: f64 = 200.0;

/// 10 points per decade, 1 kHz to 100 MHz.
pub fn response_grid() -> Vec<f64> {
    (0..=50)
        .map(|k| 1.0e3 * 10f64.powf(f64::from(k) / 10.0))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResponsePoint {
    pub freq_hz: f64,
    pub gain: f64,
}

/// Fundamental amplitude at the receiver output for a rail-to-rail sine
/// drive. The conditioned output is taken after the Schmitt trigger.
pub fn tone_response(
    spec: &ChannelSpec,
    front_end: &FrontEnd,
    conditioned: bool,
    freq_hz: f64,
) -> Result<f64> {
    let uart = UartConfig::default();
    let half = 0.5 * (uart.v_high - uart.v_low);
    let drive = Waveform::sine(
        RESPONSE_OVERSAMPLING * freq_hz,
        freq_hz,
        half,
        uart.v_low + half,
        RESPONSE_CYCLES,
    )?;
    let rx = channel::propagate(spec, &front_end.load(conditioned), &drive)?;
    let out = if conditioned {
        schmitt_apply(&front_end.schmitt, &buffer_apply(&front_end.buffer, &rx)?)?
    } else {
        rx
    };
    Ok(out.tone_amplitude(freq_hz, 0.5 * RESPONSE_CYCLES / freq_hz))
}

pub fn frequency_response(
    spec: &ChannelSpec,
    front_end: &FrontEnd,
    conditioned: bool,
    freqs: &[f64],
) -> Result<Vec<ResponsePoint>> {
    if freqs.is_empty() {
        return Err(invalid("need at least one frequency"));
    }
    let reference = tone_response(spec, front_end, conditioned, RESPONSE_REFERENCE_HZ)?;
    if !(reference > 0.0) {
        return Err(invalid("no response at the reference frequency"));
    }
    freqs
        .par_iter()
        .map(|&f| {
            Ok(ResponsePoint {
                freq_hz: f,
                gain: tone_response(spec, front_end, conditioned, f)? / reference,
            })
        })
        .collect()
}

/// First −3 dB crossing, interpolated on log frequency.
pub fn rolloff_3db(points: &[ResponsePoint]) -> Option<f64> {
    let level = std::f64::consts::FRAC_1_SQRT_2;
    points.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        if a.gain >= level && b.gain < level {
            let u = (a.gain - level) / (a.gain - b.gain);
            Some((a.freq_hz.ln() + u * (b.freq_hz / a.freq_hz).ln()).exp())
        } else {
            None
        }
    })
}

pub fn response_csv(points: &[ResponsePoint]) -> String {
    let mut out = String::from("freq_hz,gain\n");
    for p in points {
        writeln!(out, "{:.6},{:.6}", p.freq_hz, p.gain).expect("string write");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkCell {
    pub length: f64,
    pub baud: u32,
    pub conditioned: bool,
    pub stats: LinkStats,
}

/// [`run_link`] with [`TEST_PAYLOAD`] over every `(length, baud)` pair,
/// length-major. Cells run in parallel; the order of the result does not
/// depend on scheduling.
pub fn link_matrix(
    lengths: &[f64],
    bauds: &[u32],
    conditioned: bool,
    cal: &Calibration,
) -> Result<Vec<LinkCell>> {
    let cells: Vec<(f64, u32)> = lengths
        .iter()
        .flat_map(|&l| bauds.iter().map(move |&b| (l, b)))
        .collect();
    cells
        .into_par_iter()
        .map(|(length, baud)| {
            let cfg = LinkConfig::electrolyte(length, baud, conditioned, cal)?;
            Ok(LinkCell {
                length,
                baud,
                conditioned,
                stats: run_link(&cfg, &TEST_PAYLOAD)?,
            })
        })
        .collect()
}

pub fn matrix_csv(cells: &[LinkCell]) -> String {
    let mut out =
        String::from("length_m,baud,conditioned,sent,received,lost,bit_errors,framing_errors\n");
    for c in cells {
        let s = &c.stats;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.length,
            c.baud,
            c.conditioned,
            s.packets_sent,
            s.packets_received,
            s.packets_lost,
            s.bit_errors,
            s.framing_errors
        )
        .expect("string write");
    }
    out
}

/// LED position for a 10-bit potentiometer reading.
pub fn pot_to_led(pot_value: u16) -> Result<u8> {
    if pot_value > 1023 {
        return Err(invalid(format!(
            "pot value must be in 0..=1023, got {pot_value}"
        )));
    }
    Ok((u32::from(pot_value) * u32::from(LED_COUNT) / 1024) as u8)
}

/// Sends the LED index for `pot_value` over a conditioned link and returns
/// the index the receiver decoded.
pub fn knob_demo(pot_value: u16, channel_length: f64, cal: &Calibration) -> Result<u8> {
    let cfg = LinkConfig::electrolyte(channel_length, KNOB_BAUD, true, cal)?;
    knob_over(&cfg, pot_value)
}

pub fn knob_over(cfg: &LinkConfig, pot_value: u16) -> Result<u8> {
    let index = pot_to_led(pot_value)?;
    let t = transmit(cfg, &[index])?;
    match t.decoded.bytes.as_slice() {
        [got] if t.stats.packets_lost == 0 => Ok(*got),
        _ => Err(Error::PacketLoss {
            sent: 1,
            lost: t.stats.packets_lost,
        }),
    }
}
