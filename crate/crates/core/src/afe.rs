//! Receiver front ends: the load a receiver presents to the channel, a
//! unity-gain buffer and a non-inverting Schmitt trigger.

use std::f64::consts::TAU;

use crate::calibration::Calibration;
use crate::error::{invalid, Result};
use crate::filter::TransferFunction;
use crate::waveform::Waveform;

/// Parallel resistance and capacitance to ground at the receiving end.
///
/// An infinite resistance is an open circuit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoadModel {
    pub resistance: f64,
    pub capacitance: f64,
}

impl LoadModel {
    pub fn new(resistance: f64, capacitance: f64) -> Result<Self> {
        if resistance.is_nan() || resistance <= 0.0 {
            return Err(invalid(format!(
                "load resistance must be > 0, got {resistance}"
            )));
        }
        if !(capacitance.is_finite() && capacitance >= 0.0) {
            return Err(invalid(format!(
                "load capacitance must be >= 0, got {capacitance}"
            )));
        }
        Ok(Self {
            resistance,
            capacitance,
        })
    }

    pub fn open() -> Self {
        Self {
            resistance: f64::INFINITY,
            capacitance: 0.0,
        }
    }

    pub fn conductance(&self) -> f64 {
        1.0 / self.resistance
    }
}

/// Load seen by the channel: the buffer input when conditioned, the bare
/// digital pin otherwise. Uses the compiled-in calibration.
pub fn receiver_load(conditioned: bool) -> LoadModel {
    Calibration::default().receiver_load(conditioned)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferConfig {
    /// Single-pole bandwidth.
    pub bandwidth: f64,
    pub input_load: LoadModel,
}

impl Default for BufferConfig {
    fn default() -> Self {
        Self {
            bandwidth: 1.0e9,
            input_load: LoadModel {
                resistance: 10.0e6,
                capacitance: 1.0e-12,
            },
        }
    }
}

impl BufferConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth.is_finite() && self.bandwidth > 0.0) {
            return Err(invalid(format!(
                "buffer bandwidth must be > 0, got {}",
                self.bandwidth
            )));
        }
        LoadModel::new(self.input_load.resistance, self.input_load.capacitance)?;
        Ok(())
    }

    pub fn transfer_function(&self) -> TransferFunction {
        TransferFunction::new(vec![1.0], vec![1.0, 1.0 / (TAU * self.bandwidth)])
            .expect("positive bandwidth")
    }
}

/// Unity-gain follower with a single pole at `cfg.bandwidth`.
pub fn buffer_apply(cfg: &BufferConfig, input: &Waveform) -> Result<Waveform> {
    cfg.validate()?;
    cfg.transfer_function().apply(input)
}

/// Non-inverting Schmitt trigger: input through `r1` to the non-inverting
/// node, `r2` fed back from the output, `v_ref` on the inverting input.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchmittConfig {
    pub r1: f64,
    pub r2: f64,
    pub v_ref: f64,
    pub v_out_low: f64,
    pub v_out_high: f64,
}

impl Default for SchmittConfig {
    fn default() -> Self {
        Self {
            r1: 3_300.0,
            r2: 10_000.0,
            v_ref: 2.5,
            v_out_low: 0.8,
            v_out_high: 4.8,
        }
    }
}

impl SchmittConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r1 > 0.0 && self.r2 > 0.0 && self.r1.is_finite() && self.r2.is_finite()) {
            return Err(invalid("Schmitt resistors must be positive and finite"));
        }
        if !(self.v_out_low < self.v_ref && self.v_ref < self.v_out_high) {
            return Err(invalid(
                "Schmitt levels must satisfy v_out_low < v_ref < v_out_high",
            ));
        }
        Ok(())
    }

    pub fn output_voltage(&self, state: SchmittState) -> f64 {
        if state.output_high {
            self.v_out_high
        } else {
            self.v_out_low
        }
    }

    /// Midpoint between the two output levels.
    pub fn logic_threshold(&self) -> f64 {
        0.5 * (self.v_out_low + self.v_out_high)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SchmittState {
    pub output_high: bool,
}

/// Input trip points `(falling, rising)`.
///
/// The non-inverting node sits at `v_ref` when
/// `v_in = v_ref (r1 + r2) / r2 − v_out r1 / r2`; the falling trip happens
/// while the output is high, the rising trip while it is low.
pub fn schmitt_thresholds(cfg: &SchmittConfig) -> (f64, f64) {
    let gain = (cfg.r1 + cfg.r2) / cfg.r2;
    let feedback = cfg.r1 / cfg.r2;
    let trip = |v_out: f64| cfg.v_ref * gain - v_out * feedback;
    (trip(cfg.v_out_high), trip(cfg.v_out_low))
}

pub fn schmitt_step(cfg: &SchmittConfig, state: SchmittState, v_in: f64) -> (SchmittState, f64) {
    let (low, high) = schmitt_thresholds(cfg);
    let output_high = if state.output_high {
        v_in > low
    } else {
        v_in >= high
    };
    let next = SchmittState { output_high };
    (next, cfg.output_voltage(next))
}

/// Runs the trigger over a whole waveform. The initial state is high only
/// if the first sample already clears the rising trip point.
pub fn schmitt_apply(cfg: &SchmittConfig, input: &Waveform) -> Result<Waveform> {
    cfg.validate()?;
    let (_, high) = schmitt_thresholds(cfg);
    let mut state = SchmittState {
        output_high: input.samples()[0] >= high,
    };
    let out = input
        .samples()
        .iter()
        .map(|&v| {
            let (next, v_out) = schmitt_step(cfg, state, v);
            state = next;
            v_out
        })
        .collect();
    Ok(input.with_samples(out))
}
