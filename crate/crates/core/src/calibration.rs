//! Free model parameters that are not fixed by measurements, loaded from a
//! plain-text `key = value` file.
//!
//! ```text
//! # comment
//! version = 2026.10-1
//! load.unconditioned.r_ohm = 10000
//! ```
//!
//! Missing keys keep their compiled-in defaults; unknown keys are errors.

use std::path::Path;

use crate::afe::{BufferConfig, LoadModel};
use crate::error::{Error, Result};

pub const DEFAULT_VERSION: &str = "2026.10-1";

#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub version: String,
    /// Digital input pin (plus wiring) seen by an unconditioned channel.
    pub unconditioned_load: LoadModel,
    pub buffer: BufferConfig,
    /// Parasitic capacitance at the receiving end of every channel.
    pub c_shunt: f64,
    /// DC resistance of both electrode interfaces relative to the bulk
    /// resistance. Infinite means purely capacitive interfaces.
    pub interface_dc_excess: f64,
    /// Fraction by which |Z(1 kHz)| exceeds the high-frequency plateau.
    pub knee_excess: f64,
    pub ocv_slope: f64,
}

impl Default for Calibration {
    fn default() -> Self {
        Self {
            version: DEFAULT_VERSION.to_owned(),
            unconditioned_load: LoadModel {
                resistance: 10.0e3,
                capacitance: 26.0e-12,
            },
            buffer: BufferConfig::default(),
            c_shunt: 1.0e-12,
            interface_dc_excess: 0.1,
            knee_excess: 0.05,
            ocv_slope: 0.25,
        }
    }
}

const KEYS: &[&str] = &[
    "version",
    "load.unconditioned.r_ohm",
    "load.unconditioned.c_f",
    "channel.c_shunt_f",
    "channel.interface_dc_excess",
    "channel.knee_excess",
    "buffer.bandwidth_hz",
    "buffer.input.r_ohm",
    "buffer.input.c_f",
    "battery.ocv_slope_v",
];

impl Calibration {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cal = Self::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let err = |message: String| Error::Calibration { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "version" {
                if value.is_empty() {
                    return Err(err("empty version".into()));
                }
                cal.version = value.to_owned();
                continue;
            }
            let number: f64 = value
                .parse()
                .map_err(|_| err(format!("`{value}` is not a number")))?;
            if number.is_nan() {
                return Err(err("NaN is not allowed".into()));
            }
            match key {
                "load.unconditioned.r_ohm" => cal.unconditioned_load.resistance = number,
                "load.unconditioned.c_f" => cal.unconditioned_load.capacitance = number,
                "channel.c_shunt_f" => cal.c_shunt = number,
                "channel.interface_dc_excess" => cal.interface_dc_excess = number,
                "channel.knee_excess" => cal.knee_excess = number,
                "buffer.bandwidth_hz" => cal.buffer.bandwidth = number,
                "buffer.input.r_ohm" => cal.buffer.input_load.resistance = number,
                "buffer.input.c_f" => cal.buffer.input_load.capacitance = number,
                "battery.ocv_slope_v" => cal.ocv_slope = number,
                _ => return Err(err(format!("unknown key `{key}`"))),
            }
        }
        cal.validate()?;
        Ok(cal)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` if it exists, otherwise the compiled-in defaults.
    pub fn load_or_default(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if path.exists() {
            Self::load(path)
        } else {
            Ok(Self::default())
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |message: &str| Error::Calibration {
            line: 0,
            message: message.to_owned(),
        };
        LoadModel::new(
            self.unconditioned_load.resistance,
            self.unconditioned_load.capacitance,
        )
        .map_err(|e| bad(&e.to_string()))?;
        self.buffer.validate().map_err(|e| bad(&e.to_string()))?;
        if !(self.c_shunt.is_finite() && self.c_shunt >= 0.0) {
            return Err(bad("channel.c_shunt_f must be finite and >= 0"));
        }
        if !(self.interface_dc_excess > 0.0) {
            return Err(bad("channel.interface_dc_excess must be > 0"));
        }
        if !(self.knee_excess.is_finite() && self.knee_excess > 0.0) {
            return Err(bad("channel.knee_excess must be > 0"));
        }
        if !self.ocv_slope.is_finite() {
            return Err(bad("battery.ocv_slope_v must be finite"));
        }
        Ok(())
    }

    pub fn receiver_load(&self, conditioned: bool) -> LoadModel {
        if conditioned {
            self.buffer.input_load
        } else {
            self.unconditioned_load
        }
    }

    /// Renders every key, so the output parses back to `self`.
    pub fn to_text(&self) -> String {
        let values = [
            self.version.clone(),
            self.unconditioned_load.resistance.to_string(),
            self.unconditioned_load.capacitance.to_string(),
            self.c_shunt.to_string(),
            self.interface_dc_excess.to_string(),
            self.knee_excess.to_string(),
            self.buffer.bandwidth.to_string(),
            self.buffer.input_load.resistance.to_string(),
            self.buffer.input_load.capacitance.to_string(),
            self.ocv_slope.to_string(),
        ];
        KEYS.iter()
            .zip(values)
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}
