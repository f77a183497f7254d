//! Two-cell zinc–iodide flow battery module: open-circuit voltage, IR drop,
//! constant-current cycling and the boost-converter power budget.

use std::fmt::{self, Write as _};

use crate::calibration::Calibration;
use crate::error::{invalid, Error, Result};

pub const CELLS_IN_SERIES: f64 = 2.0;

/// Measured operating point of the module: current (A) and terminal voltage (V).
pub const OPERATING_CURRENT: f64 = 0.124;
pub const OPERATING_VOLTAGE: f64 = 2.2;

pub const SOC_MIN: f64 = 0.05;
pub const SOC_MAX: f64 = 0.95;

/// Allowed overshoot of the effective current limit.
pub const CURRENT_SAFETY_FACTOR: f64 = 1.5;

pub const BOOST_EFFICIENCY: f64 = 0.80;
/// Electronic module draw (W).
pub const NODE_LOAD_POWER: f64 = 0.050;

#[derive(Debug, Clone, PartialEq)]
pub struct CellConfig {
    pub ocv_anchor_soc: f64,
    pub ocv_anchor_volts: f64,
    /// V per unit state of charge.
    pub ocv_slope: f64,
    pub electrode_area_cm2: f64,
    pub rated_current_density_ma_cm2: f64,
    pub rated_current_limit_ma: f64,
    /// Coulombs between empty and full.
    pub capacity: f64,
    /// Per cell, Ω.
    pub internal_resistance: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self::with_slope(0.25)
    }
}

impl CellConfig {
    pub fn from_calibration(cal: &Calibration) -> Self {
        Self::with_slope(cal.ocv_slope)
    }

    /// Internal resistance is solved from the measured operating point at
    /// the anchor state of charge; capacity is sized so a full 5–95 %
    /// half-cycle at the operating current lasts one hour.
    fn with_slope(ocv_slope: f64) -> Self {
        let ocv_anchor_volts = 1.2;
        let drop = CELLS_IN_SERIES * ocv_anchor_volts - OPERATING_VOLTAGE;
        Self {
            ocv_anchor_soc: 0.20,
            ocv_anchor_volts,
            ocv_slope,
            electrode_area_cm2: 20.0,
            rated_current_density_ma_cm2: 50.0,
            rated_current_limit_ma: 100.0,
            capacity: OPERATING_CURRENT * 3_600.0 / (SOC_MAX - SOC_MIN),
            internal_resistance: drop / OPERATING_CURRENT / CELLS_IN_SERIES,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.electrode_area_cm2 > 0.0) {
            return Err(invalid("electrode area must be > 0"));
        }
        if !(self.capacity > 0.0) {
            return Err(invalid("capacity must be > 0"));
        }
        if !(self.ocv_anchor_soc > 0.0 && self.ocv_anchor_soc < 1.0) {
            return Err(invalid("OCV anchor state of charge must lie in (0, 1)"));
        }
        if !(self.internal_resistance >= 0.0) {
            return Err(invalid("internal resistance must be >= 0"));
        }
        Ok(())
    }

    /// Series resistance of the whole module.
    pub fn module_resistance(&self) -> f64 {
        CELLS_IN_SERIES * self.internal_resistance
    }
}

fn check_soc(soc: f64) -> Result<()> {
    if (0.0..=1.0).contains(&soc) {
        Ok(())
    } else {
        Err(invalid(format!(
            "state of charge must lie in [0, 1], got {soc}"
        )))
    }
}

/// Single-cell open-circuit voltage, linear through the anchor point.
pub fn ocv(cfg: &CellConfig, soc: f64) -> Result<f64> {
    check_soc(soc)?;
    Ok(cfg.ocv_anchor_volts + cfg.ocv_slope * (soc - cfg.ocv_anchor_soc))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatedCurrent {
    /// Current density times electrode area, mA.
    pub density_limit_ma: f64,
    pub stated_limit_ma: f64,
}

impl RatedCurrent {
    pub fn effective_ma(&self) -> f64 {
        self.density_limit_ma.min(self.stated_limit_ma)
    }
}

pub fn rated_current(cfg: &CellConfig) -> RatedCurrent {
    RatedCurrent {
        density_limit_ma: cfg.rated_current_density_ma_cm2 * cfg.electrode_area_cm2,
        stated_limit_ma: cfg.rated_current_limit_ma,
    }
}

/// Module terminal voltage; `current` is positive on discharge.
pub fn terminal_voltage(cfg: &CellConfig, soc: f64, current: f64) -> Result<f64> {
    let limit = rated_current(cfg).effective_ma() * 1e-3 * CURRENT_SAFETY_FACTOR;
    if !(current.abs() <= limit) {
        return Err(Error::OverCurrent {
            current_a: current,
            limit_a: limit,
        });
    }
    Ok(CELLS_IN_SERIES * ocv(cfg, soc)? - current * cfg.module_resistance())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModuleState {
    pub soc: f64,
    pub terminal_voltage: f64,
    /// Positive on discharge.
    pub current: f64,
}

impl ModuleState {
    /// The catholyte turns dark red once more than half charged.
    pub fn charged(&self) -> bool {
        self.soc > 0.5
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Phase {
    Charge,
    Discharge,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Charge => "charge",
            Phase::Discharge => "discharge",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CycleSample {
    pub t: f64,
    pub phase: Phase,
    pub state: ModuleState,
}

/// Constant-current cycling between [`SOC_MIN`] and [`SOC_MAX`], starting
/// empty with a charge. Each half-cycle emits its own first and last
/// sample, so the IR step shows at every reversal.
pub fn cycle(cfg: &CellConfig, n_cycles: usize, current: f64, dt: f64) -> Result<Vec<CycleSample>> {
    cfg.validate()?;
    if n_cycles == 0 {
        return Err(invalid("need at least one cycle"));
    }
    if !(current > 0.0) {
        return Err(invalid("cycling current magnitude must be > 0"));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("time step must be > 0"));
    }
    let mut trace = Vec::new();
    let mut t = 0.0;
    let mut soc = SOC_MIN;
    for half in 0..2 * n_cycles {
        let (phase, signed, target) = if half % 2 == 0 {
            (Phase::Charge, -current, SOC_MAX)
        } else {
            (Phase::Discharge, current, SOC_MIN)
        };
        let mut emit = |t: f64, soc: f64| -> Result<()> {
            trace.push(CycleSample {
                t,
                phase,
                state: ModuleState {
                    soc,
                    terminal_voltage: terminal_voltage(cfg, soc, signed)?,
                    current: signed,
                },
            });
            Ok(())
        };
        emit(t, soc)?;
        while soc != target {
            let remaining = (target - soc).abs() * cfg.capacity / current;
            if remaining <= dt {
                t += remaining;
                soc = target;
            } else {
                t += dt;
                soc = (soc - signed * dt / cfg.capacity).clamp(SOC_MIN, SOC_MAX);
            }
            emit(t, soc)?;
        }
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfCycle {
    pub phase: Phase,
    pub start: f64,
    pub duration: f64,
    /// Energy into the module on charge, out of it on discharge (J).
    pub energy: f64,
}

/// Splits a trace into half-cycles and integrates `|V·I|` over each.
pub fn half_cycles(trace: &[CycleSample]) -> Vec<HalfCycle> {
    let mut out: Vec<HalfCycle> = Vec::new();
    let mut prev: Option<&CycleSample> = None;
    for s in trace {
        match prev {
            Some(p) if p.phase == s.phase => {
                let power = 0.5
                    * (p.state.terminal_voltage * p.state.current
                        + s.state.terminal_voltage * s.state.current)
                        .abs();
                let last = out.last_mut().expect("half-cycle started");
                last.energy += power * (s.t - p.t);
                last.duration = s.t - last.start;
            }
            _ => out.push(HalfCycle {
                phase: s.phase,
                start: s.t,
                duration: 0.0,
                energy: 0.0,
            }),
        }
        prev = Some(s);
    }
    out
}

pub fn cycle_csv(trace: &[CycleSample]) -> String {
    let mut out = String::from("t_s,soc,voltage_v,current_a,phase\n");
    for s in trace {
        writeln!(
            out,
            "{:.3},{:.6},{:.6},{:.6},{}",
            s.t, s.state.soc, s.state.terminal_voltage, s.state.current, s.phase
        )
        .expect("string write");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerBudget {
    pub module_power: f64,
    pub boost_efficiency: f64,
    pub load_power: f64,
    pub margin: f64,
}

impl PowerBudget {
    pub fn sufficient(&self) -> bool {
        self.margin >= 0.0
    }
}

pub fn power_budget(
    module_power: f64,
    boost_efficiency: f64,
    load_power: f64,
) -> Result<PowerBudget> {
    if !(module_power >= 0.0 && load_power >= 0.0) {
        return Err(invalid("powers must be >= 0"));
    }
    if !(boost_efficiency > 0.0 && boost_efficiency <= 1.0) {
        return Err(invalid("boost efficiency must lie in (0, 1]"));
    }
    Ok(PowerBudget {
        module_power,
        boost_efficiency,
        load_power,
        margin: module_power * boost_efficiency - load_power,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ocv_anchor_and_slope() {
        let cfg = CellConfig::default();
        assert!((ocv(&cfg, 0.20).unwrap() - 1.2).abs() < 1e-12);
        assert!((CELLS_IN_SERIES * ocv(&cfg, 0.20).unwrap() - 2.4).abs() < 1e-12);
        assert!((ocv(&cfg, 1.0).unwrap() - 1.4).abs() < 1e-12);
        assert!(ocv(&cfg, 1.01).is_err());
        assert!(ocv(&cfg, -0.01).is_err());
    }

    #[test]
    fn terminal_voltage_operating_points() {
        let cfg = CellConfig::default();
        assert!((terminal_voltage(&cfg, 0.2, 0.0).unwrap() - 2.4).abs() < 1e-12);
        assert!((terminal_voltage(&cfg, 0.2, 0.124).unwrap() - 2.2).abs() < 1e-12);
        assert!((terminal_voltage(&cfg, 0.2, -0.124).unwrap() - 2.6).abs() < 1e-12);
        assert!((cfg.module_resistance() - 0.2 / 0.124).abs() < 1e-12);
    }

    #[test]
    fn over_current_is_rejected() {
        let cfg = CellConfig::default();
        assert!(terminal_voltage(&cfg, 0.5, 0.150).is_ok());
        assert!(matches!(
            terminal_voltage(&cfg, 0.5, 0.151),
            Err(Error::OverCurrent { .. })
        ));
        assert!(terminal_voltage(&cfg, 0.5, -0.2).is_err());
    }

    #[test]
    fn rated_current_pair() {
        let r = rated_current(&CellConfig::default());
        assert_eq!(r.density_limit_ma, 1_000.0);
        assert_eq!(r.stated_limit_ma, 100.0);
        assert_eq!(r.effective_ma(), 100.0);

        let small = CellConfig {
            electrode_area_cm2: 2.0,
            ..CellConfig::default()
        };
        let r = rated_current(&small);
        assert_eq!(r.density_limit_ma, 100.0);
        assert_eq!(r.density_limit_ma, r.stated_limit_ma);
    }

    #[test]
    fn budget_arithmetic() {
        let p = OPERATING_CURRENT * OPERATING_VOLTAGE;
        assert!((p - 0.2728).abs() < 1e-12);
        let b = power_budget(p, BOOST_EFFICIENCY, NODE_LOAD_POWER).unwrap();
        assert!((b.margin - 0.16824).abs() < 1e-12);
        assert!(b.sufficient());

        let edge = power_budget(0.05, 1.0, 0.05).unwrap();
        assert_eq!(edge.margin, 0.0);
        assert!(edge.sufficient());

        assert!(power_budget(0.1, 0.0, 0.05).is_err());
        assert!(power_budget(0.1, 1.1, 0.05).is_err());
        assert!(power_budget(-0.1, 0.5, 0.05).is_err());
    }

    #[test]
    fn five_cycles_ten_half_cycles() {
        let cfg = CellConfig::default();
        let trace = cycle(&cfg, 5, OPERATING_CURRENT, 1.0).unwrap();
        let halves = half_cycles(&trace);
        assert_eq!(halves.len(), 10);
        let expect = cfg.capacity * 0.90 / OPERATING_CURRENT;
        for h in &halves {
            assert!((h.duration - expect).abs() <= 1.0, "{}", h.duration);
        }
        assert!((expect - 3_600.0).abs() < 1e-9);
        assert!(trace
            .iter()
            .all(|s| (SOC_MIN..=SOC_MAX).contains(&s.state.soc)));
    }

    #[test]
    fn charge_voltage_exceeds_discharge_at_equal_soc() {
        let cfg = CellConfig::default();
        let trace = cycle(&cfg, 1, OPERATING_CURRENT, 10.0).unwrap();
        for c in trace.iter().filter(|s| s.phase == Phase::Charge) {
            let d = trace
                .iter()
                .find(|s| s.phase == Phase::Discharge && (s.state.soc - c.state.soc).abs() < 1e-9);
            if let Some(d) = d {
                assert!(c.state.terminal_voltage > d.state.terminal_voltage);
            }
        }
    }

    #[test]
    fn zero_cycles_rejected() {
        assert!(cycle(&CellConfig::default(), 0, 0.1, 1.0).is_err());
    }

    #[test]
    fn charged_flag_tracks_half_soc() {
        let s = ModuleState {
            soc: 0.6,
            terminal_voltage: 2.5,
            current: 0.0,
        };
        assert!(s.charged());
        assert!(!ModuleState { soc: 0.5, ..s }.charged());
    }

    #[test]
    fn csv_header() {
        let trace = cycle(&CellConfig::default(), 1, OPERATING_CURRENT, 600.0).unwrap();
        let csv = cycle_csv(&trace);
        assert!(csv.starts_with("t_s,soc,voltage_v,current_a,phase\n0.000,0.050000,"));
        assert!(csv.trim_end().ends_with(",discharge"));
    }
}
