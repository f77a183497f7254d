//! Electrical model of an electrolyte-filled tube.
//!
//! The tube is a bulk ionic resistance in series with two electrode
//! interfaces, one per terminal. Each interface is a double-layer
//! capacitance shunted by a DC leakage resistance. A parasitic capacitance
//! sits across the receiving end. With an infinite leakage resistance the
//! impedance reduces to `r_bulk + 2 / (jωC)`.

use std::f64::consts::TAU;
use std::fmt::Write as _;

use num_complex::Complex64;

use crate::afe::LoadModel;
use crate::calibration::Calibration;
use crate::error::{invalid, Error, Result};
use crate::filter::TransferFunction;
use crate::waveform::Waveform;

pub type Impedance = Complex64;

/// Measured `(length m, plateau resistance Ω)` pairs for the 3 M ZnI₂ tube.
pub const MEASURED_PLATEAUS: [(f64, f64); 2] = [(0.2, 2_000.0), (1.4, 20_000.0)];

/// Frequency at which the knee calibration is pinned.
pub const KNEE_FREQ_HZ: f64 = 1_000.0;

/// Default tube lengths swept by the experiments.
pub const DEFAULT_LENGTHS: [f64; 7] = [0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4];

#[derive(Debug, Clone, PartialEq)]
pub struct Electrolyte {
    pub salt: String,
    /// mol/L
    pub molarity: f64,
    pub solvent_note: String,
}

impl Default for Electrolyte {
    fn default() -> Self {
        Self {
            salt: "ZnI2".into(),
            molarity: 3.0,
            solvent_note: "DI water + 10 wt% ethanol".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelSpec {
    pub length: f64,
    pub inner_diameter: f64,
    pub electrolyte: Electrolyte,
    /// Ω/m
    pub r_per_length: f64,
    /// Lumped contact resistance. May be negative when it only corrects the
    /// intercept of a length fit; the total bulk resistance must stay > 0.
    pub r_contact: f64,
    /// Double-layer capacitance per terminal.
    pub c_interface: f64,
    /// Leakage resistance across each double layer; `INFINITY` for none.
    pub r_interface: f64,
    pub c_shunt: f64,
}

impl ChannelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.length.is_finite() && self.length > 0.0) {
            return Err(invalid(format!(
                "channel length must be > 0, got {}",
                self.length
            )));
        }
        if !(self.inner_diameter.is_finite() && self.inner_diameter > 0.0) {
            return Err(invalid("inner diameter must be > 0"));
        }
        if !(self.r_per_length.is_finite() && self.r_contact.is_finite()) {
            return Err(invalid("channel resistances must be finite"));
        }
        if !(self.r_bulk() > 0.0) {
            return Err(invalid(format!(
                "bulk resistance must be > 0, got {} ohm at {} m",
                self.r_bulk(),
                self.length
            )));
        }
        if !(self.c_interface.is_finite() && self.c_interface > 0.0) {
            return Err(invalid("interface capacitance must be finite and > 0"));
        }
        if self.r_interface.is_nan() || self.r_interface <= 0.0 {
            return Err(invalid("interface leakage resistance must be > 0"));
        }
        if !(self.c_shunt.is_finite() && self.c_shunt >= 0.0) {
            return Err(invalid("shunt capacitance must be finite and >= 0"));
        }
        Ok(())
    }

    /// High-frequency plateau resistance.
    pub fn r_bulk(&self) -> f64 {
        self.r_contact + self.r_per_length * self.length
    }

    /// Channel of `length` metres calibrated against the measured plateaus.
    ///
    /// The interfaces are sized so that the DC resistance exceeds the
    /// plateau by `interface_dc_excess` and `|Z(1 kHz)|` exceeds it by
    /// exactly `knee_excess`.
    pub fn calibrated(length: f64, cal: &Calibration) -> Result<Self> {
        let fit = fit_channel(&MEASURED_PLATEAUS, false)?;
        let mut spec = Self {
            length,
            inner_diameter: 5.0e-3,
            electrolyte: Electrolyte::default(),
            r_per_length: fit.r_per_length,
            r_contact: fit.r_contact,
            c_interface: 1.0,
            r_interface: f64::INFINITY,
            c_shunt: cal.c_shunt,
        };
        if !(length.is_finite() && length > 0.0) {
            return Err(invalid(format!("channel length must be > 0, got {length}")));
        }
        let r = spec.r_bulk();
        let (c, leak) = interface_for_knee(r, cal.interface_dc_excess, cal.knee_excess)?;
        spec.c_interface = c;
        spec.r_interface = leak;
        spec.validate()?;
        Ok(spec)
    }

    /// Corner frequency of one interface (`1 / 2πRC`); zero without leakage.
    pub fn interface_corner_hz(&self) -> f64 {
        1.0 / (TAU * self.r_interface * self.c_interface)
    }
}

/// `(c_interface, r_interface)` giving DC resistance `r (1 + excess)` and
/// `|Z(KNEE_FREQ_HZ)| = r (1 + knee)`.
///
/// With `x = excess` and `u = 1 / (1 + (f/f_c)²)`, the magnitude is
/// `|Z|² = r² (1 + (2x + x²) u)`, which pins `u` at the knee frequency.
fn interface_for_knee(r: f64, excess: f64, knee: f64) -> Result<(f64, f64)> {
    let target = (1.0 + knee).powi(2) - 1.0;
    if excess.is_infinite() {
        // Pure capacitors: 2 / (ωC) = r sqrt(target).
        let c = 2.0 / (TAU * KNEE_FREQ_HZ * r * target.sqrt());
        return Ok((c, f64::INFINITY));
    }
    let u = target / (2.0 * excess + excess * excess);
    if u >= 1.0 {
        return Err(invalid(format!(
            "interface DC excess {excess} cannot reach a {knee} knee excess"
        )));
    }
    let corner = KNEE_FREQ_HZ / (1.0 / u - 1.0).sqrt();
    let leak = 0.5 * excess * r;
    Ok((1.0 / (TAU * corner * leak), leak))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelFit {
    pub r_per_length: f64,
    pub r_contact: f64,
}

impl ChannelFit {
    pub fn resistance_at(&self, length: f64) -> f64 {
        self.r_contact + self.r_per_length * length
    }
}

/// Least-squares `R(l) = r_contact + r_per_length · l`.
///
/// With `constrain_contact_nonneg`, a negative intercept triggers a refit
/// through the origin.
pub fn fit_channel(
    measurements: &[(f64, f64)],
    constrain_contact_nonneg: bool,
) -> Result<ChannelFit> {
    if measurements.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: measurements.len(),
        });
    }
    for &(l, r) in measurements {
        if !(l.is_finite() && l > 0.0) {
            return Err(invalid(format!("length must be > 0, got {l}")));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(invalid(format!("resistance must be > 0, got {r}")));
        }
    }
    let n = measurements.len() as f64;
    let mean_l = measurements.iter().map(|m| m.0).sum::<f64>() / n;
    let mean_r = measurements.iter().map(|m| m.1).sum::<f64>() / n;
    let sxx: f64 = measurements.iter().map(|m| (m.0 - mean_l).powi(2)).sum();
    let sxy: f64 = measurements
        .iter()
        .map(|m| (m.0 - mean_l) * (m.1 - mean_r))
        .sum();
    if sxx <= f64::EPSILON * mean_l * mean_l * n {
        return Err(invalid("measurements need at least two distinct lengths"));
    }
    let slope = sxy / sxx;
    let intercept = mean_r - slope * mean_l;
    if constrain_contact_nonneg && intercept < 0.0 {
        let sll: f64 = measurements.iter().map(|m| m.0 * m.0).sum();
        let slr: f64 = measurements.iter().map(|m| m.0 * m.1).sum();
        return Ok(ChannelFit {
            r_per_length: slr / sll,
            r_contact: 0.0,
        });
    }
    Ok(ChannelFit {
        r_per_length: slope,
        r_contact: intercept,
    })
}

fn check_freq(f: f64) -> Result<()> {
    if f.is_finite() && f > 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("frequency must be > 0, got {f}")))
    }
}

/// Series impedance of the channel at `f` Hz.
pub fn impedance(spec: &ChannelSpec, f: f64) -> Result<Impedance> {
    check_freq(f)?;
    let jw = Complex64::new(0.0, TAU * f);
    let interface_admittance = jw * spec.c_interface + 1.0 / spec.r_interface;
    Ok(spec.r_bulk() + 2.0 / interface_admittance)
}

/// Impedance sweep points: 20 Hz steps to 2 kHz, 500 Hz steps to 100 kHz,
/// 5 kHz steps to 1 MHz.
pub fn sweep_grid() -> Vec<f64> {
    let low = (1..=100).map(|k| 20 * k);
    let mid = (1..=196).map(|k| 2_000 + 500 * k);
    let high = (1..=180).map(|k| 100_000 + 5_000 * k);
    low.chain(mid).chain(high).map(|f| f as f64).collect()
}

/// Voltage divider gain from source to receiver across `load`.
pub fn transfer_gain(spec: &ChannelSpec, load: &LoadModel, f: f64) -> Result<Complex64> {
    let z = impedance(spec, f)?;
    let jw = Complex64::new(0.0, TAU * f);
    let y = load.conductance() + jw * (load.capacitance + spec.c_shunt);
    Ok(1.0 / (1.0 + z * y))
}

/// Rational form of [`transfer_gain`].
///
/// With interface admittance `g + sC`, series `Z = (r(g + sC) + 2)/(g + sC)`
/// and load admittance `G + sCt`:
/// `H = (g + sC) / ((g + sC) + (rg + 2 + s rC)(G + sCt))`.
pub fn transfer_function(spec: &ChannelSpec, load: &LoadModel) -> Result<TransferFunction> {
    spec.validate()?;
    LoadModel::new(load.resistance, load.capacitance)?;
    let r = spec.r_bulk();
    let g = 1.0 / spec.r_interface;
    let c = spec.c_interface;
    let big_g = load.conductance();
    let ct = load.capacitance + spec.c_shunt;
    let series_dc = r * g + 2.0;
    TransferFunction::new(
        vec![g, c],
        vec![
            g + series_dc * big_g,
            c + series_dc * ct + r * c * big_g,
            r * c * ct,
        ],
    )
}

/// Time-domain response of the channel into `load`, from a line that has
/// been resting at the first input sample.
pub fn propagate(spec: &ChannelSpec, load: &LoadModel, input: &Waveform) -> Result<Waveform> {
    transfer_function(spec, load)?.apply(input)
}

/// CSV of the impedance over [`sweep_grid`].
pub fn sweep_csv(spec: &ChannelSpec) -> Result<String> {
    let mut out = String::from("freq_hz,z_real_ohm,z_imag_ohm,z_mag_ohm\n");
    for f in sweep_grid() {
        let z = impedance(spec, f)?;
        writeln!(out, "{f},{:.6},{:.6},{:.6}", z.re, z.im, z.norm()).expect("string write");
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calibrated(length: f64) -> ChannelSpec {
        ChannelSpec::calibrated(length, &Calibration::default()).unwrap()
    }

    #[test]
    fn fit_constrained_refits_through_origin() {
        let data = [(0.2, 2_000.0), (1.4, 20_000.0)];
        let free = fit_channel(&data, false).unwrap();
        assert!((free.r_per_length - 15_000.0).abs() < 1e-9);
        assert!((free.r_contact + 1_000.0).abs() < 1e-9);

        let fit = fit_channel(&data, true).unwrap();
        // Σ(l·R) / Σ(l²) = 28 400 / 2.0
        assert!((fit.r_per_length - 14_200.0).abs() < 1e-9);
        assert_eq!(fit.r_contact, 0.0);
        assert!((fit.resistance_at(1.4) / 20_000.0 - 1.0).abs() <= 0.15);
    }

    #[test]
    fn fit_proportional_data() {
        let fit = fit_channel(&[(1.0, 10_000.0), (2.0, 20_000.0)], true).unwrap();
        assert!((fit.r_per_length - 10_000.0).abs() < 1e-9);
        assert!(fit.r_contact.abs() < 1e-9);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            fit_channel(&[(1.0, 10.0)], true),
            Err(Error::InsufficientData { needed: 2, got: 1 })
        ));
        assert!(fit_channel(&[(0.0, 10.0), (1.0, 20.0)], true).is_err());
        assert!(fit_channel(&[(-1.0, 10.0), (1.0, 20.0)], true).is_err());
        assert!(fit_channel(&[(1.0, 0.0), (2.0, 20.0)], true).is_err());
        assert!(fit_channel(&[(1.0, 10.0), (1.0, 20.0)], true).is_err());
    }

    #[test]
    fn sweep_grid_shape() {
        let grid = sweep_grid();
        assert_eq!(grid.len(), 100 + 196 + 180);
        assert_eq!(grid[0], 20.0);
        assert_eq!(*grid.last().unwrap(), 1.0e6);
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(grid.iter().filter(|&&f| f == 2_000.0).count(), 1);
        assert_eq!(grid.iter().filter(|&&f| f == 100_000.0).count(), 1);
    }

    #[test]
    fn impedance_tends_to_bulk() {
        let spec = calibrated(1.4);
        let z = impedance(&spec, 1.0e9).unwrap();
        assert!((z.norm() / spec.r_bulk() - 1.0).abs() < 1e-3);
        assert!(impedance(&spec, 0.0).is_err());
        assert!(impedance(&spec, -5.0).is_err());
    }

    #[test]
    fn calibrated_plateau_and_knee() {
        let spec = calibrated(1.4);
        let z10k = impedance(&spec, 10.0e3).unwrap().norm();
        assert!((z10k / 20_000.0 - 1.0).abs() < 0.05, "{z10k}");
        let knee = impedance(&spec, KNEE_FREQ_HZ).unwrap().norm();
        assert!((knee / spec.r_bulk() - 1.05).abs() < 1e-12);
        let z20 = impedance(&spec, 20.0).unwrap().norm();
        let z2k = impedance(&spec, 2_000.0).unwrap().norm();
        assert!(z20 > 1.05 * z2k);
    }

    #[test]
    fn pure_capacitor_interfaces_follow_closed_form() {
        let cal = Calibration {
            interface_dc_excess: f64::INFINITY,
            ..Calibration::default()
        };
        let spec = ChannelSpec::calibrated(1.4, &cal).unwrap();
        assert!(spec.r_interface.is_infinite());
        for f in [20.0, 1.0e3, 1.0e5] {
            let expect = Complex64::new(spec.r_bulk(), -2.0 / (TAU * f * spec.c_interface));
            assert!((impedance(&spec, f).unwrap() - expect).norm() < 1e-9);
        }
        let knee = impedance(&spec, KNEE_FREQ_HZ).unwrap().norm();
        assert!((knee / spec.r_bulk() - 1.05).abs() < 1e-12);
    }

    #[test]
    fn open_circuit_gain_is_unity() {
        let mut spec = calibrated(1.4);
        spec.c_shunt = 0.0;
        for f in [1.0, 1.0e3, 1.0e6, 1.0e9] {
            let g = transfer_gain(&spec, &LoadModel::open(), f).unwrap();
            assert!((g.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn unconditioned_rolloff() {
        let spec = calibrated(1.4);
        let load = Calibration::default().receiver_load(false);
        let g10k = transfer_gain(&spec, &load, 10.0e3).unwrap().norm();
        let g10m = transfer_gain(&spec, &load, 10.0e6).unwrap().norm();
        assert!(g10m < 0.1 * g10k, "{g10m} vs {g10k}");
    }

    #[test]
    fn minus_3db_matches_single_pole_oracle() {
        let mut spec = calibrated(1.4);
        assert!((spec.r_bulk() - 20_000.0).abs() < 1e-6);
        spec.c_shunt = 8.0e-12;
        let oracle = 1.0 / (TAU * 20_000.0 * 8.0e-12);
        let load = LoadModel::open();
        let (mut lo, mut hi) = (1.0e4_f64, 1.0e8_f64);
        for _ in 0..200 {
            let mid = (lo * hi).sqrt();
            if transfer_gain(&spec, &load, mid).unwrap().norm() > std::f64::consts::FRAC_1_SQRT_2 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        assert!((lo / oracle - 1.0).abs() < 0.02, "{lo} vs {oracle}");
        assert!((oracle / 0.99e6 - 1.0).abs() < 0.01);
    }

    #[test]
    fn gain_never_exceeds_unity() {
        let spec = calibrated(0.6);
        for load in [
            LoadModel::open(),
            Calibration::default().receiver_load(false),
        ] {
            for f in sweep_grid() {
                assert!(transfer_gain(&spec, &load, f).unwrap().norm() <= 1.0 + 1e-12);
            }
        }
    }

    #[test]
    fn rational_form_matches_divider() {
        let spec = calibrated(0.8);
        let load = Calibration::default().receiver_load(false);
        let tf = transfer_function(&spec, &load).unwrap();
        for f in [10.0, 1.0e3, 1.0e5, 1.0e7] {
            let a = tf.response(f);
            let b = transfer_gain(&spec, &load, f).unwrap();
            assert!((a - b).norm() < 1e-9 * b.norm().max(1e-6));
        }
    }

    #[test]
    fn dc_settles_through_open_load() {
        let spec = calibrated(1.4);
        let w = Waveform::constant(1.0e6, 5.0, 5_000).unwrap();
        let out = propagate(&spec, &LoadModel::open(), &w).unwrap();
        assert!((out.samples().last().unwrap() - 5.0).abs() < 0.05);
    }

    #[test]
    fn rejects_non_positive_length() {
        assert!(ChannelSpec::calibrated(0.0, &Calibration::default()).is_err());
        assert!(ChannelSpec::calibrated(-0.5, &Calibration::default()).is_err());
    }

    #[test]
    fn sweep_csv_header_and_rows() {
        let csv = sweep_csv(&calibrated(1.4)).unwrap();
        let mut lines = csv.lines();
        assert_eq!(
            lines.next(),
            Some("freq_hz,z_real_ohm,z_imag_ohm,z_mag_ohm")
        );
        assert_eq!(lines.count(), 476);
        assert!(csv.lines().nth(1).unwrap().starts_with("20,"));
    }
}
