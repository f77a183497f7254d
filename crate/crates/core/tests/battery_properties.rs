use proptest::prelude::*;

use ionoline::battery::{
    cycle, half_cycles, terminal_voltage, CellConfig, Phase, SOC_MAX, SOC_MIN,
};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ir_energy_bookkeeping(current in 0.02..0.15f64, dt in 1.0..60.0f64, n in 1usize..4) {
        let cfg = CellConfig::default();
        let trace = cycle(&cfg, n, current, dt).unwrap();
        let halves = half_cycles(&trace);
        prop_assert_eq!(halves.len(), 2 * n);
        let e_in: f64 = halves.iter().filter(|h| h.phase == Phase::Charge).map(|h| h.energy).sum();
        let e_out: f64 = halves.iter().filter(|h| h.phase == Phase::Discharge).map(|h| h.energy).sum();
        let t: f64 = halves.iter().map(|h| h.duration).sum();
        let ir = current * current * cfg.module_resistance() * t;
        prop_assert!(((e_in - e_out) / ir - 1.0).abs() < 0.01);
    }

    #[test]
    fn soc_stays_in_window_and_time_advances(current in 0.02..0.15f64, dt in 1.0..120.0f64) {
        let trace = cycle(&CellConfig::default(), 2, current, dt).unwrap();
        prop_assert!(trace.iter().all(|s| (SOC_MIN..=SOC_MAX).contains(&s.state.soc)));
        prop_assert!(trace.windows(2).all(|w| w[1].t >= w[0].t));
    }

    #[test]
    fn charging_voltage_sits_above_resting(soc in 0.0..1.0f64, current in 0.001..0.15f64) {
        let cfg = CellConfig::default();
        let rest = terminal_voltage(&cfg, soc, 0.0).unwrap();
        prop_assert!(terminal_voltage(&cfg, soc, -current).unwrap() > rest);
        prop_assert!(terminal_voltage(&cfg, soc, current).unwrap() < rest);
    }
}
