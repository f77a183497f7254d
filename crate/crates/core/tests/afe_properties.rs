use proptest::prelude::*;

use ionoline::afe::{schmitt_step, schmitt_thresholds, SchmittConfig, SchmittState};

proptest! {
    #[test]
    fn hysteresis_band(inputs in prop::collection::vec(0.0..5.0f64, 1..300), start_high: bool) {
        let cfg = SchmittConfig::default();
        let (low, high) = schmitt_thresholds(&cfg);
        let mut state = SchmittState { output_high: start_high };
        for v in inputs {
            let (next, out) = schmitt_step(&cfg, state, v);
            if next.output_high != state.output_high {
                let allowed = if next.output_high { v >= high } else { v <= low };
                prop_assert!(allowed, "switched at {} V", v);
            }
            if v > low && v < high {
                prop_assert_eq!(next, state);
            }
            prop_assert_eq!(out, cfg.output_voltage(next));
            state = next;
        }
    }

    #[test]
    fn wider_feedback_widens_band(r1 in 100.0..20_000.0f64, k in 1.01..3.0f64) {
        let narrow = SchmittConfig { r1, ..SchmittConfig::default() };
        let wide = SchmittConfig { r1: r1 * k, ..SchmittConfig::default() };
        let (a, b) = schmitt_thresholds(&narrow);
        let (c, d) = schmitt_thresholds(&wide);
        prop_assert!(d - c > b - a);
    }
}
