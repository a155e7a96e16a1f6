/// Storage voltage after one ideal-diode pump stroke (C_var from `c_max` down
/// to `c_min`).
///
/// At `c_max` the variable capacitor holds `c_max·v_res`; while it shrinks
/// it shares that charge with the storage capacitor through D2. Below the
/// pump regime (`v_store < v_res`) the two diodes first charge the storage
/// capacitor straight up to `v_res`. Above saturation D2 never opens and the
/// storage voltage is left unchanged.
pub fn charge_pump_cycle(v_store: f64, v_res: f64, c_max: f64, c_min: f64, c_store: f64) -> f64 {
    let start = v_store.max(v_res);
    let shared = (c_max * v_res + c_store * start) / (c_min + c_store);
    shared.max(start)
}

/// Fixed point of [`charge_pump_cycle`]: `v_res·c_max/c_min`.
pub fn pump_saturation(v_res: f64, c_max: f64, c_min: f64) -> f64 {
    v_res * c_max / c_min
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_stroke_from_precharge() {
        let v = charge_pump_cycle(5.0, 5.0, 208e-12, 47e-12, 2.2e-9);
        assert!((v - 5.358_255).abs() < 1e-6, "{v}");
    }

    #[test]
    fn fixed_point() {
        let sat = pump_saturation(5.0, 208e-12, 47e-12);
        assert!((sat - 22.127_66).abs() < 1e-4);
        let v = charge_pump_cycle(sat, 5.0, 208e-12, 47e-12, 2.2e-9);
        assert!((v - sat).abs() < 1e-12);
    }

    #[test]
    fn degenerate_pump_holds_reservoir_voltage() {
        assert_eq!(charge_pump_cycle(5.0, 5.0, 1e-10, 1e-10, 1e-9), 5.0);
        assert_eq!(charge_pump_cycle(2.0, 5.0, 1e-10, 1e-10, 1e-9), 5.0);
    }

    #[test]
    fn above_saturation_is_unchanged() {
        assert_eq!(charge_pump_cycle(30.0, 5.0, 208e-12, 47e-12, 2.2e-9), 30.0);
    }
}
