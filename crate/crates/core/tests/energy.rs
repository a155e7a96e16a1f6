use ipop_core::config::RunConfig;
use ipop_core::device::BacksideDrieModel;
use ipop_core::energy::*;
use proptest::prelude::*;

/// Values computed by hand from E = V²ΔC·(C_max/C_min)/2 and P = 2fE.
const FROZEN: [(f64, f64, f64, f64, f64); 4] = [
    (214e-12, 140e-12, 255.0, 1.413_928_571e-9, 7.211_035_714e-7),
    (214e-12, 80e-12, 290.0, 4.480_625e-9, 2.598_762_5e-6),
    (181e-12, 107e-12, 255.0, 1.564_719_626e-9, 7.980_070_093e-7),
    (181e-12, 47e-12, 290.0, 6.450_531_915e-9, 3.741_308_511e-6),
];

#[test]
fn frozen_energy_and_power() {
    for (c_max, c_min, f, e, p) in FROZEN {
        let op = HarvestOperatingPoint::new(5.0, c_max, c_min, f);
        assert!((cycle_energy(&op).unwrap() / e - 1.0).abs() < 1e-9);
        assert!((harvested_power(&op).unwrap() / p - 1.0).abs() < 1e-9);
    }
}

#[test]
fn comb_grounded_density() {
    let op = RunConfig::from_preset("cc_grounded").unwrap().operating_point().unwrap();
    let d = power_density(&op).unwrap();
    assert!((d - 58.14).abs() < 0.05, "{d}");
    assert!((harvested_power(&op).unwrap() - 3.74e-6).abs() < 0.01e-6);
}

#[test]
fn projection_examples() {
    let drie = RunConfig::from_preset("pc_floating").unwrap().device_model().unwrap().drie;
    let d = drie_power_density_projection(5.0, 300.0, 204.5e-12, &drie, 20e-6, DEFAULT_DEVICE_VOLUME).unwrap();
    assert!((d / 76.71 - 1.0).abs() <= 0.10, "{d}");

    // unetched grounded proof-mass pair
    let base = BacksideDrieModel {
        cmin_baseline: 107e-12,
        cmin_plateau: 47e-12,
        ..Default::default()
    };
    let d0 = drie_power_density_projection(5.0, 255.0, 181e-12, &base, 0.0, DEFAULT_DEVICE_VOLUME).unwrap();
    assert!((d0 / 12.95 - 1.0).abs() <= 0.05, "{d0}");
}

proptest! {
    #[test]
    fn energy_monotone_in_extremes(
        c_min in 10e-12f64..200e-12,
        span in 1e-12f64..200e-12,
        bump in 1e-13f64..50e-12,
        v in 0.1f64..50.0,
    ) {
        let c_max = c_min + span;
        let base = cycle_energy(&HarvestOperatingPoint::new(v, c_max, c_min, 300.0)).unwrap();
        let wider = cycle_energy(&HarvestOperatingPoint::new(v, c_max + bump, c_min, 300.0)).unwrap();
        prop_assert!(wider > base);
        let c_min_up = (c_min + bump).min(c_max);
        if c_min_up > c_min {
            let narrower = cycle_energy(&HarvestOperatingPoint::new(v, c_max, c_min_up, 300.0)).unwrap();
            prop_assert!(narrower < base);
        }
    }

    #[test]
    fn energy_scales_as_voltage_squared(v in 0.1f64..100.0, k in 0.1f64..10.0) {
        let e1 = cycle_energy(&HarvestOperatingPoint::new(v, 208e-12, 47e-12, 300.0)).unwrap();
        let e2 = cycle_energy(&HarvestOperatingPoint::new(v * k, 208e-12, 47e-12, 300.0)).unwrap();
        prop_assert!((e2 / e1 / (k * k) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn power_is_twice_frequency_times_energy(
        c_min in 1e-12f64..200e-12,
        span in 0.0f64..200e-12,
        f in 1.0f64..5000.0,
    ) {
        let op = HarvestOperatingPoint::new(5.0, c_min + span, c_min, f);
        prop_assert_eq!(harvested_power(&op).unwrap(), 2.0 * f * cycle_energy(&op).unwrap());
    }

    #[test]
    fn projection_grows_with_depth(a in 0.0f64..20e-6, b in 0.0f64..20e-6) {
        let drie = RunConfig::from_preset("pc_floating").unwrap().device_model().unwrap().drie;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let p = |d| drie_power_density_projection(5.0, 300.0, 204.5e-12, &drie, d, DEFAULT_DEVICE_VOLUME).unwrap();
        prop_assert!(p(hi) >= p(lo));
    }
}
