use ipop_core::config::RunConfig;
use ipop_core::device::*;
use proptest::prelude::*;

const EPS0: f64 = 8.854_187_812_8e-12;

/// Overlap term written out from the plate formula, independent of the crate.
fn overlap(n: f64, l: f64, w: f64, t: f64, g: f64, er: f64, x: f64) -> f64 {
    n * 2.0 * EPS0 * er * l * (w - x.abs()) / (t + er * g)
}

/// 1-D brute-force minimiser over an evenly spaced grid.
fn grid_fit(lo: f64, hi: f64, n: usize, err: impl Fn(f64) -> f64) -> f64 {
    (0..=n)
        .map(|i| lo + (hi - lo) * i as f64 / n as f64)
        .min_by(|a, b| err(*a).partial_cmp(&err(*b)).unwrap())
        .unwrap()
}

#[test]
fn brute_force_calibration_matches_presets() {
    // measured pairs: proof-mass and comb variants, floating substrate
    let (pc_max, pc_min, cc_max, cc_min) = (214e-12, 140e-12, 214e-12, 80e-12);
    // comb: no fringe bump, overlap gone at full travel
    let c_sub = grid_fit(0.0, 200e-12, 4000, |c| (c - cc_min).abs());
    let l_f = grid_fit(4.0e-3, 6.0e-3, 200_000, |l| {
        (overlap(48.0, l, 50e-6, 0.3e-6, 1.5e-6, 7.5, 0.0) + c_sub - cc_max).abs()
    });
    let fringe = grid_fit(0.0, 200e-12, 4000, |f| (c_sub + f - pc_min).abs());
    assert!((overlap(48.0, l_f, 50e-6, 0.3e-6, 1.5e-6, 7.5, 0.0) + c_sub - pc_max).abs() < 0.05e-12);

    let pc = RunConfig::from_preset("pc_floating").unwrap().device_model().unwrap();
    let cc = RunConfig::from_preset("cc_floating").unwrap().device_model().unwrap();
    // the preset rounds the fit to five digits (about 1e-3 pF)
    assert!((pc.geometry.finger_length - l_f).abs() < 5e-8, "{l_f}");
    assert!((pc.parasitics.c_substrate - c_sub).abs() < 0.1e-12);
    assert!((pc.parasitics.c_fringe_peak - fringe).abs() < 0.1e-12);
    assert_eq!(cc.parasitics.c_fringe_peak, 0.0);
    assert_eq!(pc.geometry, cc.geometry);
}

#[test]
fn four_measured_pairs_within_half_picofarad() {
    for (name, c_max, c_min) in [
        ("pc_floating", 214e-12, 140e-12),
        ("cc_floating", 214e-12, 80e-12),
        ("pc_grounded", 181e-12, 107e-12),
        ("cc_grounded", 181e-12, 47e-12),
    ] {
        let d = RunConfig::from_preset(name).unwrap().device_model().unwrap();
        assert!((d.c_max() - c_max).abs() <= 0.5e-12, "{name} {}", d.c_max());
        assert!((d.c_min() - c_min).abs() <= 0.5e-12, "{name} {}", d.c_min());
    }
}

fn pc() -> DeviceModel {
    RunConfig::from_preset("pc_floating").unwrap().device_model().unwrap()
}

#[test]
fn crate_overlap_matches_formula() {
    let d = pc();
    let g = d.geometry;
    for x in [0.0, 1e-5, -2.5e-5, 5e-5] {
        let want = overlap(48.0, g.finger_length, 50e-6, 0.3e-6, 1.5e-6, 7.5, x);
        let got = linear_capacitance(&g, x).unwrap();
        assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-15), "{x}: {got} vs {want}");
    }
}

#[test]
fn grounding_removes_exactly_the_reduction() {
    let d = pc();
    let g = d.with_substrate_grounded(true);
    for x in [0.0, 1.3e-5, 5e-5] {
        let diff = d.capacitance(x).unwrap() - g.capacitance(x).unwrap();
        assert!((diff - 33e-12).abs() < 1e-20, "{diff}");
    }
}

#[test]
fn etch_depth_examples() {
    let d = pc();
    let drie = d.drie;
    let c_max = 204.5e-12;
    assert!((c_max - cmin_vs_drie_depth(&drie, 0.0).unwrap() - 64e-12).abs() < 1e-12);
    assert!((c_max - cmin_vs_drie_depth(&drie, 20e-6).unwrap() - 156e-12).abs() < 1e-12);
    assert_eq!(cmin_vs_drie_depth(&drie, 40e-6).unwrap(), cmin_vs_drie_depth(&drie, 20e-6).unwrap());
    assert_eq!(mass_loss_fraction(&drie, 0.0).unwrap(), 0.0);
    assert!((mass_loss_fraction(&drie, 20e-6).unwrap() - 0.025).abs() < 1e-15);
    assert!((mass_loss_fraction(&drie, 10e-6).unwrap() - 0.0125).abs() < 1e-15);
    assert!(cmin_vs_drie_depth(&drie, -1e-6).is_err());
}

#[test]
fn etch_leaves_rest_capacitance_alone() {
    let d = pc();
    for depth in [0.0, 5e-6, 20e-6, 60e-6] {
        assert_eq!(d.with_drie_depth(depth).c_max(), d.c_max());
    }
    assert!(d.with_drie_depth(20e-6).c_min() < d.c_min());
}

proptest! {
    #[test]
    fn overlap_is_even_and_decreasing(a in 0.0f64..50e-6, b in 0.0f64..50e-6) {
        let g = pc().geometry;
        prop_assert_eq!(linear_capacitance(&g, a).unwrap(), linear_capacitance(&g, -a).unwrap());
        if a < b {
            prop_assert!(linear_capacitance(&g, a).unwrap() > linear_capacitance(&g, b).unwrap());
        }
    }

    #[test]
    fn total_is_positive_even_and_grounded_below_floating(
        x in -50e-6f64..50e-6,
        sub in 0.0f64..100e-12,
        fringe in 0.0f64..100e-12,
        depth in 0.0f64..40e-6,
    ) {
        let mut d = pc();
        d.parasitics.c_substrate = sub;
        d.parasitics.c_fringe_peak = fringe;
        d.drie.depth = depth;
        let c = d.capacitance(x).unwrap();
        prop_assert!(c > 0.0);
        prop_assert_eq!(c, d.capacitance(-x).unwrap());
        prop_assert!(d.with_substrate_grounded(true).capacitance(x).unwrap() <= c);
    }

    #[test]
    fn cmin_non_increasing_and_flat_past_plateau(a in 0.0f64..60e-6, b in 0.0f64..60e-6) {
        let drie = pc().drie;
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        prop_assert!(cmin_vs_drie_depth(&drie, hi).unwrap() <= cmin_vs_drie_depth(&drie, lo).unwrap());
        if lo >= drie.plateau_depth {
            prop_assert_eq!(cmin_vs_drie_depth(&drie, lo).unwrap(), drie.cmin_plateau);
        }
    }

    #[test]
    fn out_of_travel_is_rejected(x in 50.0001e-6f64..1e-3) {
        prop_assert!(linear_capacitance(&pc().geometry, x).is_err());
        prop_assert!(pc().capacitance(-x).is_err());
    }
}
