use std::sync::Arc;

use ipop_core::circuit::*;
use ipop_core::config::RunConfig;
use ipop_core::mech::{simulate_motion, ExcitationSpec};
use proptest::prelude::*;

fn base() -> (CircuitParams, CapacitanceDrive) {
    let cfg = RunConfig::from_preset("circuit_sec6").unwrap();
    (cfg.circuit_params().unwrap(), cfg.drive(0.0).unwrap())
}

/// Ideal diodes, no flyback, and a switch that does not leak the store.
fn pump_only() -> CircuitParams {
    let mut p = base().0.with_ideal_diodes();
    p.flyback_enabled = false;
    p.switch.off_conductance = 1e-18;
    p
}

/// Quasi-static pump stroke: shrink C_var in small steps and let an ideal D2
/// share charge whenever the capacitor voltage rises above the store.
fn stroke_by_charge_sharing(v_store: f64, v_res: f64, c_max: f64, c_min: f64, c_store: f64) -> f64 {
    let mut vs = v_store.max(v_res);
    let mut q = c_max * v_res;
    let mut sharing = false;
    let n = 20_000;
    for i in 1..=n {
        let c = c_max + (c_min - c_max) * i as f64 / n as f64;
        if sharing || q / c > vs {
            sharing = true;
            let total = q + c_store * vs;
            vs = total / (c + c_store);
            q = c * vs;
        }
    }
    vs
}

#[test]
fn pump_stroke_matches_charge_sharing() {
    for vs in [5.0, 8.0, 15.0, 21.0, 22.1] {
        let a = charge_pump_cycle(vs, 5.0, 208e-12, 47e-12, 2.2e-9);
        let b = stroke_by_charge_sharing(vs, 5.0, 208e-12, 47e-12, 2.2e-9);
        assert!((a - b).abs() < 1e-9, "{vs}: {a} vs {b}");
    }
    assert!((charge_pump_cycle(5.0, 5.0, 208e-12, 47e-12, 2.2e-9) - 5.358).abs() < 5e-4);
    assert!((pump_saturation(5.0, 208e-12, 47e-12) - 22.13).abs() < 5e-3);
}

#[test]
fn abs_sine_drive_extremes() {
    let d = CapacitanceDrive::abs_sine(208e-12, 47e-12, 300.0);
    assert_eq!(capacitance_drive_eval(&d, 0.0), 208e-12);
    assert!((capacitance_drive_eval(&d, 1.0 / 1200.0) - 47e-12).abs() < 1e-24);
}

#[test]
fn coupled_drive_spans_the_grounded_comb_range() {
    let cfg = RunConfig::from_preset("cc_grounded").unwrap();
    let device = cfg.device_model().unwrap();
    let res = cfg.resonator().unwrap();
    let exc = ExcitationSpec::Sinusoid { amplitude: 5e-6, frequency: 290.0 };
    let motion = simulate_motion(&res, &exc, 0.5, res.default_step()).unwrap();
    let d = CapacitanceDrive::Coupled(CoupledDrive { device, motion: Arc::new(motion), frequency: 290.0 });
    let cs: Vec<f64> = (0..2000).map(|i| capacitance_drive_eval(&d, 0.3 + i as f64 * 1e-4)).collect();
    let lo = cs.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = cs.iter().cloned().fold(0.0, f64::max);
    assert!(lo >= 47e-12 - 0.5e-12 && (lo - 47e-12).abs() < 0.5e-12, "{lo}");
    assert!(hi <= 181e-12 + 0.5e-12 && (hi - 181e-12).abs() < 0.5e-12, "{hi}");
}

#[test]
fn pump_follows_recurrence_and_rises_monotonically() {
    let p = pump_only();
    let (_, d) = base();
    let half = 1.0 / 600.0;
    let run = simulate_with(&p, &d, 80.0 * half, &SimOptions::default().sampled(half / 40.0)).unwrap();
    let vs: Vec<f64> = run.samples.iter().map(|s| s.v_store).collect();
    assert!(vs.windows(2).all(|w| w[1] >= w[0] - 1e-9), "v_store fell");
    for k in 0..80 {
        let (a, b) = (&run.samples[40 * k], &run.samples[40 * (k + 1)]);
        let want = charge_pump_cycle(a.v_store, a.v_out, 208e-12, 47e-12, p.c_store);
        assert!((b.v_store / want - 1.0).abs() < 0.01, "half-cycle {k}");
    }
}

#[test]
fn lossless_pump_stores_what_it_converts() {
    let mut p = pump_only();
    p.r_load = f64::INFINITY;
    let (_, d) = base();
    let run = simulate(&p, &d, 1.0).unwrap();
    let l = run.ledger;
    assert!((run.final_state.v_store(&p) / pump_saturation(5.0, 208e-12, 47e-12) - 1.0).abs() < 0.01);
    assert!((l.e_stored_delta / l.e_mech_in - 1.0).abs() < 0.01, "{l:?}");
}

#[test]
fn no_variation_no_conversion() {
    let (p, _) = base();
    let d = CapacitanceDrive::abs_sine(150e-12, 150e-12, 300.0);
    let run = simulate(&p, &d, 10.0 * p.switch.clock_period).unwrap();
    assert_eq!(run.ledger.e_mech_in, 0.0);
    assert!(run.ledger.net_converted <= 1e-15, "{:?}", run.ledger);
}

#[test]
fn reservoir_holds_over_ten_clock_periods() {
    let (p, d) = base();
    let t_clk = p.switch.clock_period;
    let run = simulate_with(&p, &d, 20.0 * t_clk, &SimOptions::default().sampled(t_clk / 10.0)).unwrap();
    let v: Vec<f64> = run.samples.iter().map(|s| s.v_out).collect();
    for w in v.windows(101) {
        let lo = w.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = w.iter().cloned().fold(0.0, f64::max);
        assert!(hi / lo - 1.0 < 0.02);
    }
}

#[test]
fn identical_inputs_give_identical_trajectories() {
    let (p, d) = base();
    let o = SimOptions::default().sampled(1e-4);
    let a = simulate_with(&p, &d, 0.1, &o).unwrap();
    let b = simulate_with(&p, &d, 0.1, &o).unwrap();
    assert_eq!(a.samples, b.samples);
    assert_eq!(a.ledger, b.ledger);
}

#[test]
fn small_reservoir_is_a_config_error() {
    let (mut p, d) = base();
    p.c_res = 50.0 * p.c_store;
    assert!(matches!(simulate(&p, &d, 0.1), Err(ipop_core::Error::Config(_))));
}

fn charged_state(p: &CircuitParams, v_store: f64) -> CircuitState {
    let d = CapacitanceDrive::abs_sine(208e-12, 47e-12, 300.0);
    let mut s = CircuitState::precharged(p, &d);
    s.q_store = p.c_store * v_store;
    s
}

#[test]
fn flyback_pulse_width_regimes() {
    let (mut p, _) = base();
    let s = charged_state(&p, 20.0);

    p.switch.pulse_width = 1e-12;
    let tiny = flyback_event(&s, &p).unwrap();
    assert!((tiny.state.v_store(&p) - 20.0).abs() < 1e-3);

    p.switch.pulse_width = 2e-6;
    let good = flyback_event(&s, &p).unwrap();
    assert!(good.energy_to_res > 0.0 && !good.short_circuit_regime);
    assert!(good.state.v_store(&p) < 20.0);

    p.switch.pulse_width = 50e-6;
    let long = flyback_event(&s, &p).unwrap();
    assert!(long.short_circuit_regime);
}

#[test]
fn long_pulses_run_short_circuited_and_lose_output() {
    let (mut p, d) = base();
    let dur = 30.0 * p.switch.clock_period;
    let good = simulate(&p, &d, dur).unwrap();
    p.switch.pulse_width = 50e-6;
    let bad = simulate(&p, &d, dur).unwrap();
    assert!(bad.short_circuit_regime && !good.short_circuit_regime);
    assert!(bad.mean_v_out < good.mean_v_out);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn balance_holds_across_the_design_space(
        c_store in 0.5e-9f64..8e-9,
        pw in 0.5e-6f64..10e-6,
        c_min in 20e-12f64..150e-12,
        f in 150.0f64..600.0,
    ) {
        let (mut p, _) = base();
        p.c_store = c_store;
        p.switch.pulse_width = pw;
        p.switch.clock_period = 5.0 / f;
        let d = CapacitanceDrive::abs_sine(208e-12, c_min, f);
        let run = simulate(&p, &d, 8.0 * p.switch.clock_period).unwrap();
        prop_assert!(energy_ledger(&run).is_ok());
        prop_assert!(run.ledger.relative_residual() <= BALANCE_TOLERANCE);
    }

    #[test]
    fn recurrence_moves_toward_saturation(
        vs in 5.0f64..30.0,
        c_min in 10e-12f64..200e-12,
        c_store in 0.1e-9f64..10e-9,
    ) {
        let sat = pump_saturation(5.0, 208e-12, c_min.min(208e-12));
        let next = charge_pump_cycle(vs, 5.0, 208e-12, c_min.min(208e-12), c_store);
        prop_assert!(next >= vs.max(5.0));
        if vs < sat {
            prop_assert!(next <= sat * (1.0 + 1e-12));
        }
    }
}
