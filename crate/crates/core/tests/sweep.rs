use ipop_core::circuit::{energy_ledger, simulate_with};
use ipop_core::config::RunConfig;
use ipop_core::report::sweep_table;
use ipop_core::sweep::*;
use proptest::prelude::*;

fn base(name: &str) -> SweepBase {
    RunConfig::from_preset(name).unwrap().sweep_base().unwrap()
}

fn short(mut b: SweepBase) -> SweepBase {
    b.duration_periods = 6.0;
    b
}

fn point(v: f64, m: Option<f64>) -> SweepPoint {
    SweepPoint {
        value: v,
        metric: m,
        short_circuit: false,
        error: None,
    }
}

#[test]
fn single_point_grid_matches_direct_run() {
    let b = short(base("circuit_sec6"));
    let spec = SweepSpec {
        axis: SweepAxis::CStore,
        grid: vec![2.2e-9],
        base: b.clone(),
        metric: SweepMetric::NetConvertedEnergy,
    };
    let r = run_sweep(&spec).unwrap();
    let duration = b.duration_periods * b.params.switch.clock_period;
    let run = simulate_with(&b.params, &b.drive, duration, &b.options).unwrap();
    let direct = energy_ledger(&run).unwrap().net_converted;
    assert_eq!(r.points.len(), 1);
    assert_eq!(r.points[0].metric, Some(direct));
    assert_eq!(r.argmax, Some(0));
}

#[test]
fn sweep_output_is_bit_identical_across_runs() {
    let spec = SweepSpec {
        axis: SweepAxis::PulseWidth,
        grid: vec![1e-6, 2e-6, 4e-6],
        base: short(base("circuit_sec6")),
        metric: SweepMetric::MeanVOut,
    };
    let a = sweep_table(&run_sweep(&spec).unwrap()).to_csv();
    let b = sweep_table(&run_sweep(&spec).unwrap()).to_csv();
    assert_eq!(a, b);
}

fn clock_result(best: f64) -> SweepResult {
    SweepResult {
        axis: SweepAxis::ClockPeriod,
        metric: SweepMetric::MeanVOut,
        points: vec![point(0.02, Some(1.0)), point(best, Some(2.0)), point(0.05, Some(1.5))],
        argmax: Some(1),
        segments: Vec::new(),
    }
}

#[test]
fn clock_ratio_counts_mechanical_cycles() {
    let b = base("circuit_sec6");
    let ratio = clock_ratio_report(&b, &clock_result(0.0333)).unwrap();
    assert!((ratio - 9.99).abs() < 1e-9, "{ratio}");
    let f = b.drive.mech_frequency();
    let ratio = clock_ratio_report(&b, &clock_result(5.0 / f)).unwrap();
    assert!((ratio - 5.0).abs() < 1e-12);
}

#[test]
fn clock_ratio_needs_a_clock_sweep() {
    let b = base("circuit_sec6");
    let mut r = clock_result(0.03);
    r.axis = SweepAxis::PulseWidth;
    assert!(clock_ratio_report(&b, &r).is_err());
}

fn output_rises_with_inductance(pulse_widths: &[f64]) {
    let b = base("circuit_sec6");
    for &pw in pulse_widths {
        let mut last = f64::NEG_INFINITY;
        for l in [1e-3, 2e-3, 4e-3, 10e-3] {
            let (mut p, d) = b.apply(SweepAxis::PulseWidth, pw);
            p.l_fly = l;
            let m = b.evaluate(&p, &d, SweepMetric::MeanVOut).metric.unwrap();
            assert!(m > last, "pw {pw:e}, l_fly {l:e}: {m} after {last}");
            last = m;
        }
    }
}

#[test]
fn longer_inductor_raises_output_for_long_pulses() {
    output_rises_with_inductance(&[4e-6, 10e-6]);
}

/// With a pulse shorter than the LC quarter period the flyback energy is
/// (V·t_pw)²/2L, so the output peaks at an intermediate inductance.
#[test]
#[ignore = "short pulses peak near 1.5 to 2 mH in this circuit model"]
fn longer_inductor_raises_output_from_1_5_us() {
    output_rises_with_inductance(&[1.5e-6, 2e-6, 3e-6, 4e-6, 10e-6]);
}

#[test]
fn conversion_fades_as_c_min_nears_c_max() {
    let b = short(base("circuit_sec6"));
    let nets: Vec<f64> = [5e-12, 47e-12, 100e-12, 200e-12]
        .iter()
        .map(|&c| {
            let (p, d) = b.apply(SweepAxis::CMin, c);
            b.evaluate(&p, &d, SweepMetric::NetConvertedEnergy).metric.unwrap()
        })
        .collect();
    assert!(nets.windows(2).all(|w| w[1] < w[0]), "{nets:?}");
    assert!(nets[2] > 0.0 && nets[3] <= 0.0, "{nets:?}");
}

/// Without a breakdown limit on the variable capacitor, a smaller C_min
/// only raises the pumped voltage.
#[test]
#[ignore = "the circuit model converts more energy as C_min shrinks"]
fn tiny_c_min_converts_nothing() {
    let b = base("circuit_sec6");
    let (p, d) = b.apply(SweepAxis::CMin, 5e-12);
    let net = b.evaluate(&p, &d, SweepMetric::NetConvertedEnergy).metric.unwrap();
    assert!(net <= 0.0, "{net:e}");
}

#[test]
fn viability_map_separates_working_and_flat_capacitors() {
    let mut b = base("lowfreq_410");
    b.duration_periods = 10.0;
    let map = low_frequency_viability_search(&[410.0], &[94e-12, 368e-12], &b).unwrap();
    assert!(map.cell(0, 0).metric.unwrap() > 0.0);
    assert!(map.cell(0, 1).metric.unwrap() <= 0.0);
}

#[test]
fn viability_search_rejects_a_fixed_clock() {
    let mut b = base("lowfreq_410");
    b.clock_cycles = None;
    assert!(low_frequency_viability_search(&[410.0], &[94e-12], &b).is_err());
}

#[test]
fn unsorted_grid_is_rejected() {
    let spec = SweepSpec {
        axis: SweepAxis::PulseWidth,
        grid: vec![2e-6, 1e-6],
        base: base("circuit_sec6"),
        metric: SweepMetric::MeanVOut,
    };
    assert!(run_sweep(&spec).is_err());
}

proptest! {
    #[test]
    fn median_preserves_length_and_bounds(v in prop::collection::vec(-1e3f64..1e3, 0..40)) {
        let m = moving_median(&v);
        prop_assert_eq!(m.len(), v.len());
        if let (Some(lo), Some(hi)) = (
            v.iter().cloned().reduce(f64::min),
            v.iter().cloned().reduce(f64::max),
        ) {
            prop_assert!(m.iter().all(|&x| x >= lo && x <= hi));
        }
    }

    #[test]
    fn segments_tile_the_grid(v in prop::collection::vec(-1e3f64..1e3, 2..40)) {
        let pts: Vec<_> = v.iter().enumerate().map(|(i, &m)| point(i as f64, Some(m))).collect();
        let s = monotonic_segments(&pts);
        prop_assert!(!s.is_empty());
        let smooth = moving_median(&v);
        prop_assert!(smooth[..=s[0].start].iter().all(|&x| x == smooth[0]));
        prop_assert_eq!(s.last().unwrap().end, v.len() - 1);
        for w in s.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
            prop_assert!(w[0].rising != w[1].rising);
        }
    }

    #[test]
    fn a_rising_then_falling_grid_is_unimodal(up in 2usize..15, down in 2usize..15) {
        let vals: Vec<f64> = (0..up).map(|i| i as f64).chain((0..down).map(|i| (up - 1) as f64 - 1.0 - i as f64)).collect();
        let pts: Vec<_> = vals.iter().enumerate().map(|(i, &m)| point(i as f64, Some(m))).collect();
        let r = SweepResult {
            axis: SweepAxis::PulseWidth,
            metric: SweepMetric::MeanVOut,
            segments: monotonic_segments(&pts),
            points: pts,
            argmax: Some(up - 1),
        };
        prop_assert!(r.is_unimodal());
    }
}
