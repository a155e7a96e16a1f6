//! The reference reproduction suite: eleven numbered checks run against the
//! shipped presets, each with a verdict and a one-line account.

use rayon::prelude::*;

use ipop_core::circuit::{
    charge_pump_cycle, energy_ledger, pump_saturation, simulate_with, CircuitParams, SimOptions,
    SimResult, BALANCE_TOLERANCE,
};
use ipop_core::config::RunConfig;
use ipop_core::device::{cmin_vs_drie_depth, mass_loss_fraction};
use ipop_core::energy::{drie_power_density_projection, harvested_power, power_density, HarvestOperatingPoint};
use ipop_core::error::Result;
use ipop_core::mech::{frequency_response, peak_frequency, simulate_motion, ExcitationSpec, StopperModel};
use ipop_core::report::{num, map_long_table, response_table, sweep_table, trajectory_table, Table};
use ipop_core::sweep::{
    clock_ratio_report, optimize_cstore, run_sweep, run_sweep_2d, SweepAxis, SweepMetric, SweepSpec,
};

pub const CRITERIA: [(u8, &str); 11] = [
    (1, "lossless power figures"),
    (2, "grounded power densities"),
    (3, "backside etch projection"),
    (4, "charge pump oracle"),
    (5, "energy balance"),
    (6, "pulse width optimum"),
    (7, "clock period optimum"),
    (8, "storage capacitor optimum"),
    (9, "low frequency conversion"),
    (10, "resonator response"),
    (11, "device calibration"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {:>2} {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.detail
        )
    }
}

/// Verdict plus plot-ready tables produced along the way.
#[derive(Debug, Clone)]
pub struct Reproduction {
    pub outcome: Outcome,
    pub tables: Vec<(String, Table)>,
}

struct Check {
    passed: bool,
    detail: String,
    tables: Vec<(String, Table)>,
}

impl Check {
    fn new(passed: bool, detail: String) -> Self {
        Self { passed, detail, tables: Vec::new() }
    }

    fn with(mut self, name: &str, t: Table) -> Self {
        self.tables.push((name.into(), t));
        self
    }
}

/// Run one numbered check. Errors count as failures.
pub fn run_criterion(id: u8) -> Option<Reproduction> {
    let name = CRITERIA.iter().find(|c| c.0 == id)?.1;
    let res = match id {
        1 => power_figures(),
        2 => grounded_densities(),
        3 => etch_projection(),
        4 => pump_oracle(),
        5 => energy_balance(),
        6 => pulse_width_optimum(),
        7 => clock_optimum(),
        8 => store_optimum(),
        9 => low_frequency(),
        10 => resonator_response(),
        11 => calibration(),
        _ => unreachable!(),
    };
    let check = res.unwrap_or_else(|e| Check::new(false, format!("error: {e}")));
    Some(Reproduction {
        outcome: Outcome { id, name, passed: check.passed, detail: check.detail },
        tables: check.tables,
    })
}

pub fn run_all() -> Vec<Reproduction> {
    CRITERIA.iter().filter_map(|c| run_criterion(c.0)).collect()
}

pub fn outcome_table(outcomes: &[Outcome]) -> Table {
    let mut t = Table::new(["criterion", "name", "status", "detail"]);
    for o in outcomes {
        t.push(vec![
            o.id.to_string(),
            o.name.into(),
            if o.passed { "pass" } else { "fail" }.into(),
            o.detail.clone(),
        ]);
    }
    t
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn preset(name: &str) -> Result<RunConfig> {
    RunConfig::from_preset(name)
}

fn power_figures() -> Result<Check> {
    let cases = [
        (214e-12, 140e-12, 255.0, 0.72e-6),
        (214e-12, 80e-12, 290.0, 2.6e-6),
        (181e-12, 107e-12, 255.0, 0.82e-6),
        (181e-12, 47e-12, 290.0, 3.74e-6),
    ];
    let mut ok = true;
    let mut parts = Vec::new();
    for (c_max, c_min, f, target) in cases {
        let p = harvested_power(&HarvestOperatingPoint::new(5.0, c_max, c_min, f))?;
        let e = rel(p, target);
        ok &= e <= 0.02;
        parts.push(format!("{:.3} uW vs {} ({:+.1}%)", p * 1e6, target * 1e6, (p / target - 1.0) * 100.0));
    }
    Ok(Check::new(ok, parts.join("; ")))
}

fn grounded_densities() -> Result<Check> {
    let cc = power_density(&preset("cc_grounded")?.operating_point()?)?;
    let pc = power_density(&preset("pc_grounded")?.operating_point()?)?;
    let cc_ok = (58.0..=59.0).contains(&cc);
    let pc_ok = (12.7..=12.95).contains(&pc);
    Ok(Check::new(
        cc_ok && pc_ok,
        format!("cc_grounded {cc:.2} uW/cm3 in [58, 59]: {cc_ok}; pc_grounded {pc:.2} uW/cm3 in [12.7, 12.95]: {pc_ok}"),
    ))
}

fn etch_projection() -> Result<Check> {
    let cfg = preset("pc_floating")?;
    let dev = cfg.device_model()?;
    let op = cfg.operating_point()?;
    let (c_max, f, depth) = cfg
        .projection()
        .ok_or_else(|| ipop_core::Error::Config("pc_floating has no projection inputs".into()))?;
    let dc = c_max - cmin_vs_drie_depth(&dev.drie, depth)?;
    let loss = mass_loss_fraction(&dev.drie, depth)?;
    let density = drie_power_density_projection(op.v_in, f, c_max, &dev.drie, depth, op.device_volume)?;
    let dc_ok = (dc - 156e-12).abs() <= 1e-12;
    let loss_ok = (loss - 0.025).abs() <= 1e-12;
    let d_ok = rel(density, 76.71) <= 0.10;
    Ok(Check::new(
        dc_ok && loss_ok && d_ok,
        format!(
            "dC {:.2} pF (156 +/- 1); mass loss {:.4}% (2.5); density {:.2} uW/cm3 (76.71 +/- 10%)",
            dc * 1e12,
            loss * 100.0,
            density
        ),
    ))
}

/// The pump-only scenario: ideal diodes, no flyback.
pub fn pump_only_scenario() -> Result<(CircuitParams, ipop_core::circuit::CapacitanceDrive)> {
    let cfg = preset("circuit_sec6")?;
    let mut p = cfg.circuit_params()?.with_ideal_diodes();
    p.flyback_enabled = false;
    Ok((p, cfg.drive(0.0)?))
}

fn pump_oracle() -> Result<Check> {
    let (p, drive) = pump_only_scenario()?;
    let (c_min, c_max) = drive.c_range();
    let half = 0.5 / drive.mech_frequency();
    let opts = SimOptions::default().sampled(half);
    let run = simulate_with(&p, &drive, 600.0 * half, &opts)?;
    // v_out is the reservoir node
    let mut worst: f64 = 0.0;
    for w in run.samples.windows(2) {
        let predicted = charge_pump_cycle(w[0].v_store, w[0].v_out, c_max, c_min, p.c_store);
        worst = worst.max(rel(w[1].v_store, predicted));
    }
    let last = run.samples.last().expect("sampled run");
    let sat = pump_saturation(last.v_out, c_max, c_min);
    let nominal = pump_saturation(p.v_initial, c_max, c_min);
    let sat_err = rel(last.v_store, sat);
    let ok = worst <= 0.01 && sat_err <= 0.01;
    Ok(Check::new(
        ok,
        format!(
            "{} half-cycles, worst deviation {:.3}% (1%); final {:.3} V vs {:.3} V saturation ({:.3}%), {:.2} V nominal ({:+.2}%)",
            run.samples.len() - 1,
            worst * 100.0,
            last.v_store,
            sat,
            sat_err * 100.0,
            nominal,
            (last.v_store / nominal - 1.0) * 100.0
        ),
    )
    .with("pump_trajectory", trajectory_table(&run)))
}

fn relative_residual(p: &CircuitParams, d: &ipop_core::circuit::CapacitanceDrive, dur: f64, o: &SimOptions) -> Result<f64> {
    let run: SimResult = simulate_with(p, d, dur, o)?;
    Ok(run.ledger.relative_residual())
}

/// Every shipped circuit scenario: name, params, drive, duration.
pub fn shipped_scenarios() -> Result<Vec<(String, CircuitParams, ipop_core::circuit::CapacitanceDrive, f64)>> {
    let mut out = Vec::new();
    for name in ["circuit_sec6", "lowfreq_410"] {
        let cfg = preset(name)?;
        let dur = cfg.circuit_duration()?;
        out.push((name.to_string(), cfg.circuit_params()?, cfg.drive(dur)?, dur));
    }
    let (p, d) = pump_only_scenario()?;
    out.push(("pump_only".into(), p, d, 0.2));
    let base = preset("circuit_sec6")?;
    let mut lossless = base.circuit_params()?.with_ideal_diodes();
    lossless.r_load = f64::INFINITY;
    lossless.switch.off_conductance = 1e-15;
    let dur = 10.0 * lossless.switch.clock_period;
    out.push(("lossless".into(), lossless, base.drive(dur)?, dur));
    Ok(out)
}

fn energy_balance() -> Result<Check> {
    let scenarios = shipped_scenarios()?;
    let rows: Vec<Result<(f64, f64)>> = scenarios
        .par_iter()
        .map(|(_, p, d, dur)| {
            let o = SimOptions::default();
            Ok((relative_residual(p, d, *dur, &o)?, relative_residual(p, d, *dur, &o.halved())?))
        })
        .collect();
    let mut ok = true;
    let mut parts = Vec::new();
    let mut t = Table::new(["scenario", "relative_residual", "relative_residual_halved"]);
    for ((name, ..), r) in scenarios.iter().zip(rows) {
        let (a, b) = r?;
        ok &= a <= BALANCE_TOLERANCE && b <= 1e-4;
        parts.push(format!("{name} {a:.2e} -> {b:.2e}"));
        t.push(vec![name.clone(), num(a), num(b)]);
    }
    Ok(Check::new(ok, format!("{} (<= 1e-3, halved <= 1e-4)", parts.join("; "))).with("balance", t))
}

fn pulse_width_optimum() -> Result<Check> {
    let spec = preset("circuit_sec6")?.sweep_spec()?;
    let r = run_sweep(&spec)?;
    let best = r.argmax_value();
    let in_band = best.is_some_and(|v| (1.5e-6..=3e-6).contains(&v));
    let i = r.argmax.unwrap_or(0);
    let tail_flagged = r.points[i + 1..].iter().any(|p| p.short_circuit)
        && r.points.last().is_some_and(|p| p.short_circuit);
    let first_flag = r.points.iter().find(|p| p.short_circuit).map(|p| p.value);
    Ok(Check::new(
        in_band && tail_flagged,
        format!(
            "argmax {} us in [1.5, 3]; short circuit from {} us; unimodal {}",
            best.map_or("none".into(), |v| format!("{:.2}", v * 1e6)),
            first_flag.map_or("never".into(), |v| format!("{:.2}", v * 1e6)),
            r.is_unimodal()
        ),
    )
    .with("pulse_width_sweep", sweep_table(&r)))
}

pub const CLOCK_GRID_MS: [f64; 11] = [10.0, 15.0, 20.0, 25.0, 30.0, 33.0, 36.0, 40.0, 45.0, 50.0, 60.0];
pub const STORE_GRID_NF: [f64; 8] = [0.5, 1.0, 1.5, 2.2, 3.3, 4.7, 6.8, 10.0];

fn clock_optimum() -> Result<Check> {
    let base = preset("circuit_sec6")?.sweep_base()?;
    let spec = SweepSpec {
        axis: SweepAxis::ClockPeriod,
        grid: CLOCK_GRID_MS.iter().map(|ms| ms * 1e-3).collect(),
        base: base.clone(),
        metric: SweepMetric::MeanVOut,
    };
    let r = run_sweep(&spec)?;
    let best = r.argmax_value();
    let ratio = clock_ratio_report(&base, &r)?;
    let in_band = best.is_some_and(|v| (30e-3..=40e-3).contains(&v));
    let ratio_ok = (9.0..=12.0).contains(&ratio);
    Ok(Check::new(
        in_band && ratio_ok,
        format!(
            "argmax {} ms in [30, 40]; {ratio:.2} mechanical cycles per flyback in [9, 12]",
            best.map_or("none".into(), |v| format!("{:.1}", v * 1e3)),
        ),
    )
    .with("clock_period_sweep", sweep_table(&r)))
}

fn store_optimum() -> Result<Check> {
    let base = preset("circuit_sec6")?.sweep_base()?;
    let grid: Vec<f64> = STORE_GRID_NF.iter().map(|n| n * 1e-9).collect();
    let best = optimize_cstore(&base, &grid, SweepMetric::MeanVOut)?;
    let ok = (1e-9..=5e-9).contains(&best);
    let r = run_sweep(&SweepSpec {
        axis: SweepAxis::CStore,
        grid,
        base,
        metric: SweepMetric::MeanVOut,
    })?;
    Ok(Check::new(ok, format!("argmax {:.2} nF in [1, 5]", best * 1e9)).with("c_store_sweep", sweep_table(&r)))
}

/// Start times of upward runs in a sampled signal.
pub fn rise_times(t: &[f64], v: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    let mut rising = false;
    for i in 1..v.len() {
        let up = v[i] > v[i - 1];
        if up && !rising {
            out.push(t[i - 1]);
        }
        rising = up;
    }
    out
}

fn low_frequency() -> Result<Check> {
    let cfg = preset("lowfreq_410")?;
    let p = cfg.circuit_params()?;
    let dur = cfg.circuit_duration()?;
    let t_clk = p.switch.clock_period;
    let opts = SimOptions::default().sampled(t_clk / 50.0);
    let run = simulate_with(&p, &cfg.drive(dur)?, dur, &opts)?;
    let ledger = energy_ledger(&run)?;
    let t: Vec<f64> = run.samples.iter().map(|s| s.t).collect();
    let v: Vec<f64> = run.samples.iter().map(|s| s.v_out).collect();
    let rises = rise_times(&t, &v);
    let gaps: Vec<f64> = rises.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len().max(1) as f64;
    let worst_gap = gaps.iter().fold(0.0f64, |m, g| m.max(rel(*g, t_clk)));
    let sawtooth = rises.len() as f64 >= 0.9 * (dur / t_clk) && worst_gap <= 0.05;
    let positive = ledger.net_converted > 0.0;
    Ok(Check::new(
        positive && sawtooth,
        format!(
            "net converted {:.3e} J; {} rises, mean spacing {:.4} T_clk, worst {:.2}% off",
            ledger.net_converted,
            rises.len(),
            mean_gap / t_clk,
            worst_gap * 100.0
        ),
    )
    .with("low_frequency_trajectory", trajectory_table(&run)))
}

/// Relative base-excitation transmissibility `r²/√((1−r²)² + (r/Q)²)`.
pub fn relative_transmissibility(f: f64, f0: f64, q: f64) -> f64 {
    let r = f / f0;
    r * r / ((1.0 - r * r).powi(2) + (r / q).powi(2)).sqrt()
}

fn resonator_response() -> Result<Check> {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut tables = Vec::new();
    for name in ["pc_floating", "cc_floating"] {
        let cfg = preset(name)?;
        let res = cfg.resonator()?;
        let exc = cfg.excitation()?;
        let (_, step) = cfg.resonator_timing()?;
        let grid = exc.frequencies();
        let grid_step = grid[1] - grid[0];
        let f0 = res.natural_frequency();
        let amp = exc.amplitude();

        let capped = frequency_response(&res, amp, &grid, step)?;
        let peak = peak_frequency(&capped).unwrap_or(f64::NAN);
        let peak_ok = (peak - f0).abs() <= grid_step + 1e-9;

        let trace = simulate_motion(&res, &ExcitationSpec::Sinusoid { amplitude: amp, frequency: f0 }, 200.0 / f0, step)?;
        let x_max = trace.max_abs_displacement();
        let cap_ok = x_max <= res.stopper_limit * (1.0 + 1e-12);

        let mut free = res;
        free.stopper_model = StopperModel::Disabled;
        let open = frequency_response(&free, amp, &grid, step)?;
        let worst = open
            .iter()
            .map(|p| rel(p.peak_displacement, amp * relative_transmissibility(p.frequency, f0, res.quality_factor)))
            .fold(0.0f64, f64::max);
        let tr_ok = worst <= 0.02;

        ok &= peak_ok && cap_ok && tr_ok;
        parts.push(format!(
            "{name}: peak {peak:.1} Hz (f0 {f0:.0} +/- {grid_step}), max |x| {:.2} um, transmissibility off by {:.2}%",
            x_max * 1e6,
            worst * 100.0
        ));
        tables.push((format!("{name}_response"), response_table(&capped)));
        tables.push((format!("{name}_response_free"), response_table(&open)));
    }
    let mut c = Check::new(ok, parts.join("; "));
    c.tables = tables;
    Ok(c)
}

/// Measured (C_max, C_min) for each device preset.
pub const MEASURED_PAIRS: [(&str, f64, f64); 4] = [
    ("pc_floating", 214e-12, 140e-12),
    ("cc_floating", 214e-12, 80e-12),
    ("pc_grounded", 181e-12, 107e-12),
    ("cc_grounded", 181e-12, 47e-12),
];

fn calibration() -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, c_max, c_min) in MEASURED_PAIRS {
        let d = preset(name)?.device_model()?;
        let e = (d.c_max() - c_max).abs().max((d.c_min() - c_min).abs());
        worst = worst.max(e);
        parts.push(format!("{name} {:.2}/{:.2} pF", d.c_max() * 1e12, d.c_min() * 1e12));
    }
    Ok(Check::new(
        worst <= 0.5e-12,
        format!("{}; worst error {:.3} pF (0.5)", parts.join(", "), worst * 1e12),
    ))
}

/// Pulse width and storage capacitance swept together on a coarse grid.
pub fn joint_optimum(pulse_widths: &[f64], c_stores: &[f64]) -> Result<(f64, f64, Table)> {
    let base = preset("circuit_sec6")?.sweep_base()?;
    let map = run_sweep_2d(
        &base,
        SweepAxis::PulseWidth,
        pulse_widths,
        SweepAxis::CStore,
        c_stores,
        SweepMetric::MeanVOut,
    )?;
    let (pw, cs) = map
        .argmax_values()
        .ok_or_else(|| ipop_core::Error::Numerical("every grid cell failed".into()))?;
    Ok((pw, cs, map_long_table(&map)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rises_of_a_sawtooth() {
        let t: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let v: Vec<f64> = t.iter().map(|&x| if (x as usize).is_multiple_of(10) { 2.0 } else { 1.0 - x * 0.001 }).collect();
        assert_eq!(rise_times(&t, &v), vec![9.0, 19.0, 29.0]);
    }

    #[test]
    fn transmissibility_limits() {
        assert!((relative_transmissibility(300.0, 300.0, 20.0) - 20.0).abs() < 1e-12);
        assert!(relative_transmissibility(1.0, 300.0, 20.0) < 1e-4);
    }

    #[test]
    fn criteria_are_numbered_in_order() {
        assert!(CRITERIA.iter().enumerate().all(|(i, c)| c.0 as usize == i + 1));
        assert!(run_criterion(12).is_none());
    }

    #[test]
    fn joint_optimum_lands_in_the_tuning_window() {
        let (pw, cs, table) = joint_optimum(&[0.5e-6, 2e-6, 8e-6], &[0.5e-9, 2.2e-9, 10e-9]).unwrap();
        assert!((1.5e-6..=3e-6).contains(&pw), "pulse width {pw:e}");
        assert!((1e-9..=5e-9).contains(&cs), "c_store {cs:e}");
        assert_eq!(table.rows.len(), 9);
    }
}
