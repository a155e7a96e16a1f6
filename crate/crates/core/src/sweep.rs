//! Grid sweeps over circuit and drive parameters.
//!
//! Every point is an independent circuit run with the same base values and
//! the same duration. Points run on the rayon pool and results are assembled
//! in grid order, so the output does not depend on scheduling.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::circuit::{energy_ledger, simulate_with, CapacitanceDrive, CircuitParams, SimOptions};
use crate::error::{Error, Result};

/// Clock periods simulated per sweep point.
pub const DEFAULT_DURATION_PERIODS: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    PulseWidth,
    ClockPeriod,
    CStore,
    Frequency,
    CMin,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 5] = [
        Self::PulseWidth,
        Self::ClockPeriod,
        Self::CStore,
        Self::Frequency,
        Self::CMin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::PulseWidth => "pulse_width",
            Self::ClockPeriod => "clock_period",
            Self::CStore => "c_store",
            Self::Frequency => "frequency",
            Self::CMin => "c_min",
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown sweep axis '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepMetric {
    MeanVOut,
    NetConvertedEnergy,
}

impl SweepMetric {
    pub fn name(self) -> &'static str {
        match self {
            Self::MeanVOut => "mean_v_out",
            Self::NetConvertedEnergy => "net_converted_energy",
        }
    }
}

impl fmt::Display for SweepMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean_v_out" => Ok(Self::MeanVOut),
            "net_converted_energy" => Ok(Self::NetConvertedEnergy),
            _ => Err(Error::Config(format!("unknown sweep metric '{s}'"))),
        }
    }
}

/// Circuit and drive every grid point starts from.
#[derive(Debug, Clone)]
pub struct SweepBase {
    pub params: CircuitParams,
    pub drive: CapacitanceDrive,
    /// Run length in clock periods.
    pub duration_periods: f64,
    /// When set, each point's clock period is this many mechanical periods.
    pub clock_cycles: Option<f64>,
    pub options: SimOptions,
}

impl SweepBase {
    pub fn new(params: CircuitParams, drive: CapacitanceDrive) -> Self {
        Self {
            params,
            drive,
            duration_periods: DEFAULT_DURATION_PERIODS,
            clock_cycles: None,
            options: SimOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.drive.validate()?;
        if matches!(self.drive, CapacitanceDrive::Coupled(_)) {
            return Err(Error::Config("sweeps need an analytic capacitance drive".into()));
        }
        if !(self.duration_periods.is_finite() && self.duration_periods >= 3.0) {
            return Err(Error::Config(format!(
                "sweep duration must cover at least 3 clock periods, got {}",
                self.duration_periods
            )));
        }
        if let Some(n) = self.clock_cycles {
            if !(n.is_finite() && n > 0.0) {
                return Err(Error::Config(format!("clock_cycles must be positive, got {n}")));
            }
        }
        Ok(())
    }

    fn clock_period_for(&self, drive: &CapacitanceDrive, params: &CircuitParams) -> f64 {
        match self.clock_cycles {
            Some(n) => n / drive.mech_frequency(),
            None => params.switch.clock_period,
        }
    }

    /// Run length shared by all points of a sweep along `axis`.
    ///
    /// With a tracking clock the length follows each point's clock period so
    /// that every cell sees the same number of conversions.
    fn duration(&self, params: &CircuitParams, drive: &CapacitanceDrive) -> f64 {
        let period = match self.clock_cycles {
            Some(_) => self.clock_period_for(drive, params),
            None => self.params.switch.clock_period,
        };
        self.duration_periods * period
    }

    /// Base values with one axis replaced.
    pub fn apply(&self, axis: SweepAxis, value: f64) -> (CircuitParams, CapacitanceDrive) {
        let mut p = self.params;
        let mut d = self.drive.clone();
        match axis {
            SweepAxis::PulseWidth => p.switch.pulse_width = value,
            SweepAxis::ClockPeriod => p.switch.clock_period = value,
            SweepAxis::CStore => p.c_store = value,
            SweepAxis::Frequency => set_drive(&mut d, |_, _, f| *f = value),
            SweepAxis::CMin => set_drive(&mut d, |_, c_min, _| *c_min = value),
        }
        if self.clock_cycles.is_some() {
            p.switch.clock_period = self.clock_period_for(&d, &p);
        }
        (p, d)
    }

    /// Evaluate one configuration.
    pub fn evaluate(&self, params: &CircuitParams, drive: &CapacitanceDrive, metric: SweepMetric) -> SweepPoint {
        let run = simulate_with(params, drive, self.duration(params, drive), &self.options)
            .and_then(|r| energy_ledger(&r).map(|l| (r, l)));
        match run {
            Ok((r, ledger)) => SweepPoint {
                value: f64::NAN,
                metric: Some(match metric {
                    SweepMetric::MeanVOut => r.mean_v_out,
                    SweepMetric::NetConvertedEnergy => ledger.net_converted,
                }),
                short_circuit: r.short_circuit_regime,
                error: None,
            },
            Err(e) => SweepPoint {
                value: f64::NAN,
                metric: None,
                short_circuit: false,
                error: Some(e.to_string()),
            },
        }
    }
}

fn set_drive(d: &mut CapacitanceDrive, f: impl FnOnce(&mut f64, &mut f64, &mut f64)) {
    match d {
        CapacitanceDrive::AbsSine { c_max, c_min, frequency }
        | CapacitanceDrive::DirectSine { c_max, c_min, frequency } => f(c_max, c_min, frequency),
        CapacitanceDrive::Coupled(_) => {}
    }
}

#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub grid: Vec<f64>,
    pub base: SweepBase,
    pub metric: SweepMetric,
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::Config(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(Error::Config(format!("{name} grid holds a non-finite value")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config(format!("{name} grid must be strictly increasing")));
    }
    Ok(())
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        check_grid(self.axis.name(), &self.grid)?;
        self.base.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepPoint {
    pub value: f64,
    /// `None` when the run failed.
    pub metric: Option<f64>,
    pub short_circuit: bool,
    pub error: Option<String>,
}

impl SweepPoint {
    pub fn flag(&self) -> &'static str {
        if self.error.is_some() {
            "error"
        } else if self.short_circuit {
            "short_circuit"
        } else {
            "ok"
        }
    }
}

/// Maximal run of grid points over which the smoothed metric keeps one direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    pub rising: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub metric: SweepMetric,
    pub points: Vec<SweepPoint>,
    pub argmax: Option<usize>,
    pub segments: Vec<Segment>,
}

impl SweepResult {
    pub fn argmax_value(&self) -> Option<f64> {
        self.argmax.map(|i| self.points[i].value)
    }

    /// Rises to the maximum and falls after it once grid noise is smoothed.
    pub fn is_unimodal(&self) -> bool {
        match self.segments.as_slice() {
            [] | [_] => true,
            [a, b] => a.rising && !b.rising,
            _ => false,
        }
    }
}

fn argmax(values: impl Iterator<Item = Option<f64>>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v > b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}

/// 3-point moving median, end points kept.
pub fn moving_median(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|i| {
            if i == 0 || i + 1 == n {
                values[i]
            } else {
                let mut w = [values[i - 1], values[i], values[i + 1]];
                w.sort_by(f64::total_cmp);
                w[1]
            }
        })
        .collect()
}

/// Monotonic segments of the median-smoothed metric. Failed points split the
/// curve and are left out.
pub fn monotonic_segments(points: &[SweepPoint]) -> Vec<Segment> {
    let idx: Vec<usize> = (0..points.len()).filter(|&i| points[i].metric.is_some()).collect();
    let raw: Vec<f64> = idx.iter().map(|&i| points[i].metric.unwrap_or(f64::NAN)).collect();
    let smooth = moving_median(&raw);
    let mut segments: Vec<Segment> = Vec::new();
    for k in 1..smooth.len() {
        let diff = smooth[k] - smooth[k - 1];
        if diff == 0.0 {
            if let Some(last) = segments.last_mut() {
                last.end = idx[k];
            }
            continue;
        }
        let rising = diff > 0.0;
        match segments.last_mut() {
            Some(last) if last.rising == rising => last.end = idx[k],
            _ => segments.push(Segment {
                start: idx[k - 1],
                end: idx[k],
                rising,
            }),
        }
    }
    segments
}

pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let points: Vec<SweepPoint> = spec
        .grid
        .par_iter()
        .map(|&value| {
            let (p, d) = spec.base.apply(spec.axis, value);
            SweepPoint {
                value,
                ..spec.base.evaluate(&p, &d, spec.metric)
            }
        })
        .collect();
    let argmax = argmax(points.iter().map(|p| p.metric));
    let segments = monotonic_segments(&points);
    Ok(SweepResult {
        axis: spec.axis,
        metric: spec.metric,
        points,
        argmax,
        segments,
    })
}

/// Metric over a rectangular grid of two axes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepMap {
    pub row_axis: SweepAxis,
    pub col_axis: SweepAxis,
    pub rows: Vec<f64>,
    pub cols: Vec<f64>,
    pub metric: SweepMetric,
    /// Row-major cells.
    pub cells: Vec<SweepPoint>,
    pub argmax: Option<(usize, usize)>,
}

impl SweepMap {
    pub fn cell(&self, row: usize, col: usize) -> &SweepPoint {
        &self.cells[row * self.cols.len() + col]
    }

    pub fn argmax_values(&self) -> Option<(f64, f64)> {
        self.argmax.map(|(r, c)| (self.rows[r], self.cols[c]))
    }
}

pub fn run_sweep_2d(
    base: &SweepBase,
    row_axis: SweepAxis,
    rows: &[f64],
    col_axis: SweepAxis,
    cols: &[f64],
    metric: SweepMetric,
) -> Result<SweepMap> {
    check_grid(row_axis.name(), rows)?;
    check_grid(col_axis.name(), cols)?;
    if row_axis == col_axis {
        return Err(Error::Config("a 2-D sweep needs two distinct axes".into()));
    }
    base.validate()?;
    let jobs: Vec<(f64, f64)> = rows
        .iter()
        .flat_map(|&r| cols.iter().map(move |&c| (r, c)))
        .collect();
    let cells: Vec<SweepPoint> = jobs
        .par_iter()
        .map(|&(r, c)| {
            let (params, drive) = base.apply(row_axis, r);
            let first = SweepBase {
                params,
                drive,
                ..base.clone()
            };
            let (p, d) = first.apply(col_axis, c);
            SweepPoint {
                value: c,
                ..base.evaluate(&p, &d, metric)
            }
        })
        .collect();
    let argmax = argmax(cells.iter().map(|p| p.metric)).map(|k| (k / cols.len(), k % cols.len()));
    Ok(SweepMap {
        row_axis,
        col_axis,
        rows: rows.to_vec(),
        cols: cols.to_vec(),
        metric,
        cells,
        argmax,
    })
}

/// Storage capacitance maximising the metric over `grid`.
pub fn optimize_cstore(base: &SweepBase, grid: &[f64], metric: SweepMetric) -> Result<f64> {
    let result = run_sweep(&SweepSpec {
        axis: SweepAxis::CStore,
        grid: grid.to_vec(),
        base: base.clone(),
        metric,
    })?;
    result
        .argmax_value()
        .ok_or_else(|| Error::Numerical("every c_store point failed".into()))
}

/// Mechanical cycles per flyback at the optimum of a clock-period sweep.
pub fn clock_ratio_report(base: &SweepBase, result: &SweepResult) -> Result<f64> {
    if result.axis != SweepAxis::ClockPeriod {
        return Err(Error::Config(format!(
            "clock ratio needs a clock_period sweep, got {}",
            result.axis
        )));
    }
    let t_clk = result
        .argmax_value()
        .ok_or_else(|| Error::Numerical("clock sweep has no valid point".into()))?;
    Ok(t_clk * base.drive.mech_frequency())
}

/// Net converted energy over a (frequency, C_min) grid with the clock
/// following the mechanical period.
pub fn low_frequency_viability_search(
    frequencies: &[f64],
    c_mins: &[f64],
    base: &SweepBase,
) -> Result<SweepMap> {
    if base.clock_cycles.is_none() {
        return Err(Error::Config(
            "viability search needs clock_cycles so the clock follows the frequency".into(),
        ));
    }
    let (_, c_max) = base.drive.c_range();
    if let Some(&c) = c_mins.iter().find(|&&c| c > c_max || c <= 0.0) {
        return Err(Error::Config(format!(
            "c_min grid value {c:e} lies outside (0, c_max = {c_max:e}]"
        )));
    }
    run_sweep_2d(
        base,
        SweepAxis::Frequency,
        frequencies,
        SweepAxis::CMin,
        c_mins,
        SweepMetric::NetConvertedEnergy,
    )
}
