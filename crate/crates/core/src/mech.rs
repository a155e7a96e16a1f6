//! Base-excited proof-mass dynamics with hard travel stops.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::device::DeviceModel;
use crate::error::{domain, ensure, Error, Result};

pub const SILICON_DENSITY: f64 = 2330.0;

/// Mechanical periods simulated per frequency-response point.
pub const RESPONSE_PERIODS: usize = 200;
/// Leading periods discarded as transient.
pub const RESPONSE_DISCARD: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopperModel {
    /// Position saturates; velocity is kept.
    Clamp,
    /// Position saturates and the velocity is zeroed on contact.
    InelasticStop,
    /// No travel limit.
    Disabled,
}

/// Constant-voltage electrostatic force `½ V² dC/dx` on the proof mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElectrostaticCoupling {
    pub bias_voltage: f64,
    pub device: DeviceModel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonatorParams {
    pub mass: f64,
    pub stiffness: f64,
    pub quality_factor: f64,
    pub stopper_limit: f64,
    pub stopper_model: StopperModel,
    pub coupling: Option<ElectrostaticCoupling>,
}

impl ResonatorParams {
    pub fn new(mass: f64, stiffness: f64, quality_factor: f64, stopper_limit: f64) -> Self {
        Self {
            mass,
            stiffness,
            quality_factor,
            stopper_limit,
            stopper_model: StopperModel::InelasticStop,
            coupling: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.mass.is_finite() && self.mass > 0.0, || {
            format!("mass must be positive, got {}", self.mass)
        })?;
        ensure(self.stiffness.is_finite() && self.stiffness > 0.0, || {
            format!("stiffness must be positive, got {}", self.stiffness)
        })?;
        ensure(self.quality_factor > 0.5, || {
            format!("quality_factor must exceed 0.5, got {}", self.quality_factor)
        })?;
        ensure(self.stopper_limit > 0.0, || {
            format!("stopper_limit must be positive, got {}", self.stopper_limit)
        })
    }

    pub fn natural_frequency(&self) -> f64 {
        (self.stiffness / self.mass).sqrt() / (2.0 * PI)
    }

    /// Viscous damping coefficient b = √(k·m)/Q.
    pub fn damping(&self) -> f64 {
        (self.stiffness * self.mass).sqrt() / self.quality_factor
    }

    /// Default integration step, a 2000th of the natural period.
    pub fn default_step(&self) -> f64 {
        1.0 / (2000.0 * self.natural_frequency())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ExcitationSpec {
    /// Base displacement `amplitude · sin(2π f t)`.
    Sinusoid { amplitude: f64, frequency: f64 },
    /// Stepped sine sweep, evaluated point by point.
    FrequencySweep {
        amplitude: f64,
        start: f64,
        stop: f64,
        step: f64,
    },
}

impl ExcitationSpec {
    pub fn amplitude(&self) -> f64 {
        match *self {
            Self::Sinusoid { amplitude, .. } | Self::FrequencySweep { amplitude, .. } => amplitude,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.amplitude() >= 0.0, || {
            format!("excitation amplitude must be non-negative, got {}", self.amplitude())
        })?;
        match *self {
            Self::Sinusoid { frequency, .. } => ensure(frequency > 0.0, || {
                format!("excitation frequency must be positive, got {frequency}")
            }),
            Self::FrequencySweep { start, stop, step, .. } => ensure(
                start > 0.0 && stop >= start && step > 0.0,
                || format!("invalid sweep range {start}..{stop} step {step}"),
            ),
        }
    }

    /// Grid of excitation frequencies (a single point for a sinusoid).
    pub fn frequencies(&self) -> Vec<f64> {
        match *self {
            Self::Sinusoid { frequency, .. } => vec![frequency],
            Self::FrequencySweep { start, stop, step, .. } => {
                let n = ((stop - start) / step + 1e-9).floor() as usize;
                (0..=n).map(|i| start + step * i as f64).collect()
            }
        }
    }
}

/// Proof-mass displacement relative to the frame.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotionTrace {
    pub time: Vec<f64>,
    pub displacement: Vec<f64>,
    pub velocity: Vec<f64>,
}

impl MotionTrace {
    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn max_abs_displacement(&self) -> f64 {
        self.displacement.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn mechanical_energy(&self, params: &ResonatorParams) -> Vec<f64> {
        self.displacement
            .iter()
            .zip(&self.velocity)
            .map(|(x, v)| 0.5 * params.mass * v * v + 0.5 * params.stiffness * x * x)
            .collect()
    }

    /// Cubic Hermite interpolation of position and velocity at `t`.
    pub fn sample(&self, t: f64) -> (f64, f64) {
        let n = self.time.len();
        if n == 0 {
            return (0.0, 0.0);
        }
        if t <= self.time[0] {
            return (self.displacement[0], self.velocity[0]);
        }
        if t >= self.time[n - 1] {
            return (self.displacement[n - 1], self.velocity[n - 1]);
        }
        let i = match self.time.binary_search_by(|p| p.total_cmp(&t)) {
            Ok(i) => return (self.displacement[i], self.velocity[i]),
            Err(i) => i - 1,
        };
        let (t0, t1) = (self.time[i], self.time[i + 1]);
        let h = t1 - t0;
        let s = (t - t0) / h;
        let (x0, x1) = (self.displacement[i], self.displacement[i + 1]);
        let (v0, v1) = (self.velocity[i] * h, self.velocity[i + 1] * h);
        let s2 = s * s;
        let s3 = s2 * s;
        let x = (2.0 * s3 - 3.0 * s2 + 1.0) * x0
            + (s3 - 2.0 * s2 + s) * v0
            + (-2.0 * s3 + 3.0 * s2) * x1
            + (s3 - s2) * v1;
        let dx = ((6.0 * s2 - 6.0 * s) * x0
            + (3.0 * s2 - 4.0 * s + 1.0) * v0
            + (-6.0 * s2 + 6.0 * s) * x1
            + (3.0 * s2 - 2.0 * s) * v1)
            / h;
        (x, dx)
    }
}

pub fn proof_mass_from_geometry(
    footprint_area: f64,
    silicon_thickness: f64,
    density: f64,
    removed_fraction: f64,
) -> Result<f64> {
    for (name, v) in [
        ("footprint_area", footprint_area),
        ("silicon_thickness", silicon_thickness),
        ("density", density),
    ] {
        ensure(v.is_finite() && v > 0.0, || format!("{name} must be positive, got {v}"))?;
    }
    if !(0.0..1.0).contains(&removed_fraction) {
        return domain(format!(
            "removed_fraction must lie in [0, 1), got {removed_fraction}"
        ));
    }
    Ok(footprint_area * silicon_thickness * density * (1.0 - removed_fraction))
}

pub fn stiffness_from_resonance(mass: f64, f0: f64) -> Result<f64> {
    ensure(mass.is_finite() && mass > 0.0, || format!("mass must be positive, got {mass}"))?;
    ensure(f0.is_finite() && f0 > 0.0, || format!("f0 must be positive, got {f0}"))?;
    let w = 2.0 * PI * f0;
    Ok(mass * w * w)
}

/// Initial relative position and velocity.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct InitialState {
    pub displacement: f64,
    pub velocity: f64,
}

/// Simulate from rest.
pub fn simulate_motion(
    params: &ResonatorParams,
    exc: &ExcitationSpec,
    duration: f64,
    max_step: f64,
) -> Result<MotionTrace> {
    simulate_motion_from(params, exc, InitialState::default(), duration, max_step)
}

/// Fixed-step RK4 on `m·ẍ + b·ẋ + k·x = −m·a_base(t) + F_es(x)`, stoppers
/// applied at sample boundaries.
pub fn simulate_motion_from(
    params: &ResonatorParams,
    exc: &ExcitationSpec,
    initial: InitialState,
    duration: f64,
    max_step: f64,
) -> Result<MotionTrace> {
    params.validate()?;
    exc.validate()?;
    let (amplitude, frequency) = match *exc {
        ExcitationSpec::Sinusoid { amplitude, frequency } => (amplitude, frequency),
        ExcitationSpec::FrequencySweep { .. } => {
            return domain("simulate_motion needs a single-frequency excitation; use frequency_response");
        }
    };
    ensure(duration.is_finite() && duration > 0.0, || {
        format!("duration must be positive, got {duration}")
    })?;
    let step_limit = 1.0 / (50.0 * params.natural_frequency());
    ensure(max_step > 0.0 && max_step <= step_limit * (1.0 + 1e-12), || {
        format!("max_step {max_step} s exceeds 1/(50·f0) = {step_limit} s")
    })?;

    let steps = (duration / max_step).ceil() as usize;
    let h = duration / steps as f64;
    let w = 2.0 * PI * frequency;
    let base_acc_gain = amplitude * w * w;
    let inv_m = 1.0 / params.mass;
    let b = params.damping();
    let k = params.stiffness;
    let lim = params.stopper_limit;

    let accel = |t: f64, x: f64, v: f64| -> f64 {
        let mut f = -b * v - k * x;
        if let Some(c) = &params.coupling {
            f += 0.5 * c.bias_voltage * c.bias_voltage * c.device.capacitance_slope(x);
        }
        // −a_base with y = Y sin(ωt)
        f * inv_m + base_acc_gain * (w * t).sin()
    };

    let mut trace = MotionTrace {
        time: Vec::with_capacity(steps + 1),
        displacement: Vec::with_capacity(steps + 1),
        velocity: Vec::with_capacity(steps + 1),
    };
    let (mut x, mut v) = (initial.displacement, initial.velocity);
    apply_stopper(params.stopper_model, lim, &mut x, &mut v);
    trace.time.push(0.0);
    trace.displacement.push(x);
    trace.velocity.push(v);

    for n in 0..steps {
        let t = n as f64 * h;
        let k1x = v;
        let k1v = accel(t, x, v);
        let k2x = v + 0.5 * h * k1v;
        let k2v = accel(t + 0.5 * h, x + 0.5 * h * k1x, k2x);
        let k3x = v + 0.5 * h * k2v;
        let k3v = accel(t + 0.5 * h, x + 0.5 * h * k2x, k3x);
        let k4x = v + h * k3v;
        let k4v = accel(t + h, x + h * k3x, k4x);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        if !(x.is_finite() && v.is_finite()) || x.abs() > 1.0 {
            return Err(Error::Numerical(format!(
                "proof-mass integration diverged at t = {:.6e} s (x = {x:e}, v = {v:e}); reduce max_step",
                t + h
            )));
        }
        apply_stopper(params.stopper_model, lim, &mut x, &mut v);
        trace.time.push((n + 1) as f64 * h);
        trace.displacement.push(x);
        trace.velocity.push(v);
    }
    Ok(trace)
}

fn apply_stopper(model: StopperModel, lim: f64, x: &mut f64, v: &mut f64) {
    if model == StopperModel::Disabled || x.abs() <= lim {
        return;
    }
    *x = x.clamp(-lim, lim);
    if model == StopperModel::InelasticStop {
        *v = 0.0;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub frequency: f64,
    pub peak_displacement: f64,
}

/// Steady-state peak displacement per excitation frequency.
///
/// Each point runs [`RESPONSE_PERIODS`] excitation periods and keeps the
/// maximum over the periods after [`RESPONSE_DISCARD`]. Points run in
/// parallel; the output order follows `frequencies`.
pub fn frequency_response(
    params: &ResonatorParams,
    amplitude: f64,
    frequencies: &[f64],
    max_step: f64,
) -> Result<Vec<ResponsePoint>> {
    frequencies
        .par_iter()
        .map(|&f| {
            ensure(f.is_finite() && f > 0.0, || format!("frequency must be positive, got {f}"))?;
            let period = 1.0 / f;
            let step = max_step.min(period / 200.0);
            let exc = ExcitationSpec::Sinusoid { amplitude, frequency: f };
            let trace = simulate_motion(params, &exc, RESPONSE_PERIODS as f64 * period, step)?;
            let t_keep = RESPONSE_DISCARD as f64 * period;
            let peak = trace
                .time
                .iter()
                .zip(&trace.displacement)
                .filter(|(t, _)| **t >= t_keep)
                .fold(0.0f64, |m, (_, x)| m.max(x.abs()));
            Ok(ResponsePoint { frequency: f, peak_displacement: peak })
        })
        .collect()
}

/// Frequency of the response maximum. A stopper-capped response has a flat
/// top, so the centre of the grid points sharing the maximum is reported.
pub fn peak_frequency(response: &[ResponsePoint]) -> Option<f64> {
    let max = response.iter().map(|p| p.peak_displacement).fold(f64::NAN, f64::max);
    if !max.is_finite() {
        return None;
    }
    let top: Vec<f64> = response
        .iter()
        .filter(|p| p.peak_displacement >= max * (1.0 - 1e-9))
        .map(|p| p.frequency)
        .collect();
    Some(0.5 * (top[0] + top[top.len() - 1]))
}
