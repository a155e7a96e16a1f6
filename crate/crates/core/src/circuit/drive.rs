use std::f64::consts::PI;
use std::sync::Arc;

use crate::device::DeviceModel;
use crate::error::{ensure, Result};
use crate::mech::MotionTrace;

/// Time law of the variable capacitor.
#[derive(Debug, Clone)]
pub enum CapacitanceDrive {
    /// `C_max − (C_max − C_min)·|sin(2π f t)|`: two minima per period.
    AbsSine { c_max: f64, c_min: f64, frequency: f64 },
    /// Plain cosine between the extremes, one minimum per period.
    DirectSine { c_max: f64, c_min: f64, frequency: f64 },
    /// Device capacitance evaluated along a simulated proof-mass trajectory.
    Coupled(CoupledDrive),
}

#[derive(Debug, Clone)]
pub struct CoupledDrive {
    pub device: DeviceModel,
    pub motion: Arc<MotionTrace>,
    pub frequency: f64,
}

impl CapacitanceDrive {
    pub fn abs_sine(c_max: f64, c_min: f64, frequency: f64) -> Self {
        Self::AbsSine { c_max, c_min, frequency }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Self::AbsSine { c_max, c_min, frequency } | Self::DirectSine { c_max, c_min, frequency } => {
                ensure(*c_min > 0.0 && c_min <= c_max && c_max.is_finite(), || {
                    format!("drive needs 0 < c_min <= c_max, got c_min = {c_min:e}, c_max = {c_max:e}")
                })?;
                ensure(*frequency > 0.0 && frequency.is_finite(), || {
                    format!("drive frequency must be positive, got {frequency}")
                })
            }
            Self::Coupled(c) => {
                c.device.validate()?;
                ensure(!c.motion.is_empty(), || "coupled drive needs a motion trace".into())?;
                ensure(c.frequency > 0.0, || "coupled drive frequency must be positive".into())
            }
        }
    }

    pub fn mech_frequency(&self) -> f64 {
        match self {
            Self::AbsSine { frequency, .. } | Self::DirectSine { frequency, .. } => *frequency,
            Self::Coupled(c) => c.frequency,
        }
    }

    /// Time span the drive is defined over.
    pub fn span(&self) -> f64 {
        match self {
            Self::Coupled(c) => *c.motion.time.last().unwrap_or(&0.0),
            _ => f64::INFINITY,
        }
    }

    pub fn c_range(&self) -> (f64, f64) {
        match self {
            Self::AbsSine { c_max, c_min, .. } | Self::DirectSine { c_max, c_min, .. } => (*c_min, *c_max),
            Self::Coupled(c) => (c.device.c_min(), c.device.c_max()),
        }
    }

    /// Capacitance and its time derivative at `t`.
    pub fn eval_with_rate(&self, t: f64) -> (f64, f64) {
        match self {
            Self::AbsSine { c_max, c_min, frequency } => {
                let w = 2.0 * PI * frequency;
                let s = (w * t).sin();
                let c = w * (w * t).cos();
                // Right derivative at the kinks where sin = 0.
                let sign = if s > 0.0 || (s == 0.0 && c > 0.0) { 1.0 } else { -1.0 };
                let span = c_max - c_min;
                (c_max - span * s.abs(), -span * sign * c)
            }
            Self::DirectSine { c_max, c_min, frequency } => {
                let w = 2.0 * PI * frequency;
                let mid = 0.5 * (c_max + c_min);
                let half = 0.5 * (c_max - c_min);
                (mid + half * (w * t).cos(), -half * w * (w * t).sin())
            }
            Self::Coupled(c) => {
                let (x, v) = c.motion.sample(t);
                let cap = c.device.capacitance_clamped(x);
                (cap, c.device.capacitance_slope(x) * v)
            }
        }
    }

    /// Capacitance rate at `t` on the smooth piece that contains `t_ref`.
    pub fn rate_on_piece(&self, t: f64, t_ref: f64) -> f64 {
        match self {
            Self::AbsSine { c_max, c_min, frequency } => {
                let w = 2.0 * PI * frequency;
                let sign = if (w * t_ref).sin() >= 0.0 { 1.0 } else { -1.0 };
                -(c_max - c_min) * sign * w * (w * t).cos()
            }
            _ => self.eval_with_rate(t).1,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_with_rate(t).0
    }

    /// Next non-smooth point of C(t) strictly after `t`.
    pub fn next_kink(&self, t: f64) -> f64 {
        match self {
            Self::AbsSine { frequency, .. } => {
                let half = 0.5 / frequency;
                let k = (t / half).floor() + 1.0;
                let mut next = k * half;
                if next <= t * (1.0 + 1e-14) {
                    next += half;
                }
                next
            }
            _ => f64::INFINITY,
        }
    }
}

/// Capacitance at `t`.
pub fn capacitance_drive_eval(drive: &CapacitanceDrive, t: f64) -> f64 {
    drive.eval(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn abs_sine_extremes() {
        let d = CapacitanceDrive::abs_sine(208e-12, 47e-12, 300.0);
        assert_eq!(d.eval(0.0), 208e-12);
        assert!((d.eval(1.0 / 1200.0) - 47e-12).abs() < 1e-24);
        assert!((d.eval(3.0 / 1200.0) - 47e-12).abs() < 1e-24);
    }

    #[test]
    fn abs_sine_rate_matches_finite_difference() {
        let d = CapacitanceDrive::abs_sine(208e-12, 47e-12, 300.0);
        for &t in &[1e-4, 7e-4, 2.1e-3, 3.0e-3] {
            let h = 1e-9;
            let fd = (d.eval(t + h) - d.eval(t - h)) / (2.0 * h);
            let (_, rate) = d.eval_with_rate(t);
            assert!((fd - rate).abs() < 1e-6 * rate.abs().max(1e-12), "t={t}");
        }
    }

    #[test]
    fn piece_rate_at_kink() {
        let d = CapacitanceDrive::abs_sine(208e-12, 47e-12, 300.0);
        let kink = 1.0 / 600.0;
        let before = d.rate_on_piece(kink, kink - 1e-5);
        let after = d.rate_on_piece(kink, kink + 1e-5);
        assert!(before > 0.0 && after < 0.0);
        assert!((before + after).abs() < 1e-9 * before);
    }

    #[test]
    fn kinks_every_half_period() {
        let d = CapacitanceDrive::abs_sine(2e-10, 1e-10, 100.0);
        assert!((d.next_kink(0.0) - 0.005).abs() < 1e-15);
        assert!((d.next_kink(0.005) - 0.010).abs() < 1e-15);
        assert!((d.next_kink(0.0051) - 0.010).abs() < 1e-15);
    }
}
