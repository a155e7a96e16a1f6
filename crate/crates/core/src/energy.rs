//! Lossless-electronics harvest bound.
//!
//! With a starting voltage `V_in` the energy converted per capacitance
//! excursion is `½·V_in²·(C_max − C_min)·(C_max/C_min)`. The capacitance
//! depends on |x|, so it reaches its minimum twice per mechanical period and
//! the power is `2·f·E`.

use serde::{Deserialize, Serialize};

use crate::device::{cmin_vs_drie_depth, BacksideDrieModel};
use crate::error::{ensure, Result};

/// 11 × 6.5 × 0.9 mm³, connection pads excluded.
pub const DEFAULT_DEVICE_VOLUME: f64 = 11e-3 * 6.5e-3 * 0.9e-3;

/// W/m³ to μW/cm³: 1e6 μW per W over 1e6 cm³ per m³.
pub const W_PER_M3_TO_UW_PER_CM3: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestOperatingPoint {
    pub v_in: f64,
    pub c_max: f64,
    pub c_min: f64,
    pub frequency: f64,
    pub device_volume: f64,
}

impl HarvestOperatingPoint {
    pub fn new(v_in: f64, c_max: f64, c_min: f64, frequency: f64) -> Self {
        Self {
            v_in,
            c_max,
            c_min,
            frequency,
            device_volume: DEFAULT_DEVICE_VOLUME,
        }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.v_in.is_finite() && self.v_in >= 0.0, || {
            format!("v_in must be non-negative, got {}", self.v_in)
        })?;
        ensure(self.c_min > 0.0, || {
            format!(
                "c_min must be strictly positive (the converter voltage diverges as C_min → 0), got {}",
                self.c_min
            )
        })?;
        ensure(self.c_min <= self.c_max && self.c_max.is_finite(), || {
            format!("c_min {} exceeds c_max {}", self.c_min, self.c_max)
        })?;
        ensure(self.frequency.is_finite() && self.frequency > 0.0, || {
            format!("frequency must be positive, got {}", self.frequency)
        })?;
        ensure(self.device_volume.is_finite() && self.device_volume > 0.0, || {
            format!("device_volume must be positive, got {}", self.device_volume)
        })
    }
}

pub fn cycle_energy(op: &HarvestOperatingPoint) -> Result<f64> {
    op.validate()?;
    Ok(0.5 * op.v_in * op.v_in * (op.c_max - op.c_min) * (op.c_max / op.c_min))
}

pub fn harvested_power(op: &HarvestOperatingPoint) -> Result<f64> {
    Ok(2.0 * op.frequency * cycle_energy(op)?)
}

/// Power per unit volume in W/m³ (numerically equal to μW/cm³).
pub fn power_density(op: &HarvestOperatingPoint) -> Result<f64> {
    Ok(harvested_power(op)? / op.device_volume)
}

/// Density projection for a backside etch of `depth`, holding `c_max` fixed.
pub fn drie_power_density_projection(
    v_in: f64,
    frequency: f64,
    c_max: f64,
    drie: &BacksideDrieModel,
    depth: f64,
    device_volume: f64,
) -> Result<f64> {
    let c_min = cmin_vs_drie_depth(drie, depth)?;
    power_density(&HarvestOperatingPoint {
        v_in,
        c_max,
        c_min,
        frequency,
        device_volume,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarvestSummary {
    pub op: HarvestOperatingPoint,
    pub energy: f64,
    pub power: f64,
    pub density: f64,
}

pub fn summarize(op: &HarvestOperatingPoint) -> Result<HarvestSummary> {
    Ok(HarvestSummary {
        op: *op,
        energy: cycle_energy(op)?,
        power: harvested_power(op)?,
        density: power_density(op)?,
    })
}
