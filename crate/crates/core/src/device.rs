//! Variable capacitance of the in-plane overlap plate structure.
//!
//! The total capacitance is the sum of three parts: the overlap term of the
//! electrode array, a fringe-field term that grows as the overlap shrinks, and
//! a displacement-independent substrate parasitic. A shallow backside etch
//! lowers the minimum capacitance without touching the maximum.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, ensure, Result};

/// Permittivity of free space in F/m.
pub const VACUUM_PERMITTIVITY: f64 = 8.854_187_812_8e-12;

/// Lower bound applied to every capacitance value.
pub const DEFAULT_CAPACITANCE_FLOOR: f64 = 1e-12;

/// Capacitance reduction observed when the substrate is tied to ground.
pub const DEFAULT_GROUNDING_REDUCTION: f64 = 33e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectrodeGeometry {
    pub n_fingers: u32,
    pub finger_length: f64,
    pub finger_width: f64,
    pub dielectric_thickness: f64,
    pub air_gap: f64,
    pub dielectric_rel_permittivity: f64,
    /// Mechanical travel limit on either side of the rest position.
    pub stopper_limit: f64,
}

impl ElectrodeGeometry {
    pub fn validate(&self) -> Result<()> {
        ensure(self.n_fingers >= 1, || "n_fingers must be at least 1".into())?;
        for (name, v) in [
            ("finger_length", self.finger_length),
            ("finger_width", self.finger_width),
            ("dielectric_thickness", self.dielectric_thickness),
            ("air_gap", self.air_gap),
            ("stopper_limit", self.stopper_limit),
        ] {
            ensure(v.is_finite() && v > 0.0, || {
                format!("{name} must be strictly positive, got {v}")
            })?;
        }
        ensure(self.dielectric_rel_permittivity >= 1.0, || {
            format!(
                "dielectric_rel_permittivity must be >= 1, got {}",
                self.dielectric_rel_permittivity
            )
        })?;
        ensure(self.stopper_limit <= self.finger_width, || {
            format!(
                "stopper_limit {} exceeds finger_width {}",
                self.stopper_limit, self.finger_width
            )
        })
    }

    /// Overlap capacitance per metre of lost overlap, i.e. the slope magnitude
    /// of the linear term.
    pub fn capacitance_per_width(&self) -> f64 {
        let er = self.dielectric_rel_permittivity;
        f64::from(self.n_fingers) * 2.0 * VACUUM_PERMITTIVITY * er * self.finger_length
            / (self.dielectric_thickness + er * self.air_gap)
    }

    fn check_travel(&self, x: f64) -> Result<()> {
        if !x.is_finite() || x.abs() > self.stopper_limit * (1.0 + 1e-12) {
            return domain(format!(
                "displacement {x} m outside stopper travel ±{} m",
                self.stopper_limit
            ));
        }
        Ok(())
    }

    /// Position along the travel in [0, 1]: 0 at rest, 1 against a stopper.
    fn travel_fraction(&self, x: f64) -> f64 {
        (x.abs() / self.stopper_limit).min(1.0)
    }
}

/// Overlap capacitance of the electrode array at lateral displacement `x`.
pub fn linear_capacitance(geom: &ElectrodeGeometry, x: f64) -> Result<f64> {
    geom.check_travel(x)?;
    let overlap = (geom.finger_width - x.abs()).max(0.0);
    Ok(geom.capacitance_per_width() * overlap)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParasiticModel {
    pub c_substrate: f64,
    /// Fringe contribution when the electrodes sit at full travel (smallest overlap).
    pub c_fringe_peak: f64,
    pub substrate_grounded: bool,
    pub grounding_reduction: f64,
}

impl Default for ParasiticModel {
    fn default() -> Self {
        Self {
            c_substrate: 0.0,
            c_fringe_peak: 0.0,
            substrate_grounded: false,
            grounding_reduction: DEFAULT_GROUNDING_REDUCTION,
        }
    }
}

impl ParasiticModel {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_substrate", self.c_substrate),
            ("c_fringe_peak", self.c_fringe_peak),
            ("grounding_reduction", self.grounding_reduction),
        ] {
            ensure(v.is_finite() && v >= 0.0, || {
                format!("{name} must be non-negative, got {v}")
            })?;
        }
        Ok(())
    }

    pub fn effective_substrate(&self) -> f64 {
        if self.substrate_grounded {
            (self.c_substrate - self.grounding_reduction).max(0.0)
        } else {
            self.c_substrate
        }
    }

    /// Smooth even bump: zero slope at rest, full peak against the stoppers.
    fn fringe(&self, travel_fraction: f64) -> f64 {
        self.c_fringe_peak * travel_shape(travel_fraction)
    }
}

fn travel_shape(u: f64) -> f64 {
    let s = (0.5 * PI * u).sin();
    s * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BacksideDrieModel {
    pub depth: f64,
    pub cmin_baseline: f64,
    pub cmin_plateau: f64,
    pub plateau_depth: f64,
    pub mass_loss_at_plateau: f64,
}

/// Residual of the exponential etch-depth curve at the plateau depth.
const DRIE_RESIDUAL: f64 = 0.01;

impl Default for BacksideDrieModel {
    /// No etch effect: baseline and plateau coincide.
    fn default() -> Self {
        Self {
            depth: 0.0,
            cmin_baseline: 0.0,
            cmin_plateau: 0.0,
            plateau_depth: 20e-6,
            mass_loss_at_plateau: 0.025,
        }
    }
}

impl BacksideDrieModel {
    pub fn validate(&self) -> Result<()> {
        ensure(self.depth.is_finite() && self.depth >= 0.0, || {
            format!("drie depth must be non-negative, got {}", self.depth)
        })?;
        ensure(self.plateau_depth.is_finite() && self.plateau_depth > 0.0, || {
            format!("plateau_depth must be positive, got {}", self.plateau_depth)
        })?;
        ensure(self.cmin_plateau >= 0.0, || {
            format!("cmin_plateau must be non-negative, got {}", self.cmin_plateau)
        })?;
        ensure(self.cmin_plateau <= self.cmin_baseline, || {
            format!(
                "cmin_plateau {} exceeds cmin_baseline {}",
                self.cmin_plateau, self.cmin_baseline
            )
        })?;
        ensure((0.0..=1.0).contains(&self.mass_loss_at_plateau), || {
            format!(
                "mass_loss_at_plateau must lie in [0, 1], got {}",
                self.mass_loss_at_plateau
            )
        })
    }

    /// Drop of the minimum capacitance below the baseline at `depth`.
    pub fn cmin_reduction(&self, depth: f64) -> Result<f64> {
        Ok(self.cmin_baseline - cmin_vs_drie_depth(self, depth)?)
    }
}

/// Minimum capacitance after a backside etch of `depth`.
///
/// Exponential decay from the baseline whose rate leaves a 1% residual at the
/// plateau depth, renormalised to land exactly on the plateau value there.
pub fn cmin_vs_drie_depth(drie: &BacksideDrieModel, depth: f64) -> Result<f64> {
    if !depth.is_finite() || depth < 0.0 {
        return domain(format!("etch depth must be non-negative, got {depth}"));
    }
    if depth >= drie.plateau_depth {
        return Ok(drie.cmin_plateau);
    }
    let rate = -DRIE_RESIDUAL.ln() / drie.plateau_depth;
    let tail = (-rate * drie.plateau_depth).exp();
    let shape = ((-rate * depth).exp() - tail) / (1.0 - tail);
    Ok(drie.cmin_plateau + (drie.cmin_baseline - drie.cmin_plateau) * shape)
}

/// Fraction of proof-mass silicon removed by an etch of `depth`.
pub fn mass_loss_fraction(drie: &BacksideDrieModel, depth: f64) -> Result<f64> {
    if !depth.is_finite() || depth < 0.0 {
        return domain(format!("etch depth must be non-negative, got {depth}"));
    }
    let etched = depth.min(drie.plateau_depth) / drie.plateau_depth;
    Ok((drie.mass_loss_at_plateau * etched).clamp(0.0, 1.0))
}

/// Total capacitance with the default 1 pF floor.
pub fn total_capacitance(
    geom: &ElectrodeGeometry,
    par: &ParasiticModel,
    drie: &BacksideDrieModel,
    x: f64,
) -> Result<f64> {
    capacitance_with_floor(geom, par, drie, DEFAULT_CAPACITANCE_FLOOR, x)
}

fn capacitance_with_floor(
    geom: &ElectrodeGeometry,
    par: &ParasiticModel,
    drie: &BacksideDrieModel,
    floor: f64,
    x: f64,
) -> Result<f64> {
    let linear = linear_capacitance(geom, x)?;
    let u = geom.travel_fraction(x);
    // The etch removes parasitic field only where the silicon faces the
    // bottom electrodes, so it acts with the same travel shape as the fringe.
    let etch = drie.cmin_reduction(drie.depth)? * travel_shape(u);
    let raw = linear + par.fringe(u) + par.effective_substrate() - etch;
    Ok(raw.max(floor))
}

/// A complete variable-capacitor description.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub geometry: ElectrodeGeometry,
    pub parasitics: ParasiticModel,
    pub drie: BacksideDrieModel,
    pub c_floor: f64,
}

impl DeviceModel {
    pub fn new(geometry: ElectrodeGeometry, parasitics: ParasiticModel) -> Self {
        Self {
            geometry,
            parasitics,
            drie: BacksideDrieModel::default(),
            c_floor: DEFAULT_CAPACITANCE_FLOOR,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.parasitics.validate()?;
        self.drie.validate()?;
        ensure(self.c_floor > 0.0, || {
            format!("capacitance floor must be positive, got {}", self.c_floor)
        })
    }

    pub fn capacitance(&self, x: f64) -> Result<f64> {
        capacitance_with_floor(&self.geometry, &self.parasitics, &self.drie, self.c_floor, x)
    }

    /// Capacitance at a displacement clamped into the travel range.
    pub(crate) fn capacitance_clamped(&self, x: f64) -> f64 {
        let lim = self.geometry.stopper_limit;
        self.capacitance(x.clamp(-lim, lim))
            .expect("clamped displacement is always admissible")
    }

    /// dC/dx by central difference, one-sided at the stoppers.
    pub fn capacitance_slope(&self, x: f64) -> f64 {
        let lim = self.geometry.stopper_limit;
        let h = lim * 1e-6;
        let lo = (x - h).max(-lim);
        let hi = (x + h).min(lim);
        (self.capacitance_clamped(hi) - self.capacitance_clamped(lo)) / (hi - lo)
    }

    pub fn c_max(&self) -> f64 {
        self.capacitance_clamped(0.0)
    }

    pub fn c_min(&self) -> f64 {
        self.capacitance_clamped(self.geometry.stopper_limit)
    }

    pub fn with_substrate_grounded(mut self, grounded: bool) -> Self {
        self.parasitics.substrate_grounded = grounded;
        self
    }

    pub fn with_drie_depth(mut self, depth: f64) -> Self {
        self.drie.depth = depth;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom() -> ElectrodeGeometry {
        ElectrodeGeometry {
            n_fingers: 48,
            finger_length: 4.8e-3,
            finger_width: 50e-6,
            dielectric_thickness: 0.3e-6,
            air_gap: 1.5e-6,
            dielectric_rel_permittivity: 7.5,
            stopper_limit: 50e-6,
        }
    }

    #[test]
    fn linear_term_vanishes_at_full_travel() {
        let g = geom();
        assert_eq!(linear_capacitance(&g, g.finger_width).unwrap(), 0.0);
    }

    #[test]
    fn linear_term_at_rest_matches_formula() {
        let g = geom();
        let expected = 48.0 * 2.0 * VACUUM_PERMITTIVITY * 7.5 * 4.8e-3 * 50e-6
            / (0.3e-6 + 7.5 * 1.5e-6);
        assert_relative_eq!(linear_capacitance(&g, 0.0).unwrap(), expected, max_relative = 1e-14);
    }

    #[test]
    fn travel_beyond_stopper_is_rejected() {
        assert!(linear_capacitance(&geom(), 51e-6).is_err());
        assert!(linear_capacitance(&geom(), f64::NAN).is_err());
    }

    #[test]
    fn stopper_wider_than_finger_is_invalid() {
        let mut g = geom();
        g.stopper_limit = 60e-6;
        assert!(g.validate().is_err());
        g.stopper_limit = 50e-6;
        g.dielectric_rel_permittivity = 0.5;
        assert!(g.validate().is_err());
    }

    #[test]
    fn grounding_never_goes_negative() {
        let p = ParasiticModel {
            c_substrate: 10e-12,
            substrate_grounded: true,
            ..Default::default()
        };
        assert_eq!(p.effective_substrate(), 0.0);
    }

    #[test]
    fn drie_curve_endpoints() {
        let d = BacksideDrieModel {
            cmin_baseline: 140e-12,
            cmin_plateau: 48e-12,
            ..Default::default()
        };
        assert_eq!(cmin_vs_drie_depth(&d, 0.0).unwrap(), 140e-12);
        assert_eq!(cmin_vs_drie_depth(&d, 20e-6).unwrap(), 48e-12);
        assert_eq!(cmin_vs_drie_depth(&d, 40e-6).unwrap(), 48e-12);
        assert!(cmin_vs_drie_depth(&d, -1e-6).is_err());
    }

    #[test]
    fn mass_loss_is_linear_up_to_plateau() {
        let d = BacksideDrieModel::default();
        assert_eq!(mass_loss_fraction(&d, 0.0).unwrap(), 0.0);
        assert_relative_eq!(mass_loss_fraction(&d, 10e-6).unwrap(), 0.0125, max_relative = 1e-12);
        assert_relative_eq!(mass_loss_fraction(&d, 20e-6).unwrap(), 0.025, max_relative = 1e-12);
        assert_relative_eq!(mass_loss_fraction(&d, 80e-6).unwrap(), 0.025, max_relative = 1e-12);
        assert!(mass_loss_fraction(&d, -1.0).is_err());
    }

    #[test]
    fn floor_applies_when_everything_cancels() {
        let m = DeviceModel::new(geom(), ParasiticModel::default());
        assert_eq!(m.c_min(), DEFAULT_CAPACITANCE_FLOOR);
    }
}
