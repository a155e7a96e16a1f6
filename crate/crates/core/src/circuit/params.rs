use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// Piecewise-linear diode: `G_off·v` below the knee, a line of slope
/// `1/R_on` above it. The two pieces meet at `v = V_f`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiodeModel {
    pub forward_drop: f64,
    pub on_resistance: f64,
    pub off_conductance: f64,
}

impl DiodeModel {
    pub const fn ideal() -> Self {
        Self {
            forward_drop: 0.0,
            on_resistance: 1e-3,
            off_conductance: 0.0,
        }
    }

    pub const fn silicon() -> Self {
        Self {
            forward_drop: 0.6,
            on_resistance: 10.0,
            off_conductance: 1e-10,
        }
    }

    pub fn validate(&self, name: &str) -> Result<()> {
        ensure(self.forward_drop.is_finite() && self.forward_drop >= 0.0, || {
            format!("{name}: forward_drop must be non-negative")
        })?;
        ensure(self.on_resistance.is_finite() && self.on_resistance > 0.0, || {
            format!("{name}: on_resistance must be positive")
        })?;
        ensure(
            self.off_conductance >= 0.0 && self.off_conductance * self.on_resistance < 1e-3,
            || format!("{name}: off_conductance must be non-negative and far below 1/on_resistance"),
        )
    }

    /// Linear branch `i = g·v + j` for the given conduction state.
    pub(crate) fn branch(&self, on: bool) -> (f64, f64) {
        if on {
            let g = 1.0 / self.on_resistance;
            (g, self.off_conductance * self.forward_drop - g * self.forward_drop)
        } else {
            (self.off_conductance, 0.0)
        }
    }
}

impl Default for DiodeModel {
    fn default() -> Self {
        Self::silicon()
    }
}

/// Clocked flyback transistor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SwitchModel {
    pub on_resistance: f64,
    pub off_conductance: f64,
    pub clock_period: f64,
    pub pulse_width: f64,
    /// Time of the first rising edge.
    pub clock_offset: f64,
}

impl SwitchModel {
    pub fn validate(&self) -> Result<()> {
        ensure(self.on_resistance.is_finite() && self.on_resistance > 0.0, || {
            "switch on_resistance must be positive".into()
        })?;
        ensure(self.off_conductance > 0.0, || {
            "switch off_conductance must be positive".into()
        })?;
        ensure(
            self.pulse_width > 0.0 && self.pulse_width < self.clock_period,
            || {
                format!(
                    "pulse width {} s must lie strictly between 0 and the clock period {} s",
                    self.pulse_width, self.clock_period
                )
            },
        )?;
        ensure(self.clock_offset >= 0.0, || "clock_offset must be non-negative".into())
    }

    /// Whether the switch conducts during `[t, t + dt)`.
    pub fn is_on(&self, t: f64) -> bool {
        if t < self.clock_offset {
            return false;
        }
        let phase = (t - self.clock_offset).rem_euclid(self.clock_period);
        phase < self.pulse_width * (1.0 - 1e-12)
    }

    /// First clock edge (rising or falling) strictly after `t`.
    pub fn next_edge(&self, t: f64) -> f64 {
        if t < self.clock_offset {
            return self.clock_offset;
        }
        let k = ((t - self.clock_offset) / self.clock_period).floor();
        let start = self.clock_offset + k * self.clock_period;
        let mut candidates = [
            start + self.pulse_width,
            start + self.clock_period,
            start + self.clock_period + self.pulse_width,
        ];
        candidates.sort_by(f64::total_cmp);
        let eps = 1e-15 * t.abs().max(1.0);
        candidates.into_iter().find(|&e| e > t + eps).unwrap_or(f64::INFINITY)
    }
}

impl Default for SwitchModel {
    fn default() -> Self {
        Self {
            on_resistance: 10.0,
            off_conductance: 1e-10,
            clock_period: 1.0 / 30.0,
            pulse_width: 2e-6,
            clock_offset: 0.0,
        }
    }
}

/// Charge pump plus flyback component values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitParams {
    pub c_res: f64,
    pub c_store: f64,
    pub l_fly: f64,
    /// Load across the reservoir; `f64::INFINITY` disconnects it.
    pub r_load: f64,
    pub d1: DiodeModel,
    pub d2: DiodeModel,
    pub d_fly: DiodeModel,
    pub switch: SwitchModel,
    /// Precharge of every capacitor at t = 0.
    pub v_initial: f64,
    pub flyback_enabled: bool,
}

/// Minimum reservoir-to-storage capacitance ratio.
pub const MIN_RESERVOIR_RATIO: f64 = 100.0;

impl CircuitParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_res", self.c_res),
            ("c_store", self.c_store),
            ("l_fly", self.l_fly),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.r_load > 0.0) {
            return Err(Error::Config(format!("r_load must be positive, got {}", self.r_load)));
        }
        if !(self.v_initial.is_finite() && self.v_initial >= 0.0) {
            return Err(Error::Config(format!(
                "v_initial must be non-negative, got {}",
                self.v_initial
            )));
        }
        if self.c_res < MIN_RESERVOIR_RATIO * self.c_store {
            return Err(Error::Config(format!(
                "c_res ({:e} F) must be at least {MIN_RESERVOIR_RATIO}·c_store ({:e} F) to hold the output voltage",
                self.c_res, self.c_store
            )));
        }
        let wrap = |e: Error| Error::Config(e.to_string());
        self.d1.validate("d1").map_err(wrap)?;
        self.d2.validate("d2").map_err(wrap)?;
        self.d_fly.validate("d_fly").map_err(wrap)?;
        self.switch.validate().map_err(wrap)
    }

    /// Values held fixed in the clock-tuning study: 2 μF, 20 MΩ, 4 mH, 5 V,
    /// storage 2.2 nF, 2 μs pulses every ten mechanical cycles at 300 Hz.
    pub fn tuning_preset() -> Self {
        Self {
            c_res: 2e-6,
            c_store: 2.2e-9,
            l_fly: 4e-3,
            r_load: 20e6,
            d1: DiodeModel::silicon(),
            d2: DiodeModel::silicon(),
            d_fly: DiodeModel::silicon(),
            switch: SwitchModel {
                clock_period: 10.0 / 300.0,
                ..SwitchModel::default()
            },
            v_initial: 5.0,
            flyback_enabled: true,
        }
    }

    pub fn with_ideal_diodes(mut self) -> Self {
        self.d1 = DiodeModel::ideal();
        self.d2 = DiodeModel::ideal();
        self.d_fly = DiodeModel::ideal();
        self
    }

    /// LC time scale of the flyback loop.
    pub fn flyback_time_scale(&self) -> f64 {
        (self.l_fly * self.c_store).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diode_pieces_meet_at_knee() {
        let d = DiodeModel::silicon();
        let (g_on, j_on) = d.branch(true);
        let (g_off, j_off) = d.branch(false);
        let v = d.forward_drop;
        assert!(((g_on * v + j_on) - (g_off * v + j_off)).abs() < 1e-16);
    }

    #[test]
    fn reservoir_ratio_enforced() {
        let mut p = CircuitParams::tuning_preset();
        p.c_store = 30e-9;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn clock_edges_sequence() {
        let s = SwitchModel {
            clock_period: 1e-3,
            pulse_width: 1e-5,
            clock_offset: 0.0,
            ..Default::default()
        };
        assert!(s.is_on(0.0));
        assert!(!s.is_on(2e-5));
        assert!((s.next_edge(0.0) - 1e-5).abs() < 1e-18);
        assert!((s.next_edge(1e-5) - 1e-3).abs() < 1e-15);
        assert!((s.next_edge(5e-4) - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn pulse_must_fit_in_period() {
        let s = SwitchModel {
            pulse_width: 2.0,
            clock_period: 1.0,
            ..Default::default()
        };
        assert!(s.validate().is_err());
    }
}
