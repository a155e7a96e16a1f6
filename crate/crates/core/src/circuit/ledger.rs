use serde::Serialize;

use crate::error::{Error, Result};

/// Default relative tolerance of the energy balance.
pub const BALANCE_TOLERANCE: f64 = 1e-3;

/// Energy accounting of one transient run, in joules.
///
/// `e_mech_in` is the work done by the moving electrode, `−∫ ½·v_var² dC`.
/// The precharge is an initial condition, so `e_source` counts only energy
/// injected after t = 0 and is zero for the shipped topology.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub e_mech_in: f64,
    pub e_source: f64,
    pub e_load: f64,
    pub e_dissipated: f64,
    pub e_stored_delta: f64,
    /// `e_load + e_stored_delta − e_source`.
    pub net_converted: f64,
    /// Energy the flyback inductor handed to the reservoir node.
    pub e_flyback_to_res: f64,
}

impl EnergyLedger {
    pub fn new(
        e_mech_in: f64,
        e_source: f64,
        e_load: f64,
        e_dissipated: f64,
        e_stored_delta: f64,
        e_flyback_to_res: f64,
    ) -> Self {
        Self {
            e_mech_in,
            e_source,
            e_load,
            e_dissipated,
            e_stored_delta,
            net_converted: e_load + e_stored_delta - e_source,
            e_flyback_to_res,
        }
    }

    /// `e_mech_in + e_source − e_load − e_dissipated − e_stored_delta`.
    pub fn residual(&self) -> f64 {
        self.e_mech_in + self.e_source - self.e_load - self.e_dissipated - self.e_stored_delta
    }

    pub fn max_term(&self) -> f64 {
        [
            self.e_mech_in,
            self.e_source,
            self.e_load,
            self.e_dissipated,
            self.e_stored_delta,
        ]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn relative_residual(&self) -> f64 {
        let scale = self.max_term();
        if scale == 0.0 {
            0.0
        } else {
            self.residual().abs() / scale
        }
    }

    pub fn check(&self, tolerance: f64) -> Result<()> {
        let rel = self.relative_residual();
        if rel <= tolerance {
            Ok(())
        } else {
            Err(Error::Numerical(format!(
                "energy balance off by {rel:.3e} (tolerance {tolerance:.1e}); reduce the integrator step"
            )))
        }
    }
}

/// Ledger of a completed run, rejected when the balance misses
/// [`BALANCE_TOLERANCE`].
pub fn energy_ledger(run: &super::SimResult) -> Result<EnergyLedger> {
    run.ledger.check(BALANCE_TOLERANCE)?;
    Ok(run.ledger)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_ledger_passes() {
        let l = EnergyLedger::new(10.0, 0.0, 3.0, 2.0, 5.0, 0.0);
        assert_eq!(l.residual(), 0.0);
        assert!(l.check(1e-12).is_ok());
        assert_eq!(l.net_converted, 8.0);
    }

    #[test]
    fn unbalanced_ledger_is_numerical_error() {
        let l = EnergyLedger::new(10.0, 0.0, 3.0, 2.0, 4.0, 0.0);
        assert!(matches!(l.check(1e-3), Err(Error::Numerical(_))));
    }
}
