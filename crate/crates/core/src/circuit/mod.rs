//! Charge pump + flyback conditioning circuit.

mod drive;
mod engine;
mod ledger;
mod params;
mod pump;

pub use drive::{capacitance_drive_eval, CapacitanceDrive, CoupledDrive};
pub use engine::{
    flyback_event, simulate, simulate_from, simulate_with, CircuitState, Conduction,
    FlybackOutcome, FlybackRecord, Sample, SimOptions, SimResult, SimStats,
};
pub use ledger::{energy_ledger, EnergyLedger, BALANCE_TOLERANCE};
pub use params::{CircuitParams, DiodeModel, SwitchModel, MIN_RESERVOIR_RATIO};
pub use pump::{charge_pump_cycle, pump_saturation};
