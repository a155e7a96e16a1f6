//! Simulation and design exploration for in-plane overlap plate (IPOP)
//! electrostatic vibration energy harvesters.

pub mod circuit;
pub mod config;
pub mod device;
pub mod energy;
pub mod error;
pub mod mech;
pub mod presets;
pub mod report;
pub mod sweep;

pub use error::{Error, Result};
