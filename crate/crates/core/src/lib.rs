//! Engine for 3D virtual risk terrains over urban models.
//!
//! Converts UAS ground-risk models into voxel volumes of cumulative
//! third-party risk, thresholds them into no-fly exclusion zones, and
//! reduces those to minimum-clearance heightfields. A Monte Carlo oracle
//! validates every impact-probability kernel.
//!
//! Pipeline: urban model -> occupancy + ground classes -> exposure grid ->
//! impact kernel -> risk volume -> no-fly terrains -> clearance fields,
//! with terrain fusion (voxelwise union) across societal constraints.

pub mod error;
pub mod exposure;
pub mod grid;
pub mod hazard;
pub mod impact;
pub mod io;
pub mod oracle;
pub mod scenario;
pub mod terrain;

pub use error::{Error, Result};
