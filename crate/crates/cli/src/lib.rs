//! Command-line frontend for `entroball`.
//!
//! Three commands share one JSON config ([`config::RunConfig`]):
//!
//! * `transport` fits the transport from the prior to the points and writes
//!   the weighted and unweighted region maps,
//! * `mincross` computes the minimum cross-entropy density for one `delta`,
//! * `sweep` does the same for a decreasing list of `delta` values on one
//!   shared sample batch.
//!
//! Outputs are JSON certificates, a JSON-lines cut trace, CSV tables and PGM
//! rasters with PNG copies. Given the same config and seed they are byte for
//! byte reproducible.

pub mod commands;
pub mod config;
pub mod error;
pub mod points;
pub mod raster;

pub use commands::{cmd_mincross, cmd_sweep, cmd_transport, Problem, Report};
pub use config::RunConfig;
pub use error::{CliError, Result};
pub use points::load_points_csv;
