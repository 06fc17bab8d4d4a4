//! Performance models for data-parallel synchronous SGD training.
//!
//! - [`model`]: phase, layer, cluster, workload and overlap-policy types.
//! - [`analytic`]: closed-form iteration time, speedup and all-reduce
//!   efficiency.
//! - [`sim`]: discrete-event simulator of pipelined iterations.
//! - [`comm`]: ring all-reduce and parameter-server cost models.
//! - [`reference`]: bundled measurements and model-vs-measurement reports.
//! - [`render`]: tables and CSV for the binary.
//! - [`scenario`]: config files and the estimate / simulate / sweep /
//!   validate workflows behind the `dlperf` binary.

pub mod analytic;
pub mod comm;
mod error;
pub mod model;
pub mod reference;
pub mod render;
pub mod scenario;
pub mod sim;
pub mod units;

pub use error::{Error, Result};
