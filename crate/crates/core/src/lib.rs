//! Selective anomaly ensembles for event detection in temporal graphs.
//!
//! Five base detectors score every tick of a graph sequence; seven consensus
//! methods merge the detector outputs; unsupervised selection strategies pick
//! which detector results, and then which consensus results, to combine into
//! the final ranking of ticks.

pub mod calibration;
pub mod consensus;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod ingestion;
pub mod pipeline;
pub mod selection;

pub use error::{Error, Result};
