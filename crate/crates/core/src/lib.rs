//! Multi-object tracking by constraint programming.
//!
//! Detections are filtered and gap-filled ([`presolve`]), labeled with color
//! classes ([`appearance`]), split into overlapping batches and associated to
//! tracks by a CP model solved per batch ([`assoc`]), then stitched and
//! post-processed ([`pipeline`]). [`metrics`] scores tracks against ground
//! truth and [`harness`] provides synthetic scenes and a baseline tracker.

pub mod appearance;
pub mod assoc;
pub mod config;
mod error;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod presolve;
pub mod types;

pub use config::{Config, SolveMode};
pub use error::{Error, Result};
pub use types::{BBox, Detection, Frames, Provenance, TrackPoint, TrackSet};
