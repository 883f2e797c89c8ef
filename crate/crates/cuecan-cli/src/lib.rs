//! File formats, run artifacts, and pipeline glue for the `cuecan` binary.
//! The numeric pipeline itself lives in `cuecan-core`; this crate owns
//! everything that touches the filesystem.

pub mod checkpoint;
pub mod dataset;
pub mod errors;
pub mod metricsio;
pub mod netpbm;
pub mod pipeline;
pub mod report;
pub mod tensorfile;
