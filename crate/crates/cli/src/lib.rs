//! Library side of the `dualflat` command-line tool.

pub mod expr;
pub mod job;
pub mod output;
pub mod run;

pub use job::{validate, validate_value, JobSpec, ValidJob, ValidationError};
pub use output::{format_g17, to_csv, to_json, Report};
pub use run::run;
