//! Library side of the `vantage` command: config parsing, CSV records,
//! strategy sweeps, heatmaps and theory checks.

pub mod compare;
pub mod config;
pub mod error;
pub mod heatmap;
pub mod records;
pub mod theory_check;

pub use compare::{run_compare, RunManifest};
pub use config::{parse_config, parse_document, ConfigError, Document};
pub use error::CliError;
pub use heatmap::emit_heatmap;
pub use records::{read_record_file, record_from_csv, record_to_csv};
pub use theory_check::theory_check;
