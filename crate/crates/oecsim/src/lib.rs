//! File formats, the experiment-matrix runner and the paper-reproduction
//! report for `oecsim-core`.

pub mod config;
pub mod matrix;
pub mod output;
pub mod paper;
pub mod runner;

pub use config::{load_profile, load_scenario, parse_scenario, scenario_to_text, ConfigError, Profile};
pub use matrix::{load_matrix, paper_matrix, parse_matrix};
pub use paper::{reproduce_paper, PaperReport};
pub use runner::{run_matrix, MatrixReport, RunError};
