//! Experiment configuration and orchestration, validation suites and plots.

pub mod config;
pub mod experiment;
pub mod plot;
pub mod validate;

pub use config::{ExperimentConfig, Variant};
pub use experiment::{read_csv, read_csv_files, run_chain, run_experiment, write_csv, write_experiment, ResultRow, CSV_HEADER};
pub use plot::{panels, plot_rows, render_svg, Panel};
pub use validate::{run_suite, Check, Suite};
