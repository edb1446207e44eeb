//! Monte Carlo size and power experiments.

pub mod config;
pub mod output;
pub mod runner;

pub use config::{BootstrapMode, ExperimentConfig};
pub use output::{config_hash, configure_threads, render_report_csv, render_report_text, write_outputs, Manifest};
pub use runner::{
    compare_distributions, run_bootstrap_density, run_cell, run_power, run_rep, run_size, test_series, CellResult,
    DensityComparison, PowerRow, PowerTable,
};
