//! Weights, test statistics and their null calibration.

pub mod calibration;
pub mod report;
pub mod statistics;
pub mod weights;

pub use calibration::{
    calibrate_t1, calibrate_t1_star, calibrate_t2, estimate_plugin_quantities, weight_integrals, Calibration,
    PluginQuantities,
};
pub use statistics::{density_floor, statistic_value, StatisticKind, StatisticValue};
pub use weights::{TaperedBox, WeightFunction, WeightKind, WeightSpec};
pub use report::{bootstrap_pvalue, pvalues, run_test, t0_glr, t1, t1_star, t2, TestReport};
