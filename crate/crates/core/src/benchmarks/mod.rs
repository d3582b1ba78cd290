//! Test functions and the experiment protocols built on them.

mod functions;
mod studies;

pub use functions::{
    default_noise_eps, random_rotation, BenchmarkFunction, BenchmarkObjective, FunctionKind,
    Variant,
};
pub use studies::{
    encoding_benefit_study, rbf_comparison_sizes, rbf_comparison_study, run_trials, speedup_study,
    timing_study, timing_train_size, write_csv_rows, Algorithm, EncodingRow, EncodingStudy,
    EncodingStudyConfig, GridRow, RbfRow, Report, SpeedupRow, SpeedupStudy, TimingRow,
};
