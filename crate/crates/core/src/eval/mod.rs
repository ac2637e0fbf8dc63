//! Evaluation metrics and the experiment runner.
//!
//! A run writes `regret.csv`, `intervals.csv`, `coverage.csv` and
//! `manifest.json` (plus `regret_groups.csv` when evaluation contexts carry
//! group labels) and one directory per job under `jobs/`.

mod config;
mod metrics;
mod runner;

pub use config::{Algorithm, CsvSource, ExperimentConfig, GridPoint, OUTPUT_ENV};
pub use metrics::{
    coverage_from_records, coverage_width, mean_std, replay_suboptimality, suboptimality, suboptimality_by_group,
    CoverageReport, CoverageRow, GroupSubOpt, RegretReport, ReplayEstimate, SubOptBreakdown,
};
pub use runner::{
    evaluate_policy_dir, read_rows, report, run_experiment, CoverageCsvRow, EvalSummary, ExperimentOutput,
    IntervalRow, JobEntry, JobResult, RegretRow, RunManifest, COVERAGE_CSV, INTERVALS_CSV, MANIFEST_JSON,
    REGRET_CSV, REGRET_GROUPS_CSV,
};
