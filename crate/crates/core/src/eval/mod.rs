//! Rollouts, outcome classification and success-rate reporting.

pub mod outcome;
pub mod report;
pub mod rollout;
pub mod wilson;

pub use outcome::{classify_outcome, completion_ratio, Outcome, Trajectory, TrialOutcome};
pub use report::{from_jsonl, run_trials, to_jsonl, trial_seed, MeanSd, Report, ReportRow};
pub use rollout::{run_from, run_rollout, Controller, Rollout};
pub use wilson::{format_rate, wilson_bounds, wilson_ci, Z95};
