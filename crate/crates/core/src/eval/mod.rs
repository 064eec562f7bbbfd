//! Accuracy metrics, the class-weight sweep and repeated-trial runs.

mod metrics;
mod sweep;

pub use metrics::{ap_mismatch, compute_metrics, evaluate_model, ConfusionEntry, MeanSd, MetricsReport};
pub use sweep::{
    default_weight_pairs, format_sci, read_sweep_jsonl, render_report, run_trials, sweep_class_weights,
    write_sweep_jsonl, SweepResult, SweepRow, SweepSummary, TrialResult, DEFAULT_SWEEP_SEEDS, DEFAULT_WEIGHT_PAIRS,
};
