//! Experiment configuration, training and evaluation loops, and CSV output.

mod config;
mod record;
mod run;

pub use config::{apply_override, BoxBound, EvaluationSection, ExperimentConfig, ModelKind, ModelSection, SafetySection, Schedule};
pub use record::{join_losses, mean_se, proportion_se, read_eval_csv, read_rows, read_run_csv, write_header, EvalRow, RunRow};
pub use run::{check_replay, grid_points, run_episode, run_eval, run_training, sweep, EpisodeOutcome, EvalSummary, ModelHandle, RunRecord, SweepPoint, TrainingSummary};
