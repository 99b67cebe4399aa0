//! Objective metrics, style error, Self-BLEU and controllability sweeps.

mod bleu;
mod metrics;
mod report;
mod sweep;

pub use bleu::{self_bleu, self_bleu_report, sentence_bleu, SelfBleuReport};
pub use metrics::{compute_metrics, ngram_repetitions, sequence_metrics, style_mse, MetricRecord, RepetitionStrategy};
pub use report::{emit_report, evaluate_model, EvalOptions, EvalReport, Report, ReportFormat};
pub use sweep::{controllability_sweep, spearman, BoxSummary, SweepPoint, SweepResult};
