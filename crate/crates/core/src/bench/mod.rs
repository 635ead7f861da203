//! Benchmark harness: datasets, the factorial experiment matrix, runs,
//! reports and human-score correlation.

pub mod dataset;
pub mod factorial;
pub mod report;
pub mod runner;
pub mod stats;

pub use dataset::{load_judgments, load_qa_dataset, HumanJudgment, QAItem, QuestionType};
pub use factorial::{expand_factorial, BaseSettings, ExperimentConfig, ExperimentFactors, ResolvedConfig};
pub use report::{aggregate, write_report, ReportTable};
pub use runner::{is_complete, load_runs, summarize_items, ItemRecord, RunRecord, Runner};
pub use stats::{correlate, mean_sem, pearson, Correlation, MeanSem};
