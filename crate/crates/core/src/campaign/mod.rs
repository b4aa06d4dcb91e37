//! Experiment orchestration: follow-up generation for every method, label
//! invariance judgement, FDR tables and the gradient/FDR correlation.

mod config;
mod run;
mod stats;
mod trials;

pub use config::{CampaignConfig, Method};
pub use run::{
    audit, bins_csv, build_report, judge, run_campaign, write_atomically, write_outputs, CampaignOutcome, CampaignReport,
    Judgement, SeedSummary, Timings,
};
pub use stats::{
    bin_index, bin_records, correlate, correlation_analysis, fdr, pearson, summarize, BinStat, BinningSettings,
    Correlation, Counts, MethodCorrelation, MethodSummary, TransformSummary,
};
pub use trials::{read_trials, read_trials_file, write_trials, TrialRecord, Verdict, TRIALS_HEADER};
