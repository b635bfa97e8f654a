//! Configuration, experiment grids, summary reports and diagnostics.

mod diagnostics;
mod experiment;
mod settings;
mod toy;

pub use diagnostics::{
    read_candidate_rows, run_similarity_diagnostics, run_space_comparison, summarize_space_comparison,
    write_candidate_rows, write_similarity_csv, CandidateRow, RadiusSummary, SimilarityRow, SpaceComparison,
    SpaceComparisonSpec, SpaceKind,
};
pub use experiment::{
    audit_experiment, read_curves, run_experiment, run_experiment_with, summarize, trace_path, CellFailure,
    ConfigSummary, CurveRow, ExperimentFile, ExperimentSpec, LabeledConfig, PairedComparison, SummaryReport, CURVES_FILE,
    REPORT_FILE, TRACE_DIR,
};
pub use settings::{FlatConfig, PipelineSettings, SearchSettings};
pub use toy::{parse_shape, LandscapeSpec, PipelineSpec, VerifierChoice};
