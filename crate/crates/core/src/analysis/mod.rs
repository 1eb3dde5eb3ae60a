//! Statistics over recorded sessions: text measures, alignment,
//! correlations, within-subject ANOVA, post-hoc tests and regressions.

pub mod distributions;
pub mod inference;
pub mod report;
pub mod text;

use thiserror::Error;

pub use inference::{
    bonferroni, contrast_scores, cosine_alignment, ols, paired_t, pearson, regression_with_covariates,
    rm_anova_2x2x2, AnovaRow, AnovaTable, CellMeans, Coefficient, Correlation, Effect, PairedT, RegressionFit,
};
pub use report::{analyze_sessions, AnalysisConfig, AnalysisReport};
pub use text::{flesch_reading_ease, sentiment_score, SentimentProbabilities};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("validation error: {0}")]
    Validation(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("subject {subject} has no data for cell {cell}")]
    MissingCell { subject: String, cell: String },
    #[error("collinear predictors: {0}")]
    Collinear(String),
    #[error("no valid subjects: {0}")]
    NoValidSubjects(String),
}
