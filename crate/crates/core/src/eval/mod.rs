//! Link-prediction evaluation and analysis exports.

pub mod correlation;
pub mod rank;
pub mod report;
pub mod scorer;

pub use correlation::{pearson_matrix, relation_correlation, write_correlation_csv};
pub use rank::{rank_from_scores, rank_query, FilterMode, PositivesIndex, Query, QueryKind, TaskSet};
pub use report::{
    evaluate, evaluate_kg, positives_for, rank_queries, reports_tsv, split_queries, KgMetrics, RankingReport,
    REPORT_TSV_HEADER,
};
pub use scorer::{ensemble_scorer, EnsembleScorer, FusedScorer, LocalScorer, Scorer};
