//! Instrument embedding databases, exact cosine query-by-example and top-k
//! evaluation for single sounds and mixtures.

mod database;
mod embedder;
mod eval;
mod report;

pub use database::{
    build_database, database_features, database_from_features, EmbeddingDatabase, MedianNotePolicy,
    Provenance, DB_BIN, DB_INDEX, DB_MAGIC,
};
pub use embedder::{DescriptorEmbedder, Embedder};
pub use eval::{
    chance_level, evaluate_mixture, evaluate_mixture_embedded, evaluate_single_source,
    evaluate_single_source_embedded, query, rank_of, EvalMode, EvalReport, FamilyAccuracy, Hit,
    MixtureQuery, MixtureRanking, QueryResult,
};
pub use report::{reports_to_csv, reports_to_markdown};
