//! Evaluation formulas: detection report, readability, reasoning scores and
//! rephrasing similarity.

pub mod classification;
pub mod readability;
pub mod reasoning;
pub mod similarity;

pub use classification::{classification_report, ClassMetrics, ClassificationReport, Confusion};
pub use readability::{count_syllables, flesch_reading_ease};
pub use reasoning::{b_measure, human_aggregate, std_dev, Annotation, HumanSummary, ReasoningReport};
pub use similarity::{
    cosine_similarity, histogram, three_ranges, understanding_scores, EmbeddingProvider, HashedNgramEmbedder, RangeBounds,
    SimilarityReport, ThreeRangeCounts, UnderstandingItem,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("predictions ({preds}) and golds ({golds}) differ in length")]
    LengthMismatch { preds: usize, golds: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("text contains no words")]
    NoWords,
    #[error("standard deviation needs at least 2 scores, got {0}")]
    TooFewScores(usize),
    #[error("human score {0} outside [0, 3]")]
    HumanScoreOutOfRange(f64),
    #[error("annotation for `{item}`: {problem}")]
    MalformedAnnotation { item: String, problem: String },
    #[error("zero vector")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("embedder unavailable: {0}")]
    EmbedderUnavailable(String),
}
