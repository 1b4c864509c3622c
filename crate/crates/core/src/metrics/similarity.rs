//! Embedding cosine similarity and the understanding (rephrasing) report.

use serde::{Deserialize, Serialize};

use super::MetricError;

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(MetricError::ZeroVector);
    }
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): for a == b this is
    // exactly dot, so identical inputs score exactly 1.
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Source of sentence embeddings.
pub trait EmbeddingProvider: Send + Sync {
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError>;
}

/// Offline embedder: L2-normalized bag of hashed character trigrams (with
/// word-boundary padding) plus hashed lowercase words.
#[derive(Debug, Clone, Copy)]
pub struct HashedNgramEmbedder {
    pub dim: usize,
}

impl Default for HashedNgramEmbedder {
    fn default() -> Self {
        HashedNgramEmbedder { dim: 256 }
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

impl EmbeddingProvider for HashedNgramEmbedder {
    fn embed(&self, text: &str) -> Result<Vec<f64>, MetricError> {
        if text.trim().is_empty() {
            return Err(MetricError::EmptyInput);
        }
        let mut v = vec![0.0; self.dim];
        let lower = text.to_lowercase();
        for word in lower.split_whitespace() {
            v[(fnv1a(word.as_bytes()) % self.dim as u64) as usize] += 1.0;
            let padded: Vec<char> = std::iter::once(' ')
                .chain(word.chars())
                .chain(std::iter::once(' '))
                .collect();
            for gram in padded.windows(3) {
                let s: String = gram.iter().collect();
                // separate hash family from whole words
                let h = fnv1a(s.as_bytes()).rotate_left(17);
                v[(h % self.dim as u64) as usize] += 1.0;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        Ok(v)
    }
}

/// Range boundaries for the three-way split of similarity scores.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeBounds {
    /// Start of "moderate"; below is "notable differences".
    pub moderate: f64,
    /// Start of "almost identical".
    pub almost_identical: f64,
}

impl Default for RangeBounds {
    fn default() -> Self {
        RangeBounds {
            moderate: 0.6,
            almost_identical: 0.8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThreeRangeCounts {
    pub notable: usize,
    pub moderate: usize,
    pub almost_identical: usize,
}

/// Ten equal bins over [0, 1]; 1.0 falls in the last bin.
pub fn histogram(scores: &[f64]) -> [usize; 10] {
    let mut bins = [0usize; 10];
    for &s in scores {
        let s = s.clamp(0.0, 1.0);
        bins[((s * 10.0).floor() as usize).min(9)] += 1;
    }
    bins
}

pub fn three_ranges(scores: &[f64], bounds: RangeBounds) -> ThreeRangeCounts {
    let mut c = ThreeRangeCounts::default();
    for &s in scores {
        let s = s.clamp(0.0, 1.0);
        if s >= bounds.almost_identical {
            c.almost_identical += 1;
        } else if s >= bounds.moderate {
            c.moderate += 1;
        } else {
            c.notable += 1;
        }
    }
    c
}

/// One statement prepared for understanding evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnderstandingItem {
    pub id: String,
    /// The statement itself (literal meaning).
    pub literal: String,
    pub intended: Option<String>,
    /// Model rephrasing (understanding).
    pub rephrase: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemScore {
    pub id: String,
    pub score: f64,
}

/// Pairwise similarities among literal, intended and understanding meaning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triple {
    pub id: String,
    pub literal_intended: f64,
    pub literal_understanding: f64,
    pub intended_understanding: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub scores: Vec<ItemScore>,
    pub mean: Option<f64>,
    pub histogram: [usize; 10],
    pub three_range_counts: ThreeRangeCounts,
    pub bounds: RangeBounds,
    pub triples: Vec<Triple>,
    pub missing_rephrase: usize,
    pub missing_intended: usize,
    pub notes: Vec<String>,
}

/// Scores each rephrase against the author's intended meaning.
///
/// Items without a rephrase or without an intended meaning are skipped and
/// counted. Negative cosines stay negative in `scores` and are clipped to 0
/// only in the histogram and range views (with a note).
pub fn understanding_scores(
    items: &[UnderstandingItem],
    embedder: &dyn EmbeddingProvider,
    bounds: RangeBounds,
) -> Result<SimilarityReport, MetricError> {
    let mut scores = Vec::new();
    let mut triples = Vec::new();
    let (mut missing_rephrase, mut missing_intended) = (0, 0);
    for item in items {
        let Some(intended) = item.intended.as_deref().filter(|s| !s.trim().is_empty()) else {
            missing_intended += 1;
            continue;
        };
        let Some(rephrase) = item.rephrase.as_deref().filter(|s| !s.trim().is_empty()) else {
            missing_rephrase += 1;
            continue;
        };
        let lit = embedder.embed(&item.literal)?;
        let int = embedder.embed(intended)?;
        let und = embedder.embed(rephrase)?;
        let score = cosine_similarity(&und, &int)?;
        scores.push(ItemScore {
            id: item.id.clone(),
            score,
        });
        triples.push(Triple {
            id: item.id.clone(),
            literal_intended: cosine_similarity(&lit, &int)?,
            literal_understanding: cosine_similarity(&lit, &und)?,
            intended_understanding: score,
        });
    }
    let raw: Vec<f64> = scores.iter().map(|s| s.score).collect();
    let mut notes = Vec::new();
    let negative = raw.iter().filter(|&&s| s < 0.0).count();
    if negative > 0 {
        notes.push(format!("{negative} negative cosine(s) clipped to 0 in histogram and ranges"));
    }
    Ok(SimilarityReport {
        mean: (!raw.is_empty()).then(|| raw.iter().sum::<f64>() / raw.len() as f64),
        histogram: histogram(&raw),
        three_range_counts: three_ranges(&raw, bounds),
        bounds,
        scores,
        triples,
        missing_rephrase,
        missing_intended,
        notes,
    })
}
