//! Reasoning-quality scores: FRE spread, the human rubric and the B-measure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::MetricError;

/// Population standard deviation (divisor `n`).
pub fn std_dev(scores: &[f64]) -> Result<f64, MetricError> {
    if scores.len() < 2 {
        return Err(MetricError::TooFewScores(scores.len()));
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in scores.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    Ok((m2 / scores.len() as f64).max(0.0).sqrt())
}

/// `fre_mean / 100 + human_mean / 3`.
pub fn b_measure(fre_mean: f64, human_mean: f64) -> Result<f64, MetricError> {
    if !(0.0..=3.0).contains(&human_mean) {
        return Err(MetricError::HumanScoreOutOfRange(human_mean));
    }
    Ok(fre_mean / 100.0 + human_mean / 3.0)
}

/// One rubric judgement: contextual accuracy, internal consistency and
/// clarity of structure, each 0 or 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Annotation {
    pub item_id: String,
    #[serde(default)]
    pub annotator_id: Option<String>,
    pub criteria: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanSummary {
    /// Mean rubric score per item (averaged over annotators).
    pub per_item: BTreeMap<String, f64>,
    /// Mean over items; `None` when nothing has been annotated yet.
    pub mean: Option<f64>,
    pub annotations: usize,
}

pub fn human_aggregate(annotations: &[Annotation]) -> Result<HumanSummary, MetricError> {
    let mut sums: BTreeMap<&str, (u32, u32)> = BTreeMap::new();
    for a in annotations {
        if a.criteria.len() != 3 {
            return Err(MetricError::MalformedAnnotation {
                item: a.item_id.clone(),
                problem: format!("expected 3 criteria, got {}", a.criteria.len()),
            });
        }
        if let Some(bad) = a.criteria.iter().find(|&&c| c > 1) {
            return Err(MetricError::MalformedAnnotation {
                item: a.item_id.clone(),
                problem: format!("criterion value {bad} is not binary"),
            });
        }
        let score: u32 = a.criteria.iter().map(|&c| c as u32).sum();
        let entry = sums.entry(a.item_id.as_str()).or_default();
        entry.0 += score;
        entry.1 += 1;
    }
    let per_item: BTreeMap<String, f64> = sums
        .into_iter()
        .map(|(id, (total, n))| (id.to_string(), total as f64 / n as f64))
        .collect();
    let mean = (!per_item.is_empty()).then(|| per_item.values().sum::<f64>() / per_item.len() as f64);
    Ok(HumanSummary {
        per_item,
        mean,
        annotations: annotations.len(),
    })
}

/// F, S, H and B for one result set. H and B stay empty until annotations
/// exist (`pending`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReasoningReport {
    pub fre_mean: Option<f64>,
    pub fre_std: Option<f64>,
    pub scored_reasons: usize,
    pub human_mean: Option<f64>,
    pub b_measure: Option<f64>,
    pub pending: bool,
}

impl ReasoningReport {
    /// Builds the report from per-reason FRE scores and an optional H.
    pub fn from_scores(fre: &[f64], human_mean: Option<f64>) -> Result<Self, MetricError> {
        let fre_mean = (!fre.is_empty()).then(|| fre.iter().sum::<f64>() / fre.len() as f64);
        let fre_std = if fre.len() >= 2 { Some(std_dev(fre)?) } else { None };
        let b = match (fre_mean, human_mean) {
            (Some(f), Some(h)) => Some(b_measure(f, h)?),
            _ => None,
        };
        Ok(ReasoningReport {
            fre_mean,
            fre_std,
            scored_reasons: fre.len(),
            human_mean,
            b_measure: b,
            pending: human_mean.is_none(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ann(id: &str, c: &[u8]) -> Annotation {
        Annotation {
            item_id: id.into(),
            annotator_id: None,
            criteria: c.to_vec(),
        }
    }

    #[test]
    fn std_dev_examples() {
        assert_eq!(std_dev(&[4.2; 5]).unwrap(), 0.0);
        assert_eq!(std_dev(&[0.0, 10.0]).unwrap(), 5.0);
        assert_eq!(std_dev(&[1.0]).unwrap_err(), MetricError::TooFewScores(1));
    }

    #[test]
    fn b_measure_examples() {
        assert_eq!(b_measure(100.0, 3.0).unwrap(), 2.0);
        assert_eq!(b_measure(0.0, 0.0).unwrap(), 0.0);
        let b = b_measure(49.3, 2.6).unwrap();
        assert!((b - 1.36).abs() < 0.005);
        assert_eq!(format!("{b:.1}"), "1.4");
        assert!(matches!(b_measure(50.0, 3.1), Err(MetricError::HumanScoreOutOfRange(_))));
        assert!(b_measure(50.0, -0.1).is_err());
    }

    #[test]
    fn rubric_sums_and_means() {
        let s = human_aggregate(&[ann("a", &[1, 1, 1]), ann("b", &[1, 1, 0])]).unwrap();
        assert_eq!(s.per_item["a"], 3.0);
        assert_eq!(s.per_item["b"], 2.0);
        assert_eq!(s.mean, Some(2.5));

        let two = human_aggregate(&[ann("x", &[1, 1, 1]), ann("x", &[1, 0, 1])]).unwrap();
        assert_eq!(two.per_item["x"], 2.5);
    }

    #[test]
    fn rubric_absence_and_errors() {
        let s = human_aggregate(&[]).unwrap();
        assert_eq!(s.mean, None);
        let r = ReasoningReport::from_scores(&[50.0, 40.0], s.mean).unwrap();
        assert!(r.pending && r.b_measure.is_none());
        assert!(human_aggregate(&[ann("a", &[1, 1])]).is_err());
        assert!(human_aggregate(&[ann("a", &[1, 2, 0])]).is_err());
    }
}
