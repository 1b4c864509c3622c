//! Precision / recall / micro-F1 over the two irony classes.

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::corpus::Label;

/// Confusion counts with `Ironic` as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub support: usize,
    /// Set when precision had a zero denominator (no predictions of the class).
    pub precision_degenerate: bool,
    /// Set when recall had a zero denominator (no gold items of the class).
    pub recall_degenerate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub ironic: ClassMetrics,
    pub non_ironic: ClassMetrics,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub micro_f1: f64,
    pub accuracy: f64,
    pub confusion: Confusion,
    pub degenerate: bool,
}

fn ratio(num: usize, den: usize) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn class_metrics(tp: usize, fp: usize, fn_: usize) -> ClassMetrics {
    let (precision, precision_degenerate) = ratio(tp, tp + fp);
    let (recall, recall_degenerate) = ratio(tp, tp + fn_);
    ClassMetrics {
        precision,
        recall,
        support: tp + fn_,
        precision_degenerate,
        recall_degenerate,
    }
}

pub fn classification_report(preds: &[Label], golds: &[Label]) -> Result<ClassificationReport, MetricError> {
    if preds.len() != golds.len() {
        return Err(MetricError::LengthMismatch {
            preds: preds.len(),
            golds: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let mut c = Confusion::default();
    for (p, g) in preds.iter().zip(golds) {
        match (p, g) {
            (Label::Ironic, Label::Ironic) => c.tp += 1,
            (Label::Ironic, Label::NonIronic) => c.fp += 1,
            (Label::NonIronic, Label::Ironic) => c.fn_ += 1,
            (Label::NonIronic, Label::NonIronic) => c.tn += 1,
        }
    }
    let ironic = class_metrics(c.tp, c.fp, c.fn_);
    let non_ironic = class_metrics(c.tn, c.fn_, c.fp);

    // Pooled over both classes: every item is one TP for its predicted class
    // or one FP + one FN, so the pooled F1 reduces to 2c / 2n.
    let correct = c.tp + c.tn;
    let wrong = c.fp + c.fn_;
    let micro_f1 = (2 * correct) as f64 / (2 * correct + 2 * wrong) as f64;
    let accuracy = correct as f64 / c.total() as f64;

    Ok(ClassificationReport {
        macro_precision: (ironic.precision + non_ironic.precision) / 2.0,
        macro_recall: (ironic.recall + non_ironic.recall) / 2.0,
        degenerate: ironic.precision_degenerate
            || ironic.recall_degenerate
            || non_ironic.precision_degenerate
            || non_ironic.recall_degenerate,
        ironic,
        non_ironic,
        micro_f1,
        accuracy,
        confusion: c,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Ironic as I, NonIronic as N};

    #[test]
    fn identity_is_perfect() {
        let g = [I, N, N, I, N];
        let r = classification_report(&g, &g).unwrap();
        assert_eq!(r.micro_f1, 1.0);
        assert_eq!(r.macro_precision, 1.0);
        assert_eq!(r.macro_recall, 1.0);
        assert!(!r.degenerate);
    }

    #[test]
    fn hand_confusion_matrix() {
        let r = classification_report(&[I, N, N, N], &[I, I, N, N]).unwrap();
        assert_eq!(r.confusion, Confusion { tp: 1, fp: 0, fn_: 1, tn: 2 });
        assert_eq!(r.micro_f1, 0.75);
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.ironic.precision, 1.0);
        assert_eq!(r.ironic.recall, 0.5);
        assert!((r.non_ironic.precision - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.non_ironic.recall, 1.0);
    }

    #[test]
    fn no_ironic_predictions_is_degenerate() {
        let r = classification_report(&[N, N, N], &[I, N, I]).unwrap();
        assert_eq!(r.ironic.precision, 0.0);
        assert!(r.ironic.precision_degenerate);
        assert!(r.degenerate);
    }

    #[test]
    fn errors() {
        assert_eq!(
            classification_report(&[I], &[I, N]).unwrap_err(),
            MetricError::LengthMismatch { preds: 1, golds: 2 }
        );
        assert_eq!(classification_report(&[], &[]).unwrap_err(), MetricError::EmptyInput);
    }
}
