use serde::Serialize;

use crate::data::{Label, NUM_CLASSES};
use crate::error::{Error, Result};

/// `counts[gold][pred]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ConfusionMatrix {
    pub counts: [[usize; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_pairs(gold: &[Label], pred: &[Label]) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::invalid(format!(
                "{} gold labels for {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut m = ConfusionMatrix::default();
        for (g, p) in gold.iter().zip(pred) {
            m.counts[g.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: [ClassMetrics; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and macro-F1. A class that is never predicted has precision 0, a
/// class absent from gold has recall 0, and F1 is 0 whenever both are 0.
pub fn compute_metrics(gold: &[Label], pred: &[Label]) -> Result<Metrics> {
    if gold.is_empty() {
        return Err(Error::invalid("metrics over an empty set"));
    }
    let confusion = ConfusionMatrix::from_pairs(gold, pred)?;
    let per_class = std::array::from_fn(|c| {
        let tp = confusion.counts[c][c];
        let predicted: usize = (0..NUM_CLASSES).map(|g| confusion.counts[g][c]).sum();
        let support: usize = confusion.counts[c].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
            support,
        }
    });
    let macro_f1 = per_class.iter().map(|m: &ClassMetrics| m.f1).sum::<f64>() / NUM_CLASSES as f64;
    Ok(Metrics {
        accuracy: ratio(confusion.correct(), confusion.total()),
        macro_f1,
        per_class,
        confusion,
    })
}

impl Metrics {
    /// `{"accuracy":..,"macro_f1":..,"per_class":{"positive":{..},..}}`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut per = serde_json::Map::new();
        for (label, m) in Label::ALL.iter().zip(&self.per_class) {
            per.insert(
                label.as_str().to_string(),
                serde_json::to_value(m).expect("plain struct"),
            );
        }
        serde_json::json!({
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "per_class": per,
        })
    }
}
