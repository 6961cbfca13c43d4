//! Ensemble fusion, classification metrics and classifier-disagreement
//! analysis.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::classify::PredictionSet;
use crate::corpus::LabelScheme;
use crate::error::{Error, Result};
use crate::goldstd::GoldStandard;
use crate::polarization::percentage;

/// OR-fusion over k prediction sets: positive iff any member predicts the
/// positive class. All members must cover the same item ids.
pub fn inclusive_ensemble(
    members: &[&PredictionSet],
    scheme: &LabelScheme,
) -> Result<PredictionSet> {
    if members.len() < 2 {
        return Err(Error::Invalid("ensemble needs at least 2 members".into()));
    }
    let first_ids: BTreeSet<&str> = members[0].ids();
    for other in &members[1..] {
        let ids = other.ids();
        if ids != first_ids {
            return Err(Error::CoverageMismatch {
                only_a: first_ids.difference(&ids).map(|s| s.to_string()).collect(),
                only_b: ids.difference(&first_ids).map(|s| s.to_string()).collect(),
            });
        }
    }
    let positive = scheme.positive();
    let negative = scheme
        .categories()
        .iter()
        .find(|c| c.as_str() != positive)
        .expect("scheme has at least 2 categories");
    let mut predictions = BTreeMap::new();
    for id in first_ids {
        let any_positive = members
            .iter()
            .any(|m| m.predictions.get(id).map(String::as_str) == Some(positive));
        predictions.insert(
            id.to_string(),
            if any_positive {
                positive.to_string()
            } else {
                negative.clone()
            },
        );
    }
    Ok(PredictionSet {
        predictions,
        scores: BTreeMap::new(),
        source: "inclusive".to_string(),
    })
}

/// Binary confusion counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

/// Per-class precision/recall/F1 triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

/// Full metrics report. Zero-division cells are reported as 0 and flagged.
#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_pos: f64,
    pub recall_pos: f64,
    pub f1_pos: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub confusion: Confusion,
    pub flags: Vec<String>,
}

fn safe_div(num: f64, den: f64, flag: &str, flags: &mut Vec<String>) -> f64 {
    if den == 0.0 {
        if !flags.iter().any(|f| f == flag) {
            flags.push(flag.to_string());
        }
        0.0
    } else {
        num / den
    }
}

/// Evaluate predictions against a gold standard. Evaluation is restricted to
/// the gold ids; predictions must cover all of them.
pub fn evaluate(
    pred: &PredictionSet,
    gold: &GoldStandard,
    scheme: &LabelScheme,
) -> Result<MetricsReport> {
    let missing: Vec<String> = gold
        .labels
        .keys()
        .filter(|id| !pred.predictions.contains_key(*id))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingPredictions(missing));
    }
    if gold.is_empty() {
        return Err(Error::NoUsableItems);
    }
    let categories = scheme.categories();
    let c = categories.len();
    let mut joint = vec![vec![0usize; c]; c]; // joint[gold][pred]
    for (id, gold_label) in &gold.labels {
        let pred_label = &pred.predictions[id];
        let gi = scheme.index_of(gold_label).ok_or_else(|| {
            Error::Invalid(format!("gold label {gold_label:?} outside scheme"))
        })?;
        let pi = scheme.index_of(pred_label).ok_or_else(|| {
            Error::Invalid(format!("predicted label {pred_label:?} outside scheme"))
        })?;
        joint[gi][pi] += 1;
    }
    let total = gold.len();
    let correct: usize = (0..c).map(|k| joint[k][k]).sum();
    let mut flags = Vec::new();
    let mut per_class = BTreeMap::new();
    let mut f1_sum = 0.0;
    for (k, cat) in categories.iter().enumerate() {
        let tp = joint[k][k];
        let pred_k: usize = (0..c).map(|g| joint[g][k]).sum();
        let gold_k: usize = joint[k].iter().sum();
        let precision = safe_div(
            tp as f64,
            pred_k as f64,
            &format!("precision[{cat}] zero division"),
            &mut flags,
        );
        let recall = safe_div(
            tp as f64,
            gold_k as f64,
            &format!("recall[{cat}] zero division"),
            &mut flags,
        );
        let f1 = safe_div(
            2.0 * precision * recall,
            precision + recall,
            &format!("f1[{cat}] zero division"),
            &mut flags,
        );
        f1_sum += f1;
        per_class.insert(
            cat.clone(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support: gold_k,
            },
        );
    }
    let pos = scheme.positive_index();
    let confusion = if c == 2 {
        let neg = 1 - pos;
        Confusion {
            tp: joint[pos][pos],
            fp: joint[neg][pos],
            fn_: joint[pos][neg],
            tn: joint[neg][neg],
        }
    } else {
        // one-vs-rest counts for the positive class
        let tp = joint[pos][pos];
        let fp: usize = (0..c).filter(|&g| g != pos).map(|g| joint[g][pos]).sum();
        let fn_: usize = (0..c).filter(|&p| p != pos).map(|p| joint[pos][p]).sum();
        Confusion {
            tp,
            fp,
            fn_,
            tn: total - tp - fp - fn_,
        }
    };
    let pos_metrics = per_class[scheme.positive()];
    Ok(MetricsReport {
        accuracy: correct as f64 / total as f64,
        precision_pos: pos_metrics.precision,
        recall_pos: pos_metrics.recall,
        f1_pos: pos_metrics.f1,
        macro_f1: f1_sum / c as f64,
        // micro-averaged F1 over all classes equals accuracy
        micro_f1: correct as f64 / total as f64,
        per_class,
        confusion,
        flags,
    })
}

/// Census of items where two classifiers diverge.
#[derive(Debug, Clone, Serialize)]
pub struct DisagreementCensus {
    pub compared: usize,
    pub diverging: usize,
    /// Percentage of compared items, rounded to 0.1.
    pub diverging_pct: f64,
    /// Items where the first classifier says positive, the second negative.
    pub a_positive: usize,
    /// Items where the second classifier says positive, the first negative.
    pub b_positive: usize,
    pub diverging_ids: Vec<String>,
}

pub fn classifier_disagreement(
    pred_a: &PredictionSet,
    pred_b: &PredictionSet,
    scheme: &LabelScheme,
) -> Result<DisagreementCensus> {
    let ids_a = pred_a.ids();
    let ids_b = pred_b.ids();
    if ids_a != ids_b {
        return Err(Error::CoverageMismatch {
            only_a: ids_a.difference(&ids_b).map(|s| s.to_string()).collect(),
            only_b: ids_b.difference(&ids_a).map(|s| s.to_string()).collect(),
        });
    }
    let positive = scheme.positive();
    let mut diverging_ids = Vec::new();
    let mut a_positive = 0;
    let mut b_positive = 0;
    for id in &ids_a {
        let la = &pred_a.predictions[*id];
        let lb = &pred_b.predictions[*id];
        if la != lb {
            diverging_ids.push(id.to_string());
            if la == positive {
                a_positive += 1;
            }
            if lb == positive {
                b_positive += 1;
            }
        }
    }
    Ok(DisagreementCensus {
        compared: ids_a.len(),
        diverging: diverging_ids.len(),
        diverging_pct: percentage(diverging_ids.len(), ids_a.len()),
        a_positive,
        b_positive,
        diverging_ids,
    })
}

/// Side-by-side metrics table for several classifiers, 3-decimal rounding.
pub fn render_comparison(rows: &[(String, MetricsReport)]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<16} {:>9} {:>10} {:>8} {:>8} {:>9}\n",
        "classifier", "accuracy", "precision", "recall", "f1", "macro-f1"
    ));
    for (name, m) in rows {
        out.push_str(&format!(
            "{:<16} {:>9.3} {:>10.3} {:>8.3} {:>8.3} {:>9.3}\n",
            name, m.accuracy, m.precision_pos, m.recall_pos, m.f1_pos, m.macro_f1
        ));
    }
    out
}
