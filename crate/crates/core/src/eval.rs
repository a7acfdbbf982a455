//! Decoding-based evaluation and the `key<TAB>value` report format.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{decode, Example, Instance, LabelSpace, ParamVector, SequenceInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold: usize,
    pub predicted: usize,
    /// Neither gold nor predictions contain the label; its F1 counts as 0.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    /// Instance accuracy (classification) or token accuracy (chains).
    pub accuracy: f64,
    pub macro_f1: f64,
    pub items: usize,
    pub per_label: Vec<LabelScores>,
    /// Training objective trace; empty for a plain evaluation.
    pub objective_trace: Vec<f64>,
    /// `(phase, seconds)`; empty for a plain evaluation.
    pub phase_seconds: Vec<(String, f64)>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Scores aligned gold/predicted label streams over `k` labels.
pub fn score_predictions(gold: &[usize], pred: &[usize], k: usize) -> Result<ExperimentReport> {
    if gold.len() != pred.len() {
        return Err(Error::Contract(format!(
            "{} gold labels against {} predictions",
            gold.len(),
            pred.len()
        )));
    }
    if let Some(&bad) = gold.iter().chain(pred).find(|&&y| y >= k) {
        return Err(Error::Index {
            what: "label",
            index: bad,
            limit: k,
        });
    }
    let mut tp = vec![0usize; k];
    let mut n_gold = vec![0usize; k];
    let mut n_pred = vec![0usize; k];
    for (&g, &p) in gold.iter().zip(pred) {
        n_gold[g] += 1;
        n_pred[p] += 1;
        if g == p {
            tp[g] += 1;
        }
    }
    let per_label: Vec<LabelScores> = (0..k)
        .map(|y| {
            let precision = ratio(tp[y], n_pred[y]);
            let recall = ratio(tp[y], n_gold[y]);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            LabelScores {
                precision,
                recall,
                f1,
                gold: n_gold[y],
                predicted: n_pred[y],
                empty: n_gold[y] == 0 && n_pred[y] == 0,
            }
        })
        .collect();
    let macro_f1 = if k == 0 {
        0.0
    } else {
        per_label.iter().map(|s| s.f1).sum::<f64>() / k as f64
    };
    Ok(ExperimentReport {
        accuracy: ratio(tp.iter().sum(), gold.len()),
        macro_f1,
        items: gold.len(),
        per_label,
        objective_trace: Vec::new(),
        phase_seconds: Vec::new(),
    })
}

/// Argmax / Viterbi decodings of every example.
pub fn predict(lambda: &ParamVector, data: &[Example]) -> Result<Vec<Vec<usize>>> {
    data.iter().map(|ex| decode(lambda, ex.as_ref())).collect()
}

/// Copies of `data` carrying their decoded labels.
pub fn relabel(lambda: &ParamVector, data: &[Example]) -> Result<Vec<Example>> {
    data.iter()
        .map(|ex| {
            let y = decode(lambda, ex.as_ref())?;
            match ex {
                Example::Flat(i) => Ok(Example::Flat(Instance::new(i.features.clone(), Some(y[0])))),
                Example::Sequence(s) => {
                    SequenceInstance::new(s.positions.clone(), Some(y)).map(Example::Sequence)
                }
            }
        })
        .collect()
}

/// Decodes `test` and scores it against its gold labels.
pub fn evaluate(lambda: &ParamVector, test: &[Example]) -> Result<ExperimentReport> {
    let mut gold = Vec::new();
    let mut pred = Vec::new();
    for (i, ex) in test.iter().enumerate() {
        let g = ex
            .as_ref()
            .gold()
            .ok_or_else(|| Error::Contract(format!("test instance {i} is unlabeled")))?;
        gold.extend(g);
        pred.extend(decode(lambda, ex.as_ref())?);
    }
    score_predictions(&gold, &pred, lambda.num_labels())
}

impl ExperimentReport {
    /// Line-oriented `key<TAB>value` text; floats in shortest round-trip form.
    pub fn to_text(&self, labels: &LabelSpace) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "items\t{}", self.items);
        let _ = writeln!(out, "accuracy\t{:?}", self.accuracy);
        let _ = writeln!(out, "macro_f1\t{:?}", self.macro_f1);
        for (y, s) in self.per_label.iter().enumerate() {
            let name = labels.name(y).unwrap_or("?");
            let _ = writeln!(out, "label.{name}.precision\t{:?}", s.precision);
            let _ = writeln!(out, "label.{name}.recall\t{:?}", s.recall);
            let _ = writeln!(out, "label.{name}.f1\t{:?}", s.f1);
            let _ = writeln!(out, "label.{name}.gold\t{}", s.gold);
            let _ = writeln!(out, "label.{name}.predicted\t{}", s.predicted);
            if s.empty {
                let _ = writeln!(out, "label.{name}.empty\ttrue");
            }
        }
        for (i, v) in self.objective_trace.iter().enumerate() {
            let _ = writeln!(out, "objective.{i}\t{v:?}");
        }
        for (phase, secs) in &self.phase_seconds {
            let _ = writeln!(out, "seconds.{phase}\t{secs:.3}");
        }
        out
    }
}
