//! ROC AUC, hyperparameter grid search and the conservation score.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TskError};
use crate::pipeline::{evaluation_kernel, kernel_stage, weight_stage, TskSettings};
use crate::seqdata::{Alphabet, Label, LabeledDataset, Sequence};
use crate::wsvm::{train_weighted_svm, SvmTrainConfig};

fn class_counts(labels: &[Label]) -> (usize, usize) {
    let pos = labels.iter().filter(|&&l| l == Label::Positive).count();
    (pos, labels.len() - pos)
}

/// Area under the ROC curve from rank statistics, ties counted as one half.
///
/// Midranks are kept doubled so the Mann–Whitney statistic stays an exact
/// integer; the only rounding is the final division.
pub fn roc_auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(TskError::DimensionMismatch(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(TskError::InvalidParams("scores contain NaN".into()));
    }
    let (n_pos, n_neg) = class_counts(labels);
    if n_pos == 0 || n_neg == 0 {
        return Err(TskError::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut rank_sum2: u128 = 0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && scores[order[end + 1]] == scores[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end+1, doubled midrank = first + last
        let doubled = (start + 1 + end + 1) as u128;
        let pos_in_group = order[start..=end]
            .iter()
            .filter(|&&i| labels[i] == Label::Positive)
            .count() as u128;
        rank_sum2 += doubled * pos_in_group;
        start = end + 1;
    }
    let np = n_pos as u128;
    let u2 = rank_sum2 - np * (np + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Per-sample scores with their AUC.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub rows: Vec<(String, f64, Label)>,
}

impl EvalReport {
    pub fn new(ids: Vec<String>, scores: Vec<f64>, labels: &[Label]) -> Result<Self> {
        let auc = roc_auc(&scores, labels)?;
        let (n_pos, n_neg) = class_counts(labels);
        let rows = ids
            .into_iter()
            .zip(scores)
            .zip(labels.iter().copied())
            .map(|((id, s), l)| (id, s, l))
            .collect();
        Ok(EvalReport {
            auc,
            n_pos,
            n_neg,
            rows,
        })
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "id\tscore\tlabel")?;
        for (id, s, l) in &self.rows {
            writeln!(w, "{id}\t{s:.6}\t{l}")?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        serde_json::json!({
            "auc": self.auc,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "n": self.rows.len(),
        })
        .to_string()
    }
}

/// Hyperparameter lists swept by [`grid_search`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub k: Vec<usize>,
    pub m: Vec<usize>,
    pub c: Vec<f64>,
}

impl ParamGrid {
    pub fn single(k: usize, m: usize, c: f64) -> Self {
        ParamGrid {
            k: vec![k],
            m: vec![m],
            c: vec![c],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.is_empty() || self.m.is_empty() || self.c.is_empty() {
            return Err(TskError::Config("k, m and C grids must be non-empty".into()));
        }
        if self.c.iter().any(|c| !(*c > 0.0)) {
            return Err(TskError::Config("C values must be positive".into()));
        }
        Ok(())
    }

    /// Sorted, deduplicated copy.
    pub fn sorted(&self) -> Self {
        let mut k = self.k.clone();
        k.sort_unstable();
        k.dedup();
        let mut m = self.m.clone();
        m.sort_unstable();
        m.dedup();
        let mut c = self.c.clone();
        c.sort_by(f64::total_cmp);
        c.dedup();
        ParamGrid { k, m, c }
    }

    pub fn len(&self) -> usize {
        self.k.len() * self.m.len() * self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub k: usize,
    pub m: usize,
    pub c: f64,
    pub auc: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchRecord {
    pub rows: Vec<GridRow>,
    /// Index into `rows` of the selected cell.
    pub selected: usize,
}

impl GridSearchRecord {
    /// Picks the best AUC; ties go to the smallest k, then m, then C.
    pub fn from_rows(rows: Vec<GridRow>) -> Result<Self> {
        let mut best: Option<usize> = None;
        for (i, row) in rows.iter().enumerate() {
            let Some(auc) = row.auc else { continue };
            let better = match best {
                None => true,
                Some(b) => {
                    let cur = &rows[b];
                    let cur_auc = cur.auc.unwrap();
                    auc > cur_auc
                        || (auc == cur_auc
                            && (row.k, row.m).cmp(&(cur.k, cur.m)).then(row.c.total_cmp(&cur.c))
                                == std::cmp::Ordering::Less)
                }
            };
            if better {
                best = Some(i);
            }
        }
        match best {
            Some(selected) => Ok(GridSearchRecord { rows, selected }),
            None => Err(TskError::GridFailed(
                rows.iter()
                    .filter_map(|r| r.error.as_ref().map(|e| format!("(k={}, m={}, C={}): {e}", r.k, r.m, r.c)))
                    .collect::<Vec<_>>()
                    .join("; "),
            )),
        }
    }

    pub fn selected_row(&self) -> &GridRow {
        &self.rows[self.selected]
    }

    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "k\tm\tC\tauc\tstatus")?;
        for (i, r) in self.rows.iter().enumerate() {
            let auc = r.auc.map(|a| format!("{a:.6}")).unwrap_or_else(|| "NA".into());
            let status = match (&r.error, i == self.selected) {
                (Some(e), _) => format!("failed: {}", e.replace(['\t', '\n'], " ")),
                (None, true) => "selected".into(),
                (None, false) => "ok".into(),
            };
            writeln!(w, "{}\t{}\t{:.6}\t{auc}\t{status}", r.k, r.m, r.c)?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> String {
        let sel = self.selected_row();
        serde_json::json!({
            "cells": self.rows.len(),
            "failed": self.rows.iter().filter(|r| r.error.is_some()).count(),
            "selected": { "k": sel.k, "m": sel.m, "C": sel.c, "auc": sel.auc },
        })
        .to_string()
    }
}

/// Sweeps `(k, m, C)`, training on `train` (weighted against `target`
/// when `use_kmm`) and scoring AUC on `validation`.
///
/// Kernels and weights depend only on `(k, m)` and are shared across C.
pub fn grid_search(
    train: &LabeledDataset,
    validation: &LabeledDataset,
    target: &[Sequence],
    grid: &ParamGrid,
    use_kmm: bool,
    alphabet: &Alphabet,
    settings: &TskSettings,
) -> Result<GridSearchRecord> {
    grid.validate()?;
    let grid = grid.sorted();
    let settings = if use_kmm {
        settings.clone()
    } else {
        settings.baseline()
    };
    let mut rows = Vec::with_capacity(grid.len());
    for &k in &grid.k {
        for &m in &grid.m {
            let shared = (|| {
                let params = settings.kernel_params(k, m)?;
                let kernels = kernel_stage(train.sequences(), target, &params, alphabet, &settings)?;
                let beta = weight_stage(&kernels, &settings)?;
                let val = evaluation_kernel(train.sequences(), validation.sequences(), &params, alphabet, &settings)?;
                Ok::<_, TskError>((kernels, beta, val))
            })();
            for &c in &grid.c {
                let outcome = shared.as_ref().map_err(|e| e.to_string()).and_then(|(kernels, beta, val)| {
                    let svm = SvmTrainConfig {
                        c,
                        ..settings.svm.clone()
                    };
                    let sol = train_weighted_svm(&kernels.gram, train.labels(), beta, &svm).map_err(|e| e.to_string())?;
                    let scores = sol.decision_values(val).map_err(|e| e.to_string())?;
                    roc_auc(&scores, validation.labels()).map_err(|e| e.to_string())
                });
                let (auc, error) = match outcome {
                    Ok(a) => (Some(a), None),
                    Err(e) => (None, Some(e)),
                };
                rows.push(GridRow { k, m, c, auc, error });
            }
        }
    }
    GridSearchRecord::from_rows(rows)
}

/// Position-level conservation scores; `None` marks a non-conserved
/// position with no reported score.
#[derive(Clone, Debug, PartialEq)]
pub struct ConservationInput {
    pub scores: Vec<Option<f64>>,
}

/// Aggregates that enter the conservation score formula.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConservationSummary {
    /// Mean of positive scores.
    pub pos_score: f64,
    /// Mean of negative scores (a negative number).
    pub neg_score: f64,
    /// Non-conserved positions.
    pub c_n: usize,
    /// All positions.
    pub c_t: usize,
}

impl ConservationInput {
    pub fn total(&self) -> usize {
        self.scores.len()
    }

    pub fn non_conserved(&self) -> usize {
        self.scores.iter().filter(|s| s.is_none()).count()
    }

    pub fn summary(&self) -> Result<ConservationSummary> {
        let (mut pos_sum, mut pos_n, mut neg_sum, mut neg_n) = (0.0, 0usize, 0.0, 0usize);
        for s in self.scores.iter().flatten() {
            if !s.is_finite() {
                return Err(TskError::Conservation(format!("non-finite score {s}")));
            }
            if *s > 0.0 {
                pos_sum += s;
                pos_n += 1;
            } else if *s < 0.0 {
                neg_sum += s;
                neg_n += 1;
            }
        }
        if pos_n == 0 {
            return Err(TskError::Conservation("no positively scored positions (PosScore is zero)".into()));
        }
        if neg_n == 0 {
            return Err(TskError::Conservation("no negatively scored positions (NegScore is zero)".into()));
        }
        Ok(ConservationSummary {
            pos_score: pos_sum / pos_n as f64,
            neg_score: neg_sum / neg_n as f64,
            c_n: self.non_conserved(),
            c_t: self.total(),
        })
    }

    /// One score per line; `NA`, `.` or `-` mark a non-conserved position;
    /// blank and '#' lines are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut scores = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if matches!(line, "NA" | "na" | "." | "-") {
                scores.push(None);
                continue;
            }
            let v: f64 = line.parse().map_err(|_| TskError::Format {
                line: idx + 1,
                message: format!("expected a score or NA, got '{line}'"),
            })?;
            scores.push(Some(v));
        }
        Ok(ConservationInput { scores })
    }
}

/// `CS = ln(PosScore) − ln|NegScore| − ln(C_n/C_t)/100`.
pub fn conservation_from_summary(s: &ConservationSummary) -> Result<f64> {
    if !(s.pos_score > 0.0) {
        return Err(TskError::Conservation(format!("PosScore must be positive (got {})", s.pos_score)));
    }
    if s.neg_score == 0.0 || !s.neg_score.is_finite() {
        return Err(TskError::Conservation(format!("|NegScore| must be positive (got {})", s.neg_score)));
    }
    if s.c_n == 0 {
        return Err(TskError::Conservation("C_n is zero; log(C_n/C_t) is undefined".into()));
    }
    if s.c_n > s.c_t {
        return Err(TskError::Conservation(format!("C_n = {} exceeds C_t = {}", s.c_n, s.c_t)));
    }
    let penalty = (s.c_n as f64 / s.c_t as f64).ln() / 100.0;
    Ok(s.pos_score.ln() - s.neg_score.abs().ln() - penalty)
}

pub fn conservation_score(input: &ConservationInput) -> Result<f64> {
    conservation_from_summary(&input.summary()?)
}
