//! Ranking and classification metrics for alignment scoring: precision at a
//! recall floor, macro F1 with validation-selected threshold, and the area
//! under the precision-recall curve.
//!
//! All metrics treat scores as alignment probabilities and break score ties
//! by grouping: cut points exist only between distinct score values, so tied
//! pairs enter or leave the predicted-positive set together.

use crate::error::{KgError, Result};

/// Precision/recall values at every distinct-score cut point, descending by
/// score. Each point reports the statistics of predicting positive for all
/// scores >= the group's score.
#[derive(Clone, Debug)]
pub struct PrCurve {
    /// (recall, precision, threshold) per cut point
    pub points: Vec<(f64, f64, f64)>,
    pub n_pos: usize,
    pub n_neg: usize,
}

fn sorted_desc(scores: &[f64], labels: &[bool]) -> Vec<(f64, bool)> {
    let mut rows: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    rows.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    rows
}

/// Builds the grouped precision-recall curve. Errors when either class is
/// absent or any score is not finite.
pub fn pr_curve(scores: &[f64], labels: &[bool]) -> Result<PrCurve> {
    if scores.len() != labels.len() {
        return Err(KgError::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(KgError::UndefinedMetric("non-finite score".into()));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 {
        return Err(KgError::UndefinedMetric(
            "no positive pairs: recall undefined".into(),
        ));
    }
    let rows = sorted_desc(scores, labels);
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut taken = 0usize;
    let mut k = 0usize;
    while k < rows.len() {
        let score = rows[k].0;
        while k < rows.len() && rows[k].0 == score {
            if rows[k].1 {
                tp += 1;
            }
            taken += 1;
            k += 1;
        }
        points.push((
            tp as f64 / n_pos as f64,
            tp as f64 / taken as f64,
            score,
        ));
    }
    Ok(PrCurve {
        points,
        n_pos,
        n_neg,
    })
}

/// Highest precision among cut points whose recall reaches `min_recall`,
/// together with the threshold achieving it (the larger threshold on ties).
pub fn precision_at_recall(
    scores: &[f64],
    labels: &[bool],
    min_recall: f64,
) -> Result<(f64, f64)> {
    let curve = pr_curve(scores, labels)?;
    let mut best: Option<(f64, f64)> = None;
    // points run from larger to smaller thresholds: strict improvement keeps
    // the larger threshold on precision ties
    for &(r, p, t) in &curve.points {
        if r < min_recall {
            continue;
        }
        if best.is_none_or(|(bp, _)| p > bp) {
            best = Some((p, t));
        }
    }
    best.ok_or_else(|| {
        KgError::UndefinedMetric(format!("no cut point reaches recall {min_recall}"))
    })
}

/// Area under the grouped precision-recall curve by the trapezoidal rule,
/// anchored at `(recall 0, precision of the first cut point)`.
pub fn prauc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let curve = pr_curve(scores, labels)?;
    let mut area = 0.0;
    let mut prev = (0.0, curve.points[0].1);
    for &(r, p, _) in &curve.points {
        area += (r - prev.0) * (p + prev.1) / 2.0;
        prev = (r, p);
    }
    Ok(area)
}

/// Unweighted mean of the positive-class and negative-class F1 when
/// predicting positive for `score >= threshold`.
pub fn macro_f1_at(scores: &[f64], labels: &[bool], threshold: f64) -> Result<f64> {
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(KgError::UndefinedMetric(
            "macro F1 needs both classes".into(),
        ));
    }
    let (mut tp, mut fp, mut tn, mut fne) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &l) in scores.iter().zip(labels) {
        match (s >= threshold, l) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, false) => tn += 1,
            (false, true) => fne += 1,
        }
    }
    let f1_pos = if 2 * tp + fp + fne == 0 {
        0.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fne) as f64
    };
    let f1_neg = if 2 * tn + fne + fp == 0 {
        0.0
    } else {
        2.0 * tn as f64 / (2 * tn + fne + fp) as f64
    };
    Ok((f1_pos + f1_neg) / 2.0)
}

/// Picks the threshold maximizing macro F1 over the distinct score values
/// (plus the reject-all cut). Ties go to the larger threshold. Returns
/// `(threshold, macro F1 at that threshold)`.
pub fn f1_select_threshold(scores: &[f64], labels: &[bool]) -> Result<(f64, f64)> {
    if scores.is_empty() {
        return Err(KgError::UndefinedMetric("no validation pairs".into()));
    }
    let mut candidates: Vec<f64> = scores.to_vec();
    candidates.sort_by(|a, b| b.partial_cmp(a).unwrap());
    candidates.dedup();
    // reject-all cut: just above the maximum score
    let mut best: Option<(f64, f64)> = None;
    let reject_all = candidates[0] + 1.0;
    for t in std::iter::once(reject_all).chain(candidates) {
        let f1 = macro_f1_at(scores, labels, t)?;
        let better = match best {
            None => true,
            Some((_, bf)) => f1 > bf,
        };
        if better {
            best = Some((t, f1));
        }
    }
    best.ok_or_else(|| KgError::UndefinedMetric("no candidate threshold".into()))
}

/// Applies the validation-selected threshold to a test set: picks the
/// threshold maximizing validation macro F1 and returns the test macro F1 at
/// that threshold, with the threshold itself.
pub fn f1_from_validation(
    val_scores: &[f64],
    val_labels: &[bool],
    test_scores: &[f64],
    test_labels: &[bool],
) -> Result<(f64, f64)> {
    let (threshold, _) = f1_select_threshold(val_scores, val_labels)?;
    let f1 = macro_f1_at(test_scores, test_labels, threshold)?;
    Ok((f1, threshold))
}

/// Summary of one evaluation over a held-out scored pair set.
#[derive(Clone, Debug)]
pub struct EvalReport {
    pub precision_at_recall95: f64,
    pub macro_f1: f64,
    pub prauc: f64,
    pub threshold: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl EvalReport {
    /// Evaluates test scores under a threshold chosen elsewhere (usually on
    /// validation data).
    pub fn compute(scores: &[f64], labels: &[bool], threshold: f64) -> Result<Self> {
        let curve = pr_curve(scores, labels)?;
        Ok(EvalReport {
            precision_at_recall95: precision_at_recall(scores, labels, 0.95)?.0,
            macro_f1: macro_f1_at(scores, labels, threshold)?,
            prauc: prauc(scores, labels)?,
            threshold,
            n_pos: curve.n_pos,
            n_neg: curve.n_neg,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "pairs\tpos={} neg={}\nthreshold\t{:.6}\nmacro_f1\t{:.6}\nprecision_at_recall95\t{:.6}\nprauc\t{:.6}\n",
            self.n_pos, self.n_neg, self.threshold, self.macro_f1,
            self.precision_at_recall95, self.prauc
        )
    }
}

/// Tab-separated `recall precision threshold` rows for external plotting.
pub fn curve_to_tsv(curve: &PrCurve) -> String {
    let mut out = String::from("recall\tprecision\tthreshold\n");
    for &(r, p, t) in &curve.points {
        out.push_str(&format!("{r:.6}\t{p:.6}\t{t:.6}\n"));
    }
    out
}
