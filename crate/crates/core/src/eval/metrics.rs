use serde::Serialize;

use crate::error::{Error, Result};
use crate::models::Prediction;

/// Rank-based ROC AUC with average ranks for ties:
/// `P(score_pos > score_neg) + P(tie) / 2`. `None` unless both classes occur.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<Option<f64>> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!("{} scores vs {} labels", scores.len(), labels.len())));
    }
    if let Some(y) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::InvalidArgument(format!("label {y} is not 0 or 1")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("auc score"));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of (doubled) ranks of positives; ranks start at 1, ties share their average.
    let mut pos_rank_sum2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let doubled_avg = (i + 1 + j + 1) as u128;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        pos_rank_sum2 += doubled_avg * pos_in_group;
        i = j + 1;
    }
    let (p, n) = (n_pos as u128, n_neg as u128);
    let u2 = pos_rank_sum2 - p * (p + 1);
    Ok(Some(u2 as f64 / (2 * p * n) as f64))
}

/// Test metrics of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub dataset: String,
    pub model: String,
    pub seed: u64,
    pub n: usize,
    pub ctr_auc: Option<f64>,
    pub ctcvr_auc: Option<f64>,
    pub n_pos_ctr: usize,
    pub n_neg_ctr: usize,
    pub n_pos_ctcvr: usize,
    pub n_neg_ctcvr: usize,
}

/// CTR-AUC against clicks and CTCVR-AUC against purchases.
pub fn evaluate(
    dataset: &str,
    model: &str,
    seed: u64,
    predictions: &[Prediction],
    labels: &[(u8, u8)],
) -> Result<EvalReport> {
    if predictions.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions vs {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let clicks: Vec<u8> = labels.iter().map(|l| l.0).collect();
    let buys: Vec<u8> = labels.iter().map(|l| l.1).collect();
    let ctr: Vec<f64> = predictions.iter().map(|p| p.p_ctr).collect();
    let ctcvr: Vec<f64> = predictions.iter().map(|p| p.p_ctcvr).collect();
    let pos = |v: &[u8]| v.iter().filter(|&&y| y == 1).count();
    Ok(EvalReport {
        dataset: dataset.to_string(),
        model: model.to_string(),
        seed,
        n: labels.len(),
        ctr_auc: auc(&ctr, &clicks)?,
        ctcvr_auc: auc(&ctcvr, &buys)?,
        n_pos_ctr: pos(&clicks),
        n_neg_ctr: labels.len() - pos(&clicks),
        n_pos_ctcvr: pos(&buys),
        n_neg_ctcvr: labels.len() - pos(&buys),
    })
}
