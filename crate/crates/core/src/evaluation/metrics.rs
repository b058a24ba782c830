//! Ranking-quality metrics over per-tick scores and binary labels.

use serde::Serialize;

use crate::error::{Error, Result};

fn check(scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::input(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("scores contain NaN"));
    }
    Ok(())
}

/// Area under the ROC curve: the probability that a random positive scores
/// above a random negative, ties counting one half.
pub fn auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::input("auc needs at least one positive and one negative label"));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // sum of positive ranks (1-based, ties share their average rank)
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg_rank = (i + j + 2) as f64 / 2.0;
        let pos_in_group = order[i..=j].iter().filter(|&&k| labels[k]).count();
        rank_sum += avg_rank * pos_in_group as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TopK {
    pub k: usize,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Indices of the `k` highest scores, ties broken by the earlier index.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Precision, recall and F-measure of flagging the top `k` ticks.
pub fn f_measure_topk(scores: &[f64], labels: &[bool], k: usize) -> Result<TopK> {
    check(scores, labels)?;
    if k > scores.len() {
        return Err(Error::input(format!("top-{k} requested from {} ticks", scores.len())));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let hits = top_k_indices(scores, k).into_iter().filter(|&i| labels[i]).count();
    let precision = if k == 0 { 0.0 } else { hits as f64 / k as f64 };
    let recall = if n_pos == 0 { 0.0 } else { hits as f64 / n_pos as f64 };
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TopK {
        k,
        precision,
        recall,
        f_measure,
    })
}
