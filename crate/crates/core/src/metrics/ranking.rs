use crate::error::{Error, Result};

fn check(op: &'static str, scores: &[f64], labels: &[bool]) -> Result<()> {
    if scores.len() != labels.len() {
        return Err(Error::shape(op, &[scores.len()], &[labels.len()]));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::domain(op, format!("non-finite score {bad}")));
    }
    Ok(())
}

/// Area under the ROC curve: the Mann–Whitney U statistic over `n⁺·n⁻`,
/// with tied scores contributing one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check("roc_auc", scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Contract(format!(
            "roc_auc needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks, 1-based
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += mid * idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64;
        i = j + 1;
    }
    let p = n_pos as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n_neg as f64))
}

/// Area under the precision–recall curve.
///
/// Scores are swept in descending order with tied scores treated as one
/// threshold. Precision at each recall level is replaced by its envelope (the
/// best precision at that recall or beyond) and integrated as a step function
/// of recall.
pub fn pr_aupr(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check("pr_aupr", scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    if n_pos == 0 {
        return Err(Error::Contract("pr_aupr needs at least one positive".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < idx.len() {
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push((tp as f64 / n_pos as f64, tp as f64 / (tp + fp) as f64));
    }
    for j in (0..points.len().saturating_sub(1)).rev() {
        points[j].1 = points[j].1.max(points[j + 1].1);
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for (r, p) in points {
        area += (r - prev_recall) * p;
        prev_recall = r;
    }
    Ok(area)
}
