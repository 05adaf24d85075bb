use crate::error::{Error, Result};

/// `sqrt(mean((truth - pred)^2)) / mean(truth)`.
pub fn cvrmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    if pred.len() != truth.len() {
        return Err(Error::shape(format!("{} predictions for {} observations", pred.len(), truth.len())));
    }
    if truth.is_empty() {
        return Err(Error::UndefinedMetric("CVRMSE of an empty series".into()));
    }
    let n = truth.len() as f64;
    let mean = truth.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::UndefinedMetric("CVRMSE with zero-mean truth".into()));
    }
    let mse = truth.iter().zip(pred).map(|(t, p)| (t - p) * (t - p)).sum::<f64>() / n;
    Ok(mse.sqrt() / mean)
}

/// Area under the ROC curve from score ranks; tied scores count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::input("NaN score"));
    }
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric("ROC-AUC needs both classes".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Mid-ranks (1-based) over tie groups.
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cvrmse_examples() {
        assert_eq!(cvrmse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert!((cvrmse(&[3.0, 3.0], &[2.0, 4.0]).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert!((cvrmse(&[13.0], &[10.0]).unwrap() - 0.3).abs() < 1e-15);
        assert!(matches!(cvrmse(&[1.0, -1.0], &[1.0, -1.0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[false, false, true, true]).unwrap(), 0.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
        assert!(matches!(roc_auc(&[0.5, 0.6], &[true, true]), Err(Error::UndefinedMetric(_))));
    }
}
