use super::{EvalError, Result};

fn same_len(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(EvalError::LengthMismatch { expected: b, got: a });
    }
    if a == 0 {
        return Err(EvalError::Empty);
    }
    Ok(())
}

/// Fraction of exact matches.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    let correct = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(correct as f64 / truth.len() as f64)
}

/// Accuracy within each true class, sorted by class.
pub fn per_class_accuracy(pred: &[u32], truth: &[u32]) -> Result<Vec<(u32, f64)>> {
    same_len(pred.len(), truth.len())?;
    let mut classes = truth.to_vec();
    classes.sort_unstable();
    classes.dedup();
    Ok(classes
        .into_iter()
        .map(|c| {
            let (mut n, mut hit) = (0usize, 0usize);
            for (p, t) in pred.iter().zip(truth) {
                if *t == c {
                    n += 1;
                    hit += usize::from(p == t);
                }
            }
            (c, hit as f64 / n as f64)
        })
        .collect())
}

/// `1 - SS_res / SS_tot` about the mean of `truth`.
pub fn r_squared(pred: &[f64], truth: &[f64]) -> Result<f64> {
    same_len(pred.len(), truth.len())?;
    if truth.len() < 2 {
        return Err(EvalError::Empty);
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(EvalError::ConstantTruth);
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (t - p).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Probability that a random positive scores above a random negative, ties
/// counting one half. Computed from mid-ranks.
pub fn auc_roc(scores: &[f64], truth: &[bool]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    let n_pos = truth.iter().filter(|&&t| t).count();
    let n_neg = truth.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(EvalError::SingleClass);
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(EvalError::NonFinite);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Twice the rank sum keeps mid-ranks integral.
    let mut pos_rank_x2 = 0u64;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        let mid_x2 = (start + 1 + end) as u64;
        pos_rank_x2 += mid_x2 * order[start..end].iter().filter(|&&i| truth[i]).count() as u64;
        start = end;
    }
    let u_x2 = pos_rank_x2 - (n_pos * (n_pos + 1)) as u64;
    Ok(u_x2 as f64 / (2 * n_pos * n_neg) as f64)
}

/// Mean AUC over tag columns (`scores[sample][tag]`). Tags whose truth
/// column has a single class are skipped; an error if all are.
pub fn macro_auc_roc(scores: &[Vec<f64>], truth: &[Vec<bool>]) -> Result<f64> {
    same_len(scores.len(), truth.len())?;
    let n_tags = truth[0].len();
    let mut sum = 0.0;
    let mut used = 0usize;
    for tag in 0..n_tags {
        let s: Vec<f64> = scores.iter().map(|r| r[tag]).collect();
        let t: Vec<bool> = truth.iter().map(|r| r[tag]).collect();
        match auc_roc(&s, &t) {
            Ok(a) => {
                sum += a;
                used += 1;
            }
            Err(EvalError::SingleClass) => {}
            Err(e) => return Err(e),
        }
    }
    if used == 0 {
        return Err(EvalError::SingleClass);
    }
    Ok(sum / used as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_counts() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 1, 1, 0], &[1, 0, 0, 1]).unwrap(), 0.0);
        let pred = [0, 0, 1, 2, 2, 1];
        let truth = [0, 1, 1, 2, 2, 0];
        assert!((accuracy(&pred, &truth).unwrap() - 4.0 / 6.0).abs() < 1e-12);
        assert_eq!(per_class_accuracy(&pred, &truth).unwrap(), vec![(0, 0.5), (1, 0.5), (2, 1.0)]);
        assert!(matches!(accuracy(&[1], &[1, 2]), Err(EvalError::LengthMismatch { .. })));
    }

    #[test]
    fn r_squared_hand_values() {
        assert_eq!(r_squared(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert!(matches!(r_squared(&[1.0, 2.0], &[3.0, 3.0]), Err(EvalError::ConstantTruth)));
    }

    #[test]
    fn auc_pair_counts() {
        assert_eq!(auc_roc(&[0.9, 0.4, 0.6, 0.2], &[true, false, true, false]).unwrap(), 1.0);
        assert_eq!(auc_roc(&[0.9, 0.6, 0.4, 0.2], &[true, false, true, false]).unwrap(), 0.75);
        assert_eq!(auc_roc(&[0.3; 5], &[true, false, true, false, false]).unwrap(), 0.5);
        assert!(matches!(auc_roc(&[0.1, 0.2], &[true, true]), Err(EvalError::SingleClass)));
    }

    #[test]
    fn macro_auc_skips_constant_tags() {
        let s = vec![vec![0.9, 0.1], vec![0.1, 0.2], vec![0.5, 0.3]];
        let t = vec![vec![true, false], vec![false, false], vec![true, false]];
        assert_eq!(macro_auc_roc(&s, &t).unwrap(), 1.0);
    }
}
