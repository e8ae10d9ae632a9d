//! Macro-averaged classification metrics.

/// Report of the five evaluation metrics. Macro quantities are unweighted
/// class means; per-class precision/recall/F1 define 0/0 as 0. AUROC is
/// computed one-vs-rest from concordant-pair counts (ties count 1/2); for
/// binary problems it is the positive-class AUROC. Classes whose AUROC is
/// undefined on the evaluation set (missing positives or negatives) are
/// skipped from the macro mean and listed in `auroc_skipped_classes`; if no
/// class is computable the AUROC reports chance level 0.5.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_auroc: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub auroc_skipped_classes: Vec<usize>,
}

/// One-vs-rest AUROC from scores and positivity flags, or None when either
/// side is empty. Exact: integer pair counting, ties contribute 1/2.
pub fn auroc_binary(scores: &[f64], is_positive: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), is_positive.len());
    let pos = is_positive.iter().filter(|p| **p).count();
    let neg = is_positive.len() - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut concordant: u64 = 0; // positive scored above negative
    let mut tied: u64 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut group_pos: u64 = 0;
        let mut group_neg: u64 = 0;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if is_positive[order[j]] {
                group_pos += 1;
            } else {
                group_neg += 1;
            }
            j += 1;
        }
        concordant += group_pos * negatives_below;
        tied += group_pos * group_neg;
        negatives_below += group_neg;
        i = j;
    }
    Some((concordant as f64 + 0.5 * tied as f64) / (pos as f64 * neg as f64))
}

/// Computes the report from per-bag class probabilities.
///
/// `probs[i]` holds the `n_classes` class probabilities of sample `i`; the
/// prediction is the argmax with ties broken toward the lowest class.
pub fn compute_report(n_classes: usize, y_true: &[usize], probs: &[Vec<f64>]) -> MetricsReport {
    assert_eq!(y_true.len(), probs.len());
    assert!(!y_true.is_empty(), "empty evaluation set");
    let n = y_true.len();

    let predictions: Vec<usize> = probs
        .iter()
        .map(|p| {
            let mut best = 0;
            for c in 1..n_classes {
                if p[c] > p[best] {
                    best = c;
                }
            }
            best
        })
        .collect();

    let accuracy = predictions
        .iter()
        .zip(y_true)
        .filter(|(p, t)| p == t)
        .count() as f64
        / n as f64;

    let mut precision_sum = 0.0;
    let mut recall_sum = 0.0;
    let mut f1_sum = 0.0;
    for c in 0..n_classes {
        let tp = predictions
            .iter()
            .zip(y_true)
            .filter(|(p, t)| **p == c && **t == c)
            .count() as f64;
        let fp = predictions
            .iter()
            .zip(y_true)
            .filter(|(p, t)| **p == c && **t != c)
            .count() as f64;
        let fn_ = predictions
            .iter()
            .zip(y_true)
            .filter(|(p, t)| **p != c && **t == c)
            .count() as f64;
        let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
        let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        precision_sum += precision;
        recall_sum += recall;
        f1_sum += f1;
    }

    let mut skipped = Vec::new();
    let macro_auroc = if n_classes == 2 {
        // binary: the positive-class AUROC is the report
        let scores: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        let flags: Vec<bool> = y_true.iter().map(|&t| t == 1).collect();
        match auroc_binary(&scores, &flags) {
            Some(a) => a,
            None => {
                skipped.extend(0..2);
                0.5
            }
        }
    } else {
        let mut total = 0.0;
        let mut used = 0;
        for c in 0..n_classes {
            let scores: Vec<f64> = probs.iter().map(|p| p[c]).collect();
            let flags: Vec<bool> = y_true.iter().map(|&t| t == c).collect();
            match auroc_binary(&scores, &flags) {
                Some(a) => {
                    total += a;
                    used += 1;
                }
                None => skipped.push(c),
            }
        }
        if used > 0 {
            total / used as f64
        } else {
            0.5
        }
    };

    MetricsReport {
        accuracy,
        macro_f1: f1_sum / n_classes as f64,
        macro_auroc,
        macro_precision: precision_sum / n_classes as f64,
        macro_recall: recall_sum / n_classes as f64,
        auroc_skipped_classes: skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Brute-force AUROC oracle: count pairs directly.
    fn auroc_pairs(scores: &[f64], flags: &[bool]) -> Option<f64> {
        let mut concordant = 0.0;
        let mut pairs = 0.0;
        for i in 0..scores.len() {
            if !flags[i] {
                continue;
            }
            for j in 0..scores.len() {
                if flags[j] {
                    continue;
                }
                pairs += 1.0;
                if scores[i] > scores[j] {
                    concordant += 1.0;
                } else if scores[i] == scores[j] {
                    concordant += 0.5;
                }
            }
        }
        if pairs == 0.0 {
            None
        } else {
            Some(concordant / pairs)
        }
    }

    #[test]
    fn perfect_separation_is_all_ones() {
        let y = vec![0, 0, 1, 1];
        let probs = vec![
            vec![0.9, 0.1],
            vec![0.8, 0.2],
            vec![0.2, 0.8],
            vec![0.1, 0.9],
        ];
        let r = compute_report(2, &y, &probs);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.macro_auroc, 1.0);
        assert_eq!(r.macro_precision, 1.0);
        assert_eq!(r.macro_recall, 1.0);
        assert!(r.auroc_skipped_classes.is_empty());
    }

    #[test]
    fn constant_predictor_on_balanced_binary() {
        let y = vec![0, 1, 0, 1];
        let probs = vec![vec![0.5, 0.5]; 4];
        let r = compute_report(2, &y, &probs);
        // argmax ties break to class 0, which covers half the set
        assert_eq!(r.accuracy, 0.5);
        assert_eq!(r.macro_auroc, 0.5);
    }

    #[test]
    fn auroc_matches_pair_counting_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        for case in 0..50 {
            let n = rng.gen_range(5..60);
            // quantized scores force plenty of ties
            let scores: Vec<f64> = (0..n)
                .map(|_| (rng.gen_range(0..8) as f64) / 7.0)
                .collect();
            let flags: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
            let fast = auroc_binary(&scores, &flags);
            let slow = auroc_pairs(&scores, &flags);
            match (fast, slow) {
                (Some(a), Some(b)) => {
                    assert!((a - b).abs() < 1e-12, "case {case}: {a} vs {b}")
                }
                (None, None) => {}
                other => panic!("case {case}: disagree on definedness: {other:?}"),
            }
        }
    }

    #[test]
    fn single_class_set_skips_with_flag() {
        let y = vec![1, 1, 1];
        let probs = vec![vec![0.4, 0.6]; 3];
        let r = compute_report(2, &y, &probs);
        assert_eq!(r.auroc_skipped_classes, vec![0, 1]);
        assert_eq!(r.macro_auroc, 0.5);

        // three classes, one absent: only the absent one is skipped
        let y = vec![0, 0, 1, 1];
        let probs = vec![
            vec![0.8, 0.1, 0.1],
            vec![0.7, 0.2, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.3, 0.6, 0.1],
        ];
        let r = compute_report(3, &y, &probs);
        assert_eq!(r.auroc_skipped_classes, vec![2]);
        assert!(r.macro_auroc > 0.9);
    }

    #[test]
    fn metric_bounds_and_macro_f1_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.gen_range(3..40);
            let classes = rng.gen_range(2..5);
            let y: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
            let probs: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let raw: Vec<f64> = (0..classes).map(|_| rng.gen_range(0.0..1.0)).collect();
                    let s: f64 = raw.iter().sum();
                    raw.into_iter().map(|v| v / s).collect()
                })
                .collect();
            let r = compute_report(classes, &y, &probs);
            for v in [
                r.accuracy,
                r.macro_f1,
                r.macro_auroc,
                r.macro_precision,
                r.macro_recall,
            ] {
                assert!((0.0..=1.0).contains(&v), "metric out of bounds: {v}");
            }
        }
    }
}
