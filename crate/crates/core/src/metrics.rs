//! Macro-averaged classification metrics.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroMetrics {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// `confusion[t][p]` counts examples with truth `t` predicted as `p`.
pub fn confusion_matrix(truths: &[usize], preds: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&t, &p) in truths.iter().zip(preds) {
        m[t][p] += 1;
    }
    m
}

/// Unweighted means of per-class precision, recall and F1 over all
/// `classes`; any 0/0 ratio counts as 0.
pub fn macro_metrics(truths: &[usize], preds: &[usize], classes: usize) -> MacroMetrics {
    assert_eq!(truths.len(), preds.len(), "truths and predictions differ in length");
    if classes == 0 {
        return MacroMetrics {
            f1: 0.0,
            precision: 0.0,
            recall: 0.0,
        };
    }
    let m = confusion_matrix(truths, preds, classes);
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (mut f1, mut precision, mut recall) = (0.0, 0.0, 0.0);
    for c in 0..classes {
        let tp = m[c][c];
        let predicted: usize = (0..classes).map(|t| m[t][c]).sum();
        let actual: usize = m[c].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision += p;
        recall += r;
        if p + r > 0.0 {
            f1 += 2.0 * p * r / (p + r);
        }
    }
    let n = classes as f64;
    MacroMetrics {
        f1: f1 / n,
        precision: precision / n,
        recall: recall / n,
    }
}

pub fn accuracy(truths: &[usize], preds: &[usize]) -> f64 {
    if truths.is_empty() {
        return 0.0;
    }
    truths.iter().zip(preds).filter(|(t, p)| t == p).count() as f64 / truths.len() as f64
}
