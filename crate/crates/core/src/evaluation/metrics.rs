use serde::Serialize;

use crate::error::{Error, Result};

/// Counts indexed `[true class][predicted class]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Argument("confusion matrix must be square".into()));
        }
        Ok(Self {
            k,
            counts: rows.concat(),
        })
    }

    pub fn num_classes(&self) -> usize {
        self.k
    }

    pub fn add(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.k != self.k {
            return Err(Error::shape("classes", self.k, other.k));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u64]> {
        self.counts.chunks(self.k.max(1))
    }

    /// One-vs-rest counts `(tp, fp, fn, tn)` for `class`.
    fn one_vs_rest(&self, class: usize) -> (u64, u64, u64, u64) {
        let tp = self.get(class, class);
        let predicted: u64 = (0..self.k).map(|t| self.get(t, class)).sum();
        let actual: u64 = (0..self.k).map(|p| self.get(class, p)).sum();
        let fp = predicted - tp;
        let fneg = actual - tp;
        (tp, fp, fneg, self.total() - tp - fp - fneg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub f1: f64,
    /// Set when some ratio had a zero denominator and was reported as 0.
    pub degenerate: bool,
}

fn ratio(num: u64, den: u64, degenerate: &mut bool) -> f64 {
    if den == 0 {
        *degenerate = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Binary metrics for `positive_class`, or unweighted one-vs-rest means
/// over all classes when it is `None`.
pub fn compute_metrics(cm: &ConfusionMatrix, positive_class: Option<usize>) -> Result<Metrics> {
    let total = cm.total();
    if cm.k == 0 || total == 0 {
        return Err(Error::Argument("empty confusion matrix".into()));
    }
    let mut degenerate = false;
    let per_class = |c: usize, degenerate: &mut bool| {
        let (tp, fp, fneg, tn) = cm.one_vs_rest(c);
        (
            ratio(tp, tp + fneg, degenerate),
            ratio(tn, tn + fp, degenerate),
            ratio(2 * tp, 2 * tp + fp + fneg, degenerate),
        )
    };
    match positive_class {
        Some(p) => {
            if p >= cm.k {
                return Err(Error::Argument(format!("positive class {p} out of range")));
            }
            let (tp, _, _, tn) = cm.one_vs_rest(p);
            let (se, sp, f1) = per_class(p, &mut degenerate);
            Ok(Metrics {
                accuracy: (tp + tn) as f64 / total as f64,
                sensitivity: se,
                specificity: sp,
                f1,
                degenerate,
            })
        }
        None => {
            let (mut se, mut sp, mut f1) = (0.0, 0.0, 0.0);
            for c in 0..cm.k {
                let (a, b, d) = per_class(c, &mut degenerate);
                se += a;
                sp += b;
                f1 += d;
            }
            let k = cm.k as f64;
            Ok(Metrics {
                accuracy: cm.trace() as f64 / total as f64,
                sensitivity: se / k,
                specificity: sp / k,
                f1: f1 / k,
                degenerate,
            })
        }
    }
}

/// Unweighted mean of several metric sets.
pub fn mean_metrics(all: &[Metrics]) -> Option<Metrics> {
    if all.is_empty() {
        return None;
    }
    let n = all.len() as f64;
    let mean = |f: fn(&Metrics) -> f64| all.iter().map(f).sum::<f64>() / n;
    Some(Metrics {
        accuracy: mean(|m| m.accuracy),
        sensitivity: mean(|m| m.sensitivity),
        specificity: mean(|m| m.specificity),
        f1: mean(|m| m.f1),
        degenerate: all.iter().any(|m| m.degenerate),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn binary_example() {
        let cm = ConfusionMatrix::from_rows(&[vec![8, 2], vec![1, 9]]).unwrap();
        let m = compute_metrics(&cm, Some(1)).unwrap();
        assert_eq!(m.sensitivity, 0.9);
        assert_eq!(m.specificity, 0.8);
        assert_eq!(m.accuracy, 0.85);
        assert_eq!(m.f1, 18.0 / 21.0);
        assert!(!m.degenerate);
    }

    #[test]
    fn diagonal_is_perfect() {
        let cm = ConfusionMatrix::from_rows(&[vec![3, 0, 0], vec![0, 4, 0], vec![0, 0, 5]]).unwrap();
        let m = compute_metrics(&cm, None).unwrap();
        assert_eq!((m.accuracy, m.sensitivity, m.specificity, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn constant_predictor_is_flagged() {
        let cm = ConfusionMatrix::from_rows(&[vec![0, 5], vec![0, 5]]).unwrap();
        let m = compute_metrics(&cm, Some(1)).unwrap();
        assert_eq!(m.specificity, 0.0);
        assert_eq!(m.sensitivity, 1.0);
        let cm = ConfusionMatrix::from_rows(&[vec![5, 0], vec![0, 0]]).unwrap();
        let m = compute_metrics(&cm, Some(1)).unwrap();
        assert_eq!(m.sensitivity, 0.0);
        assert!(m.degenerate);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(compute_metrics(&ConfusionMatrix::new(2), Some(1)).is_err());
        assert!(compute_metrics(&ConfusionMatrix::new(0), None).is_err());
    }

    proptest! {
        #[test]
        fn metrics_lie_in_unit_interval(counts in proptest::collection::vec(0u64..20, 9), pos in proptest::option::of(0usize..3)) {
            let rows: Vec<Vec<u64>> = counts.chunks(3).map(|c| c.to_vec()).collect();
            let cm = ConfusionMatrix::from_rows(&rows).unwrap();
            prop_assume!(cm.total() > 0);
            let m = compute_metrics(&cm, pos).unwrap();
            for v in [m.accuracy, m.sensitivity, m.specificity, m.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
