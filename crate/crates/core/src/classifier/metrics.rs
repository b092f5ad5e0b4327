use serde::{Deserialize, Serialize};

/// Macro-averaged classification scores. `f1` is the harmonic mean of the
/// macro precision and macro recall.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    /// `counts[actual][predicted]`
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_pairs(classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::new(classes);
        for (actual, predicted) in pairs {
            m.add(actual, predicted);
        }
        m
    }

    pub fn add(&mut self, actual: usize, predicted: usize) {
        self.counts[actual][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn scores(&self) -> Scores {
        let k = self.counts.len();
        let total = self.total();
        if total == 0 || k == 0 {
            return Scores { accuracy: 0.0, precision: 0.0, recall: 0.0, f1: 0.0 };
        }
        let correct: usize = (0..k).map(|c| self.counts[c][c]).sum();
        let mut precision = 0.0;
        let mut recall = 0.0;
        for c in 0..k {
            let tp = self.counts[c][c] as f64;
            let predicted: usize = (0..k).map(|a| self.counts[a][c]).sum();
            let actual: usize = self.counts[c].iter().sum();
            if predicted > 0 {
                precision += tp / predicted as f64;
            }
            if actual > 0 {
                recall += tp / actual as f64;
            }
        }
        precision /= k as f64;
        recall /= k as f64;
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        Scores {
            accuracy: correct as f64 / total as f64,
            precision,
            recall,
            f1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Per-class one-vs-rest counting straight from the pair list.
    fn oracle(classes: usize, pairs: &[(usize, usize)]) -> (f64, f64, f64) {
        let mut p_sum = 0.0;
        let mut r_sum = 0.0;
        for c in 0..classes {
            let tp = pairs.iter().filter(|&&(a, p)| a == c && p == c).count() as f64;
            let fp = pairs.iter().filter(|&&(a, p)| a != c && p == c).count() as f64;
            let fn_ = pairs.iter().filter(|&&(a, p)| a == c && p != c).count() as f64;
            if tp + fp > 0.0 {
                p_sum += tp / (tp + fp);
            }
            if tp + fn_ > 0.0 {
                r_sum += tp / (tp + fn_);
            }
        }
        let acc = pairs.iter().filter(|(a, p)| a == p).count() as f64 / pairs.len() as f64;
        (acc, p_sum / classes as f64, r_sum / classes as f64)
    }

    #[test]
    fn binary_example() {
        // actual 0: 3 right, 1 wrong; actual 1: 2 right, 2 wrong
        let pairs = [(0, 0), (0, 0), (0, 0), (0, 1), (1, 1), (1, 1), (1, 0), (1, 0)];
        let s = ConfusionMatrix::from_pairs(2, pairs).scores();
        assert!((s.accuracy - 5.0 / 8.0).abs() < 1e-15);
        let p = (3.0 / 5.0 + 2.0 / 3.0) / 2.0;
        let r = (3.0 / 4.0 + 2.0 / 4.0) / 2.0;
        assert!((s.precision - p).abs() < 1e-15);
        assert!((s.recall - r).abs() < 1e-15);
        assert!((s.f1 - 2.0 * p * r / (p + r)).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn matches_bruteforce(pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60)) {
            let s = ConfusionMatrix::from_pairs(3, pairs.iter().copied()).scores();
            let (a, p, r) = oracle(3, &pairs);
            prop_assert!((s.accuracy - a).abs() < 1e-12);
            prop_assert!((s.precision - p).abs() < 1e-12);
            prop_assert!((s.recall - r).abs() < 1e-12);
            if p > 0.0 && r > 0.0 {
                prop_assert!((s.f1 - 2.0 * p * r / (p + r)).abs() < 1e-12);
            }
            for v in [s.accuracy, s.precision, s.recall, s.f1] {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
