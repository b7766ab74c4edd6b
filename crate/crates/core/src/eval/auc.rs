use std::cmp::Ordering;
use std::fmt;

use crate::error::{Error, Result};

/// Parallel scores, binary labels and training-period item degrees.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
    pub degrees: Vec<usize>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>, degrees: Vec<usize>) -> Result<Self> {
        if scores.len() != labels.len() || scores.len() != degrees.len() {
            return Err(Error::shape("ScoredSet", (scores.len(), scores.len()), (labels.len(), degrees.len())));
        }
        if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
            return Err(Error::Domain(format!("non-finite score {s}")));
        }
        if let Some(y) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Domain(format!("label {y} is not binary")));
        }
        Ok(ScoredSet { scores, labels, degrees })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }

    /// Entries whose item degree is at most `k`.
    pub fn filter_degree(&self, k: usize) -> ScoredSet {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| self.degrees[i] <= k).collect();
        ScoredSet {
            scores: keep.iter().map(|&i| self.scores[i]).collect(),
            labels: keep.iter().map(|&i| self.labels[i]).collect(),
            degrees: keep.iter().map(|&i| self.degrees[i]).collect(),
        }
    }
}

/// Probability that a random positive outscores a random negative, ties counting one half.
///
/// Sort once, then walk tie groups in ascending score: a group with `p` positives and `q`
/// negatives above `below` negatives contributes `p·below + p·q/2`. Counting in doubled
/// integer units keeps the sum exact.
pub fn auc(set: &ScoredSet) -> Result<f64> {
    let positives = set.positives();
    let negatives = set.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::UndefinedAuc { positives, negatives });
    }
    let mut order: Vec<usize> = (0..set.len()).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).unwrap_or(Ordering::Equal));

    let mut twice_wins: u128 = 0;
    let mut below: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut p, mut q) = (0u128, 0u128);
        while j < order.len() && set.scores[order[j]] == set.scores[order[i]] {
            if set.labels[order[j]] == 1 {
                p += 1;
            } else {
                q += 1;
            }
            j += 1;
        }
        twice_wins += p * (2 * below + q);
        below += q;
        i = j;
    }
    Ok(twice_wins as f64 / (2 * positives as u128 * negatives as u128) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceAuc {
    Value(f64),
    /// The slice lacks positives or negatives.
    NotApplicable { positives: usize, negatives: usize },
}

impl SliceAuc {
    pub fn value(self) -> Option<f64> {
        match self {
            SliceAuc::Value(v) => Some(v),
            SliceAuc::NotApplicable { .. } => None,
        }
    }
}

impl fmt::Display for SliceAuc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SliceAuc::Value(v) => write!(f, "{v:.6}"),
            SliceAuc::NotApplicable { .. } => f.write_str("n/a"),
        }
    }
}

/// AUC over items with at most `k` training interactions; `None` means no threshold.
pub fn longtail_auc(set: &ScoredSet, k: Option<usize>) -> SliceAuc {
    let filtered;
    let subset = match k {
        Some(k) => {
            filtered = set.filter_degree(k);
            &filtered
        }
        None => set,
    };
    match auc(subset) {
        Ok(v) => SliceAuc::Value(v),
        Err(Error::UndefinedAuc { positives, negatives }) => SliceAuc::NotApplicable { positives, negatives },
        Err(_) => unreachable!("auc only fails on an empty class"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(scores: &[f64], labels: &[u8]) -> ScoredSet {
        ScoredSet::new(scores.to_vec(), labels.to_vec(), vec![0; scores.len()]).unwrap()
    }

    fn brute_force(s: &ScoredSet) -> f64 {
        let mut total = 0.0;
        let mut pairs = 0.0;
        for i in 0..s.len() {
            for j in 0..s.len() {
                if s.labels[i] == 1 && s.labels[j] == 0 {
                    pairs += 1.0;
                    total += match s.scores[i].partial_cmp(&s.scores[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        total / pairs
    }

    #[test]
    fn worked_examples() {
        assert_eq!(auc(&set(&[0.9, 0.1], &[1, 0])).unwrap(), 1.0);
        assert_eq!(auc(&set(&[0.3; 4], &[1, 0, 1, 0])).unwrap(), 0.5);
        assert_eq!(auc(&set(&[0.8, 0.5, 0.5, 0.2], &[1, 1, 0, 0])).unwrap(), 0.875);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc(&set(&[0.1, 0.2], &[1, 1])),
            Err(Error::UndefinedAuc { positives: 2, negatives: 0 })
        ));
    }

    #[test]
    fn random_scores_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let scores: Vec<f64> = (0..10_000).map(|_| rng.gen()).collect();
        let labels: Vec<u8> = (0..10_000).map(|_| rng.gen_range(0..2)).collect();
        let a = auc(&set(&scores, &labels)).unwrap();
        assert!((a - 0.5).abs() < 0.05, "{a}");
    }

    #[test]
    fn longtail_cases() {
        let base = set(&[0.9, 0.4, 0.6, 0.1], &[1, 0, 1, 0]);
        assert_eq!(longtail_auc(&base, Some(3)), SliceAuc::Value(auc(&base).unwrap()));
        let mixed = ScoredSet::new(vec![0.9, 0.4, 0.6, 0.1], vec![1, 0, 1, 0], vec![10, 1, 2, 50]).unwrap();
        // keeps entries 1 and 2: one negative at 0.4, one positive at 0.6
        assert_eq!(longtail_auc(&mixed, Some(3)), SliceAuc::Value(1.0));
        let no_pos = ScoredSet::new(vec![0.9, 0.4], vec![1, 0], vec![10, 1]).unwrap();
        assert!(matches!(longtail_auc(&no_pos, Some(3)), SliceAuc::NotApplicable { positives: 0, .. }));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(ScoredSet::new(vec![f64::NAN], vec![1], vec![0]).is_err());
        assert!(ScoredSet::new(vec![0.5], vec![2], vec![0]).is_err());
        assert!(ScoredSet::new(vec![0.5], vec![1], vec![]).is_err());
    }

    fn scored() -> impl Strategy<Value = ScoredSet> {
        (2usize..120).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..8, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0usize..12, n),
            )
                .prop_map(|(s, mut y, d)| {
                    y[0] = 1;
                    y[1] = 0;
                    ScoredSet::new(s.into_iter().map(|v| v as f64 / 8.0).collect(), y, d).unwrap()
                })
        })
    }

    proptest! {
        #[test]
        fn equals_brute_force(s in scored()) {
            prop_assert_eq!(auc(&s).unwrap(), brute_force(&s));
        }

        #[test]
        fn monotone_transform_invariant(s in scored()) {
            let mut t = s.clone();
            t.scores = s.scores.iter().map(|x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(auc(&s).unwrap(), auc(&t).unwrap());
        }

        #[test]
        fn label_flip_complements(s in scored()) {
            let mut t = s.clone();
            t.labels = s.labels.iter().map(|y| 1 - y).collect();
            prop_assert!((auc(&t).unwrap() - (1.0 - auc(&s).unwrap())).abs() < 1e-12);
        }

        #[test]
        fn slice_matches_filtered_brute_force(s in scored(), k in 0usize..12) {
            let f = s.filter_degree(k);
            match longtail_auc(&s, Some(k)) {
                SliceAuc::Value(v) => prop_assert_eq!(v, brute_force(&f)),
                SliceAuc::NotApplicable { .. } => prop_assert!(f.positives() == 0 || f.positives() == f.len()),
            }
        }
    }
}
