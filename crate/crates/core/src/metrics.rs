//! Recall@k and average precision over a ranked list of paper ids.
//!
//! Relevant papers that do not occur in the ranking are left out of the
//! denominator; a ranking containing none of them is an error, and callers
//! exclude that proposal from corpus-level means.

use std::collections::BTreeSet;

use crate::{Error, Result};

fn relevant_in_ranking<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> usize {
    ranked.iter().filter(|id| relevant.contains(id.as_ref())).count()
}

/// `|top-k ∩ relevant| / |relevant ∩ ranking|`.
pub fn recall_at_k<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>, k: usize) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    let denom = relevant_in_ranking(ranked, relevant);
    if denom == 0 {
        return Err(Error::NoRelevantInCorpus);
    }
    let hits = relevant_in_ranking(&ranked[..k.min(ranked.len())], relevant);
    Ok(hits as f64 / denom as f64)
}

/// Mean over relevant papers of precision at each one's rank in the full ranking.
pub fn average_precision<S: AsRef<str>>(ranked: &[S], relevant: &BTreeSet<String>) -> Result<f64> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, id) in ranked.iter().enumerate() {
        if relevant.contains(id.as_ref()) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(Error::NoRelevantInCorpus);
    }
    Ok(sum / hits as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(ids: &[&str]) -> BTreeSet<String> {
        ids.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn recall_hand_cases() {
        let ranking = ["A", "X", "B", "Y"];
        assert_eq!(recall_at_k(&ranking, &set(&["A", "B"]), 1).unwrap(), 0.5);
        assert_eq!(recall_at_k(&ranking, &set(&["A", "B"]), 3).unwrap(), 1.0);
        assert_eq!(recall_at_k(&ranking, &set(&["B"]), 2).unwrap(), 0.0);
        assert_eq!(recall_at_k(&ranking, &set(&["A"]), 100).unwrap(), 1.0);
        // relevant paper outside the ranking leaves the denominator
        assert_eq!(recall_at_k(&ranking, &set(&["A", "Z"]), 1).unwrap(), 1.0);
        assert!(recall_at_k(&ranking, &set(&["A"]), 0).is_err());
        assert!(matches!(recall_at_k(&ranking, &set(&["Z"]), 1), Err(Error::NoRelevantInCorpus)));
    }

    #[test]
    fn ap_hand_cases() {
        let ap = average_precision(&["A", "X", "B"], &set(&["A", "B"])).unwrap();
        assert_eq!(ap, (1.0 + 2.0 / 3.0) / 2.0);
        assert!((ap - 5.0 / 6.0).abs() < 1e-15);
        assert_eq!(average_precision(&["A", "B", "X"], &set(&["A", "B"])).unwrap(), 1.0);
        assert_eq!(average_precision(&["X", "A"], &set(&["A"])).unwrap(), 0.5);
        assert!(average_precision(&["X"], &set(&["A"])).is_err());
    }

    proptest! {
        #[test]
        fn recall_is_monotone_in_k(perm in Just((0..8).collect::<Vec<u32>>()).prop_shuffle(), rel in proptest::collection::btree_set(0u32..8, 1..8)) {
            let ranked: Vec<String> = perm.iter().map(|i| i.to_string()).collect();
            let relevant: BTreeSet<String> = rel.iter().map(|i| i.to_string()).collect();
            let mut prev = 0.0;
            for k in 1..=8 {
                let r = recall_at_k(&ranked, &relevant, k).unwrap();
                prop_assert!(r >= prev);
                prev = r;
            }
            prop_assert_eq!(prev, 1.0);
        }

        #[test]
        fn ap_is_one_iff_relevant_lead(perm in Just((0..8).collect::<Vec<u32>>()).prop_shuffle(), rel in proptest::collection::btree_set(0u32..8, 1..8)) {
            let ranked: Vec<String> = perm.iter().map(|i| i.to_string()).collect();
            let relevant: BTreeSet<String> = rel.iter().map(|i| i.to_string()).collect();
            let ap = average_precision(&ranked, &relevant).unwrap();
            let leads = ranked[..relevant.len()].iter().all(|id| relevant.contains(id));
            prop_assert_eq!(ap == 1.0, leads);
            prop_assert!((0.0..=1.0).contains(&ap));
        }
    }
}
