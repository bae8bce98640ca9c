use crate::error::Result;

use super::RankedTopic;

/// `(rank, recall)` for every rank of the topic.
pub fn recall_curve(topic: &RankedTopic) -> Result<Vec<(usize, f64)>> {
    topic.require_relevant()?;
    let total = topic.num_relevant() as f64;
    let mut found = 0usize;
    Ok(topic
        .labels()
        .enumerate()
        .map(|(i, rel)| {
            found += rel as usize;
            (i + 1, found as f64 / total)
        })
        .collect())
}

/// Area under the recall curve, normalized by collection size.
pub fn aurc(topic: &RankedTopic) -> Result<f64> {
    let curve = recall_curve(topic)?;
    Ok(curve.iter().map(|(_, r)| r).sum::<f64>() / curve.len() as f64)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn topic(labels: &[u8]) -> RankedTopic {
        let l: Vec<bool> = labels.iter().map(|&x| x == 1).collect();
        RankedTopic::from_labels("t", &l)
    }

    #[test]
    fn curve_examples() {
        let c: Vec<f64> = recall_curve(&topic(&[1, 1, 0, 0]))
            .unwrap()
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        assert_eq!(c, vec![0.5, 1.0, 1.0, 1.0]);

        let all = recall_curve(&topic(&[1, 1, 1, 1, 1])).unwrap();
        for (rank, r) in all {
            assert_eq!(r, rank as f64 / 5.0);
        }
    }

    #[test]
    fn aurc_examples() {
        assert_eq!(aurc(&topic(&[1, 1, 0, 0])).unwrap(), 0.875);
        let mut best = vec![0u8; 10];
        best[0] = 1;
        assert_eq!(aurc(&topic(&best)).unwrap(), 1.0);
        let mut worst = vec![0u8; 10];
        worst[9] = 1;
        assert!((aurc(&topic(&worst)).unwrap() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn no_relevant_is_error() {
        assert!(recall_curve(&topic(&[0, 0])).is_err());
        assert!(aurc(&topic(&[0, 0])).is_err());
    }

    proptest! {
        #[test]
        fn curve_matches_recount(labels in prop::collection::vec(any::<bool>(), 1..200)) {
            prop_assume!(labels.iter().any(|&l| l));
            let t = RankedTopic::from_labels("t", &labels);
            let total = labels.iter().filter(|&&l| l).count() as f64;
            let curve = recall_curve(&t).unwrap();
            let mut prev = 0.0;
            for (rank, r) in &curve {
                let recount = labels[..*rank].iter().filter(|&&l| l).count() as f64 / total;
                prop_assert_eq!(*r, recount);
                prop_assert!(*r >= prev);
                prev = *r;
            }
            prop_assert_eq!(curve.last().unwrap().1, 1.0);
            let a = aurc(&t).unwrap();
            prop_assert!(a > 0.0 && a <= 1.0);
        }
    }
}
