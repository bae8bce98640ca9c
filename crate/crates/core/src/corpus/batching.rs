use crate::error::{Error, Result};

use super::{RankedTopic, TargetSpec};

/// A ranking cut into contiguous review batches.
///
/// Every batch but the last holds `ceil(N / B)` documents; the last one
/// takes whatever remains. The number of batches actually produced (the
/// effective `B`) can therefore be smaller than the requested count, e.g.
/// `N = 1005, B = 100` gives 92 batches.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchedRanking {
    topic: RankedTopic,
    requested_batches: usize,
    batch_size: usize,
    batch_bounds: Vec<(usize, usize)>,
    batch_rel_counts: Vec<usize>,
    cum_rel: Vec<usize>,
}

impl BatchedRanking {
    pub fn new(topic: RankedTopic, batches: usize) -> Result<Self> {
        let n = topic.len();
        if n == 0 {
            return Err(Error::EmptyTopic(topic.id().to_string()));
        }
        if batches == 0 {
            return Err(Error::invalid("batch count must be at least 1"));
        }
        let batch_size = n.div_ceil(batches);
        let mut batch_bounds = Vec::new();
        let mut batch_rel_counts = Vec::new();
        let mut cum_rel = Vec::new();
        let mut running = 0;
        let mut start = 1;
        while start <= n {
            let end = (start + batch_size - 1).min(n);
            let rel = topic.docs()[start - 1..end]
                .iter()
                .filter(|d| d.relevant)
                .count();
            running += rel;
            batch_bounds.push((start, end));
            batch_rel_counts.push(rel);
            cum_rel.push(running);
            start = end + 1;
        }
        Ok(Self {
            topic,
            requested_batches: batches,
            batch_size,
            batch_bounds,
            batch_rel_counts,
            cum_rel,
        })
    }

    pub fn topic(&self) -> &RankedTopic {
        &self.topic
    }

    /// Effective batch count.
    pub fn num_batches(&self) -> usize {
        self.batch_bounds.len()
    }

    pub fn requested_batches(&self) -> usize {
        self.requested_batches
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    /// Inclusive 1-based `(start_rank, end_rank)` of each batch.
    pub fn batch_bounds(&self) -> &[(usize, usize)] {
        &self.batch_bounds
    }

    pub fn batch_rel_counts(&self) -> &[usize] {
        &self.batch_rel_counts
    }

    pub fn cum_rel(&self) -> &[usize] {
        &self.cum_rel
    }

    /// Number of documents in 1-based batch `batch`.
    pub fn batch_len(&self, batch: usize) -> usize {
        let (s, e) = self.batch_bounds[batch - 1];
        e - s + 1
    }

    /// Proportion of relevant documents in 1-based batch `batch`.
    pub fn batch_proportion(&self, batch: usize) -> f64 {
        self.batch_rel_counts[batch - 1] as f64 / self.batch_len(batch) as f64
    }

    /// Last rank covered by 1-based batch `batch`.
    pub fn end_rank(&self, batch: usize) -> usize {
        self.batch_bounds[batch - 1].1
    }

    /// Zero-based document index range of 1-based batch `batch`.
    pub fn doc_range(&self, batch: usize) -> std::ops::Range<usize> {
        let (s, e) = self.batch_bounds[batch - 1];
        s - 1..e
    }
}

/// The first (1-based) batch after which the target recall is reached.
pub fn target_batch(br: &BatchedRanking, spec: TargetSpec) -> Result<usize> {
    let total = br.topic().num_relevant();
    br.topic().require_relevant()?;
    let idx = br
        .cum_rel()
        .iter()
        .position(|&found| spec.is_met(found, total))
        .expect("the full ranking reaches recall 1");
    Ok(idx + 1)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn topic(n: usize, rel: &[usize]) -> RankedTopic {
        let mut labels = vec![false; n];
        for &r in rel {
            labels[r - 1] = true;
        }
        RankedTopic::from_labels("t", &labels)
    }

    #[test]
    fn exact_division() {
        let br = BatchedRanking::new(topic(1000, &[1]), 100).unwrap();
        assert_eq!(br.num_batches(), 100);
        assert!(br.batch_bounds().iter().all(|(s, e)| e - s + 1 == 10));
    }

    #[test]
    fn uneven_division_uses_ceil_size() {
        let br = BatchedRanking::new(topic(1005, &[1]), 100).unwrap();
        // brute force: walk ranks in blocks of ceil(1005 / 100) = 11
        let mut expected = Vec::new();
        let mut s = 1;
        while s <= 1005 {
            expected.push((s, (s + 10).min(1005)));
            s += 11;
        }
        assert_eq!(br.batch_bounds(), expected.as_slice());
        assert_eq!(br.num_batches(), 92);
        assert_eq!(br.batch_len(92), 4);
        assert_eq!(br.end_rank(92), 1005);
        let total: usize = (1..=92).map(|b| br.batch_len(b)).sum();
        assert_eq!(total, 1005);
    }

    #[test]
    fn fewer_docs_than_batches() {
        let br = BatchedRanking::new(topic(5, &[2]), 100).unwrap();
        assert_eq!(br.num_batches(), 5);
        assert_eq!(br.requested_batches(), 100);
        assert!((1..=5).all(|b| br.batch_len(b) == 1));
    }

    #[test]
    fn empty_topic_rejected() {
        let t = RankedTopic::new("t", vec![]).unwrap();
        assert!(matches!(BatchedRanking::new(t, 10), Err(Error::EmptyTopic(_))));
    }

    #[test]
    fn target_batch_examples() {
        // cum_rel = [2, 4, 5, 5]
        let t = topic(8, &[1, 2, 3, 4, 5]);
        let br = BatchedRanking::new(t, 4).unwrap();
        assert_eq!(br.cum_rel(), &[2, 4, 5, 5]);
        assert_eq!(target_batch(&br, TargetSpec::new(0.8).unwrap()).unwrap(), 2);
        assert_eq!(target_batch(&br, TargetSpec::new(1.0).unwrap()).unwrap(), 3);
    }

    #[test]
    fn target_batch_requires_relevant() {
        let br = BatchedRanking::new(topic(10, &[]), 5).unwrap();
        assert!(matches!(
            target_batch(&br, TargetSpec::new(0.5).unwrap()),
            Err(Error::NoRelevant(_))
        ));
    }

    proptest! {
        #[test]
        fn partition_invariant(labels in prop::collection::vec(any::<bool>(), 1..400), b in 1usize..150) {
            let t = RankedTopic::from_labels("t", &labels);
            let br = BatchedRanking::new(t, b).unwrap();
            let mut next = 1;
            let mut running = 0;
            for (i, &(s, e)) in br.batch_bounds().iter().enumerate() {
                prop_assert_eq!(s, next);
                prop_assert!(e >= s);
                next = e + 1;
                running += br.batch_rel_counts()[i];
                prop_assert_eq!(br.cum_rel()[i], running);
            }
            prop_assert_eq!(next, labels.len() + 1);
            prop_assert_eq!(*br.cum_rel().last().unwrap(), br.topic().num_relevant());
            prop_assert!(br.num_batches() <= b);
        }

        #[test]
        fn target_batch_is_minimal(labels in prop::collection::vec(any::<bool>(), 1..300), b in 1usize..60) {
            prop_assume!(labels.iter().any(|&l| l));
            let t = RankedTopic::from_labels("t", &labels);
            let total = t.num_relevant();
            let br = BatchedRanking::new(t, b).unwrap();
            for tenth in 1..=10 {
                let spec = TargetSpec::new(tenth as f64 / 10.0).unwrap();
                let got = target_batch(&br, spec).unwrap();
                // linear scan with a recount from the raw labels
                let scan = (1..=br.num_batches())
                    .find(|&i| {
                        let found = labels[..br.end_rank(i)].iter().filter(|&&l| l).count();
                        found as f64 * 10.0 >= tenth as f64 * total as f64 - 1e-9
                    })
                    .unwrap();
                prop_assert_eq!(got, scan);
            }
        }
    }
}
