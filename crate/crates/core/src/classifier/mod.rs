//! Relevance classifier run over the unexamined part of a ranking.
//!
//! Documents are featurized once per topic with TF-IDF over the whole
//! collection's text (no labels involved). After each examined batch a
//! cost-sensitive logistic regression is refit on the judged documents and
//! its hard labels are averaged per unexamined batch.

mod lbfgs;
mod logistic;
mod tfidf;

use crate::corpus::{BatchedRanking, RankedTopic};
use crate::error::{Error, Result};

pub use lbfgs::{minimize, LbfgsOptions, Minimum};
pub use logistic::{ClassWeights, FitOptions, Predictor, RelevanceModel, WeightedLogisticLoss};
pub use tfidf::{tokenize, SparseRow, TfidfModel};

/// TF-IDF model and feature rows for every document of a topic, in rank order.
#[derive(Debug, Clone)]
pub struct TopicFeatures {
    tfidf: TfidfModel,
    rows: Vec<SparseRow>,
}

impl TopicFeatures {
    pub fn from_topic(topic: &RankedTopic) -> Result<Self> {
        if !topic.has_text() {
            return Err(Error::invalid(format!(
                "topic `{}` has no document text to classify",
                topic.id()
            )));
        }
        let texts: Vec<&str> = topic
            .docs()
            .iter()
            .map(|d| d.text.as_deref().unwrap_or(""))
            .collect();
        let tfidf = TfidfModel::fit(&texts)?;
        let rows = texts.iter().map(|t| tfidf.transform(t)).collect();
        Ok(Self { tfidf, rows })
    }

    pub fn tfidf(&self) -> &TfidfModel {
        &self.tfidf
    }

    pub fn rows(&self) -> &[SparseRow] {
        &self.rows
    }

    /// Fits on the documents of batches `1..=examined`.
    pub fn fit_examined(
        &self,
        br: &BatchedRanking,
        examined: usize,
        opts: FitOptions,
        warm_start: Option<&Predictor>,
    ) -> Predictor {
        let end = br.end_rank(examined);
        let rows: Vec<&SparseRow> = self.rows[..end].iter().collect();
        let labels: Vec<bool> = br.topic().docs()[..end].iter().map(|d| d.relevant).collect();
        Predictor::fit(self.tfidf.dim(), &rows, &labels, opts, warm_start)
    }
}

/// Fraction of predicted-relevant documents in each batch `from_batch..=B`.
pub fn estimate_batches(
    predictor: &Predictor,
    features: &TopicFeatures,
    br: &BatchedRanking,
    from_batch: usize,
) -> Vec<f64> {
    (from_batch.max(1)..=br.num_batches())
        .map(|b| {
            let range = br.doc_range(b);
            let len = range.len() as f64;
            let hits = features.rows[range]
                .iter()
                .filter(|r| predictor.predict(r))
                .count();
            hits as f64 / len
        })
        .collect()
}

/// Classifier estimates for every examined count of one topic.
///
/// Entry `E - 1` holds the estimates for batches `E + 1..=B` produced by a
/// model fit on batches `1..=E` only. The sequence is a pure function of
/// the topic, so it is computed once and shared across episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateTrack {
    per_examined: Vec<Vec<f64>>,
}

impl EstimateTrack {
    pub fn build(br: &BatchedRanking, opts: FitOptions) -> Result<Self> {
        let features = TopicFeatures::from_topic(br.topic())?;
        let b = br.num_batches();
        let mut per_examined = Vec::with_capacity(b);
        let mut prev: Option<Predictor> = None;
        for e in 1..=b {
            if e == b {
                per_examined.push(Vec::new());
                break;
            }
            let p = features.fit_examined(br, e, opts, prev.as_ref());
            per_examined.push(estimate_batches(&p, &features, br, e + 1));
            prev = Some(p);
        }
        Ok(Self { per_examined })
    }

    pub fn num_batches(&self) -> usize {
        self.per_examined.len()
    }

    /// Estimates for batches `examined + 1..=B`.
    pub fn estimates(&self, examined: usize) -> &[f64] {
        &self.per_examined[examined - 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, Document, SyntheticConfig, TextModel};

    fn separable_topic(seed: u64) -> RankedTopic {
        let mut cfg = SyntheticConfig::new(1, 2000, 0.02, 33.0, seed);
        cfg.text = TextModel::separable();
        generate_synthetic(&cfg).unwrap().remove(0)
    }

    fn mae(est: &[f64], br: &BatchedRanking, from: usize) -> f64 {
        est.iter()
            .enumerate()
            .map(|(k, e)| (e - br.batch_proportion(from + k)).abs())
            .sum::<f64>()
            / est.len() as f64
    }

    #[test]
    fn all_relevant_prediction_gives_one() {
        let docs = (0..6)
            .map(|i| Document::new(format!("d{i}"), i < 3).with_text("aa bb"))
            .collect();
        let topic = RankedTopic::new("t", docs).unwrap();
        let br = BatchedRanking::new(topic, 3).unwrap();
        let f = TopicFeatures::from_topic(br.topic()).unwrap();
        assert_eq!(estimate_batches(&Predictor::Constant(true), &f, &br, 2), vec![1.0, 1.0]);
        assert_eq!(estimate_batches(&Predictor::Constant(false), &f, &br, 1), vec![0.0; 3]);
    }

    #[test]
    fn separable_topic_estimates_are_accurate() {
        let br = BatchedRanking::new(separable_topic(1), 100).unwrap();
        let f = TopicFeatures::from_topic(br.topic()).unwrap();
        for e in [5, 10, 30] {
            let p = f.fit_examined(&br, e, FitOptions::default(), None);
            let est = estimate_batches(&p, &f, &br, e + 1);
            let err = mae(&est, &br, e + 1);
            assert!(err <= 0.1, "E={e}: MAE {err}");
        }
    }

    #[test]
    fn error_does_not_grow_with_more_judgments() {
        for seed in [2, 3] {
            let br = BatchedRanking::new(separable_topic(seed), 100).unwrap();
            let track = EstimateTrack::build(&br, FitOptions::default()).unwrap();
            let mut best = f64::INFINITY;
            for e in 1..=50 {
                let err = mae(track.estimates(e), &br, e + 1);
                assert!(err <= best + 0.02, "seed {seed} E={e}: {err} vs {best}");
                best = best.min(err);
            }
        }
    }

    #[test]
    fn track_matches_direct_refit_shape() {
        let br = BatchedRanking::new(separable_topic(4), 100).unwrap();
        let track = EstimateTrack::build(&br, FitOptions::default()).unwrap();
        assert_eq!(track.num_batches(), 100);
        for e in 1..=100 {
            assert_eq!(track.estimates(e).len(), 100 - e);
            assert!(track.estimates(e).iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn topic_without_text_is_rejected() {
        let t = RankedTopic::from_labels("t", &[true, false]);
        assert!(TopicFeatures::from_topic(&t).is_err());
    }
}
