//! Rankings, relevance judgments and the batch view the stopping
//! environment works on.

mod batching;
mod curve;
mod synthetic;
mod trec;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use batching::{target_batch, BatchedRanking};
pub use curve::{aurc, recall_curve};
pub use synthetic::{expected_aurc, generate_synthetic, quality_for_aurc, SyntheticConfig, TextModel};
pub use trec::{
    attach_texts, load_collection, load_run_and_qrels, load_texts, write_collection, write_qrels,
    write_run, write_texts, QRELS_FILE, RUN_FILE, TEXT_FILE,
};

/// One judged document at a fixed position of a ranking.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub relevant: bool,
    pub text: Option<String>,
}

impl Document {
    pub fn new(id: impl Into<String>, relevant: bool) -> Self {
        Self {
            id: id.into(),
            relevant,
            text: None,
        }
    }

    pub fn with_text(mut self, text: impl Into<String>) -> Self {
        self.text = Some(text.into());
        self
    }
}

/// A topic's ranking, rank 1 first, with simulated reviewer judgments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedTopic {
    topic_id: String,
    docs: Vec<Document>,
    num_relevant: usize,
}

impl RankedTopic {
    pub fn new(topic_id: impl Into<String>, docs: Vec<Document>) -> Result<Self> {
        let topic_id = topic_id.into();
        let mut seen = HashSet::with_capacity(docs.len());
        for doc in &docs {
            if !seen.insert(doc.id.as_str()) {
                return Err(Error::DuplicateDocument {
                    topic_id,
                    doc_id: doc.id.clone(),
                });
            }
        }
        let num_relevant = docs.iter().filter(|d| d.relevant).count();
        Ok(Self {
            topic_id,
            docs,
            num_relevant,
        })
    }

    /// Builds a topic from relevance flags alone, naming documents `d1`, `d2`, ...
    pub fn from_labels(topic_id: impl Into<String>, labels: &[bool]) -> Self {
        let docs = labels
            .iter()
            .enumerate()
            .map(|(i, &rel)| Document::new(format!("d{}", i + 1), rel))
            .collect();
        Self::new(topic_id, docs).expect("generated ids are unique")
    }

    pub fn id(&self) -> &str {
        &self.topic_id
    }

    pub fn docs(&self) -> &[Document] {
        &self.docs
    }

    /// Collection size `N`.
    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn num_relevant(&self) -> usize {
        self.num_relevant
    }

    pub fn labels(&self) -> impl Iterator<Item = bool> + '_ {
        self.docs.iter().map(|d| d.relevant)
    }

    pub fn has_text(&self) -> bool {
        self.docs.iter().any(|d| d.text.is_some())
    }

    /// 1-based ranks of the relevant documents, ascending.
    pub fn relevant_ranks(&self) -> Vec<usize> {
        self.docs
            .iter()
            .enumerate()
            .filter(|(_, d)| d.relevant)
            .map(|(i, _)| i + 1)
            .collect()
    }

    /// Relevant documents among ranks `1..=rank`.
    pub fn relevant_within(&self, rank: usize) -> usize {
        self.docs[..rank.min(self.docs.len())]
            .iter()
            .filter(|d| d.relevant)
            .count()
    }

    pub(crate) fn require_relevant(&self) -> Result<()> {
        if self.num_relevant == 0 {
            Err(Error::NoRelevant(self.topic_id.clone()))
        } else {
            Ok(())
        }
    }
}

const TARGET_SCALE: u64 = 1_000_000;

/// A target recall in `(0, 1]`.
///
/// Stored as an integer number of millionths so that recall comparisons
/// are exact: `6/7` meets `0.857` but not `0.858`, and `7/10` meets `0.7`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TargetSpec {
    millionths: u64,
}

impl TargetSpec {
    pub fn new(target_recall: f64) -> Result<Self> {
        if !(target_recall > 0.0 && target_recall <= 1.0) {
            return Err(Error::invalid(format!(
                "target recall must lie in (0, 1], got {target_recall}"
            )));
        }
        let millionths = (target_recall * TARGET_SCALE as f64).round() as u64;
        if millionths == 0 {
            return Err(Error::invalid(format!(
                "target recall {target_recall} is below the supported resolution"
            )));
        }
        Ok(Self { millionths })
    }

    pub fn value(&self) -> f64 {
        self.millionths as f64 / TARGET_SCALE as f64
    }

    /// `found / total >= target`, compared over a common denominator.
    pub fn is_met(&self, found: usize, total: usize) -> bool {
        (found as u128) * (TARGET_SCALE as u128) >= (self.millionths as u128) * (total as u128)
    }

    /// Smallest `k` with `k / total >= target`.
    pub fn required_count(&self, total: usize) -> usize {
        let num = (self.millionths as u128) * (total as u128);
        num.div_ceil(TARGET_SCALE as u128) as usize
    }
}

impl std::fmt::Display for TargetSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.value())
    }
}

impl Serialize for TargetSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_f64(self.value())
    }
}

impl<'de> Deserialize<'de> for TargetSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = f64::deserialize(d)?;
        TargetSpec::new(v).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicate_ids_rejected() {
        let docs = vec![Document::new("a", true), Document::new("a", false)];
        assert!(matches!(
            RankedTopic::new("t", docs),
            Err(Error::DuplicateDocument { .. })
        ));
    }

    #[test]
    fn num_relevant_is_cached_count() {
        let t = RankedTopic::from_labels("t", &[true, false, true, false]);
        assert_eq!(t.num_relevant(), 2);
        assert_eq!(t.relevant_ranks(), vec![1, 3]);
        assert_eq!(t.relevant_within(2), 1);
    }

    #[test]
    fn target_comparisons_are_exact() {
        let t = TargetSpec::new(0.7).unwrap();
        assert!(t.is_met(7, 10));
        assert!(!t.is_met(6, 10));
        assert_eq!(t.required_count(10), 7);
        let t = TargetSpec::new(0.8).unwrap();
        assert_eq!(t.required_count(7), 6);
        assert!(t.is_met(6, 7));
        assert!(!t.is_met(5, 7));
        assert_eq!(TargetSpec::new(1.0).unwrap().required_count(13), 13);
    }

    #[test]
    fn target_range_checked() {
        assert!(TargetSpec::new(0.0).is_err());
        assert!(TargetSpec::new(1.01).is_err());
        assert!(TargetSpec::new(f64::NAN).is_err());
        assert!(TargetSpec::new(1.0).is_ok());
    }
}
