//! Synthetic rankings with a controllable quality knob.
//!
//! Every document receives a sort key in `[0, 1]`. Non-relevant keys are
//! uniform; relevant keys follow an exponential law with rate `quality`
//! truncated to `[0, 1]`, so a larger rate pushes relevant documents towards
//! the top of the ranking. `quality = 0` is a random ranking and
//! `quality = inf` places every relevant document ahead of the rest.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Document, RankedTopic};

/// Token generator for synthetic document text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TextModel {
    pub doc_len: usize,
    pub signal_vocab: usize,
    pub background_vocab: usize,
    /// Probability that a token of a relevant document comes from the signal pool.
    pub signal_rate_relevant: f64,
    /// Same for non-relevant documents.
    pub signal_rate_nonrelevant: f64,
}

impl Default for TextModel {
    fn default() -> Self {
        Self {
            doc_len: 40,
            signal_vocab: 30,
            background_vocab: 600,
            signal_rate_relevant: 0.3,
            signal_rate_nonrelevant: 0.02,
        }
    }
}

impl TextModel {
    /// Relevant and non-relevant documents share no signal tokens.
    pub fn separable() -> Self {
        Self {
            signal_rate_nonrelevant: 0.0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub topics: usize,
    pub docs: usize,
    pub prevalence: f64,
    /// Decay rate of the relevant-document key distribution; `inf` is a perfect ranking.
    pub quality: f64,
    pub seed: u64,
    #[serde(default = "default_prefix")]
    pub topic_prefix: String,
    #[serde(default)]
    pub text: TextModel,
}

fn default_prefix() -> String {
    "syn".to_string()
}

impl SyntheticConfig {
    pub fn new(topics: usize, docs: usize, prevalence: f64, quality: f64, seed: u64) -> Self {
        Self {
            topics,
            docs,
            prevalence,
            quality,
            seed,
            topic_prefix: default_prefix(),
            text: TextModel::default(),
        }
    }

    pub fn num_relevant(&self) -> usize {
        (self.prevalence * self.docs as f64).round() as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.prevalence > 0.0 && self.prevalence < 1.0) {
            return Err(Error::invalid(format!(
                "prevalence must lie in (0, 1), got {}",
                self.prevalence
            )));
        }
        if self.prevalence * (self.docs as f64) < 1.0 {
            return Err(Error::invalid(format!(
                "prevalence {} over {} documents yields no relevant document",
                self.prevalence, self.docs
            )));
        }
        if self.quality.is_nan() || self.quality < 0.0 {
            return Err(Error::invalid(format!(
                "quality must be non-negative, got {}",
                self.quality
            )));
        }
        let t = &self.text;
        if t.doc_len == 0 || t.signal_vocab == 0 || t.background_vocab == 0 {
            return Err(Error::invalid("text model sizes must be positive"));
        }
        for r in [t.signal_rate_relevant, t.signal_rate_nonrelevant] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::invalid(format!("signal rate {r} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Generates `cfg.topics` rankings. Topic `i` depends only on `(seed, i)`.
pub fn generate_synthetic(cfg: &SyntheticConfig) -> Result<Vec<RankedTopic>> {
    cfg.validate()?;
    (0..cfg.topics).map(|i| generate_topic(cfg, i)).collect()
}

fn generate_topic(cfg: &SyntheticConfig, index: usize) -> Result<RankedTopic> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let topic_id = format!("{}{:03}", cfg.topic_prefix, index + 1);
    let n = cfg.docs;
    let n_rel = cfg.num_relevant();

    let mut keyed: Vec<(f64, u64, usize)> = (0..n)
        .map(|i| {
            let key = if i < n_rel {
                truncated_exponential(&mut rng, cfg.quality)
            } else {
                rng.random::<f64>()
            };
            (key, rng.random::<u64>(), i)
        })
        .collect();
    keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let docs = keyed
        .into_iter()
        .map(|(_, _, i)| {
            let relevant = i < n_rel;
            let text = synth_text(&mut rng, &cfg.text, relevant);
            Document::new(format!("{topic_id}-{:05}", i + 1), relevant).with_text(text)
        })
        .collect();
    RankedTopic::new(topic_id, docs)
}

fn truncated_exponential<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    if rate.is_infinite() {
        return 0.0;
    }
    let u: f64 = rng.random();
    if rate == 0.0 {
        return u;
    }
    // inverse CDF of Exp(rate) conditioned on [0, 1]
    -(u * (-rate).exp_m1()).ln_1p() / rate
}

fn synth_text<R: Rng>(rng: &mut R, model: &TextModel, relevant: bool) -> String {
    let rate = if relevant {
        model.signal_rate_relevant
    } else {
        model.signal_rate_nonrelevant
    };
    let mut out = String::with_capacity(model.doc_len * 6);
    for k in 0..model.doc_len {
        if k > 0 {
            out.push(' ');
        }
        if rng.random::<f64>() < rate {
            out.push_str(&format!("sig{}", rng.random_range(0..model.signal_vocab)));
        } else {
            out.push_str(&format!("bg{}", rng.random_range(0..model.background_vocab)));
        }
    }
    out
}

/// Mean normalized key of a relevant document at the given decay rate.
fn mean_relevant_key(quality: f64) -> f64 {
    if quality.is_infinite() {
        0.0
    } else if quality < 1e-6 {
        0.5 - quality / 12.0
    } else {
        1.0 / quality - 1.0 / quality.exp_m1()
    }
}

/// Large-sample expectation of a synthetic topic's AURC.
///
/// A relevant document with key `x` lands at rank about
/// `1 + (N - R) x + (R - 1) F(x)`, and `AURC = 1 - (E[rank] - 1) / N`.
pub fn expected_aurc(quality: f64, prevalence: f64, docs: usize) -> f64 {
    let n = docs as f64;
    let r = (prevalence * n).round().max(1.0);
    let mu = mean_relevant_key(quality);
    let spread = if quality.is_infinite() { 0.0 } else { 0.5 };
    1.0 - ((n - r) * mu + (r - 1.0) * spread) / n
}

/// Decay rate whose expected AURC equals `target`, found by bisection.
pub fn quality_for_aurc(target: f64, prevalence: f64, docs: usize) -> Result<f64> {
    let lo_val = expected_aurc(0.0, prevalence, docs);
    let hi_val = expected_aurc(f64::INFINITY, prevalence, docs);
    if !(target > lo_val && target < hi_val) {
        return Err(Error::invalid(format!(
            "AURC {target} is outside the attainable range ({lo_val:.4}, {hi_val:.4})"
        )));
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while expected_aurc(hi, prevalence, docs) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if expected_aurc(mid, prevalence, docs) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::aurc;

    fn mean_aurc(cfg: &SyntheticConfig) -> f64 {
        let topics = generate_synthetic(cfg).unwrap();
        topics.iter().map(|t| aurc(t).unwrap()).sum::<f64>() / topics.len() as f64
    }

    #[test]
    fn relevant_count_and_determinism() {
        let cfg = SyntheticConfig::new(3, 500, 0.02, 10.0, 7);
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        for t in &a {
            assert_eq!(t.len(), 500);
            assert_eq!(t.num_relevant(), 10);
            assert!(t.docs().iter().all(|d| d.text.is_some()));
        }
        let other = generate_synthetic(&SyntheticConfig::new(3, 500, 0.02, 10.0, 8)).unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn perfect_quality_puts_relevant_first() {
        let cfg = SyntheticConfig::new(4, 300, 0.05, f64::INFINITY, 1);
        for t in generate_synthetic(&cfg).unwrap() {
            let r = t.num_relevant();
            assert_eq!(t.relevant_ranks(), (1..=r).collect::<Vec<_>>());
            // best possible for this (N, R): mean over ranks of min(r, R) / R
            let best = (1..=300).map(|k| k.min(r) as f64 / r as f64).sum::<f64>() / 300.0;
            assert!((aurc(&t).unwrap() - best).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_quality_is_a_random_ranking() {
        // For a uniformly random ranking E[AURC] = (N + 1) / (2N) exactly,
        // independent of prevalence; Monte-Carlo over 1000 topics.
        let cfg = SyntheticConfig::new(1000, 200, 0.05, 0.0, 11);
        let got = mean_aurc(&cfg);
        let expected = 201.0 / 400.0;
        // sd of one topic's AURC is about 0.289 / sqrt(10); over 1000 topics ~0.003
        assert!((got - expected).abs() < 0.01, "mean AURC {got}");
    }

    #[test]
    fn expected_aurc_tracks_monte_carlo() {
        for q in [0.0, 3.0, 8.0, 14.0, 33.0] {
            let cfg = SyntheticConfig::new(200, 2000, 0.02, q, 5);
            let got = mean_aurc(&cfg);
            let want = expected_aurc(q, 0.02, 2000);
            assert!((got - want).abs() < 0.01, "q={q}: {got} vs {want}");
        }
    }

    #[test]
    fn quality_inverse_round_trips() {
        for target in [0.87, 0.92, 0.96] {
            let q = quality_for_aurc(target, 0.02, 2000).unwrap();
            assert!((expected_aurc(q, 0.02, 2000) - target).abs() < 1e-9);
        }
        assert!(quality_for_aurc(0.3, 0.02, 2000).is_err());
    }

    #[test]
    fn aurc_increases_with_quality_over_seed_ensembles() {
        let mut prev = 0.0;
        for q in [0.0, 2.0, 5.0, 10.0, 20.0, 40.0] {
            let cfg = SyntheticConfig::new(100, 1000, 0.02, q, 3);
            let a = mean_aurc(&cfg);
            assert!(a > prev, "quality {q}: {a} <= {prev}");
            prev = a;
        }
    }

    #[test]
    fn too_few_relevant_is_error() {
        assert!(generate_synthetic(&SyntheticConfig::new(1, 50, 0.01, 1.0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticConfig::new(1, 50, 1.5, 1.0, 0)).is_err());
        assert!(generate_synthetic(&SyntheticConfig::new(1, 50, 0.1, -1.0, 0)).is_err());
    }
}
