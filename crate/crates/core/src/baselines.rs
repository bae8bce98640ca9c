//! Reference stopping rules: the oracle, the knee method and a sampling
//! target method.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RankedTopic, TargetSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopStatus {
    Stopped,
    /// The rule never fired; the whole ranking was examined.
    Exhausted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StopDecision {
    pub method: String,
    pub stop_rank: usize,
    pub stop_batch: Option<usize>,
    pub examined_count: usize,
    pub status: StopStatus,
}

impl StopDecision {
    pub fn at_rank(method: impl Into<String>, stop_rank: usize) -> Self {
        Self {
            method: method.into(),
            stop_rank,
            stop_batch: None,
            examined_count: stop_rank,
            status: StopStatus::Stopped,
        }
    }
}

/// Stops at the rank of the `ceil(target * R)`-th relevant document.
pub fn oracle_stop(topic: &RankedTopic, spec: TargetSpec) -> Result<StopDecision> {
    topic.require_relevant()?;
    let k = spec.required_count(topic.num_relevant()).max(1);
    let rank = topic.relevant_ranks()[k - 1];
    Ok(StopDecision::at_rank("oracle", rank))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KneeConfig {
    /// Minimum slope ratio at the knee.
    pub rho: f64,
    /// Ranks between successive knee checks.
    pub step: usize,
}

impl Default for KneeConfig {
    fn default() -> Self {
        Self { rho: 6.0, step: 1 }
    }
}

/// Knee of the gain curve `gain[0..=s]` (with `gain[0] = 0`): the rank
/// furthest above the chord from the origin to `(s, gain[s])`.
pub fn find_knee(gain: &[usize], s: usize) -> usize {
    let gs = gain[s] as i128;
    let s_i = s as i128;
    let mut best = 1;
    let mut best_score = i128::MIN;
    for r in 1..=s {
        // proportional to the signed distance above the chord
        let score = gain[r] as i128 * s_i - r as i128 * gs;
        if score > best_score {
            best_score = score;
            best = r;
        }
    }
    best
}

/// Slope before the knee over add-one smoothed slope after it.
pub fn slope_ratio(gain: &[usize], knee: usize, s: usize) -> f64 {
    let before = gain[knee] as f64 / knee as f64;
    let after = (gain[s] - gain[knee]) as f64 + 1.0;
    before * (s - knee) as f64 / after
}

/// Walks prefixes `judged_prefix, judged_prefix + step, ...` and stops at
/// the first whose knee has slope ratio at least `rho`.
pub fn knee_stop(topic: &RankedTopic, judged_prefix: usize, cfg: &KneeConfig) -> Result<StopDecision> {
    let n = topic.len();
    if judged_prefix == 0 || judged_prefix > n {
        return Err(Error::invalid(format!(
            "judged prefix {judged_prefix} outside 1..={n}"
        )));
    }
    if topic.relevant_within(judged_prefix) == 0 {
        return Err(Error::invalid("judged prefix contains no relevant document"));
    }
    if cfg.step == 0 || !(cfg.rho > 0.0) {
        return Err(Error::invalid("knee step and rho must be positive"));
    }
    let mut gain = Vec::with_capacity(n + 1);
    gain.push(0usize);
    for rel in topic.labels() {
        gain.push(gain.last().copied().unwrap_or(0) + rel as usize);
    }
    let mut s = judged_prefix;
    while s <= n {
        let knee = find_knee(&gain, s);
        if knee < s && slope_ratio(&gain, knee, s) >= cfg.rho {
            return Ok(StopDecision::at_rank("knee", s));
        }
        s += cfg.step;
    }
    Ok(StopDecision {
        status: StopStatus::Exhausted,
        ..StopDecision::at_rank("knee", n)
    })
}

/// Samples documents uniformly without replacement until `k` relevant ones
/// are found, then reviews the ranking down to the deepest of them.
///
/// `examined_count` counts the union of the sample and the reviewed prefix.
pub fn target_method_stop(topic: &RankedTopic, k: usize, seed: u64) -> Result<StopDecision> {
    let n = topic.len();
    if k == 0 {
        return Err(Error::invalid("target method needs k >= 1"));
    }
    if n == 0 {
        return Err(Error::EmptyTopic(topic.id().to_string()));
    }
    if topic.num_relevant() < k {
        return Ok(StopDecision {
            status: StopStatus::Exhausted,
            ..StopDecision::at_rank("tm", n)
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let docs = topic.docs();
    let mut found = 0;
    let mut deepest = 0;
    let mut sampled = 0;
    for &i in &order {
        sampled += 1;
        if docs[i].relevant {
            found += 1;
            deepest = deepest.max(i + 1);
            if found == k {
                break;
            }
        }
    }
    let sampled_beyond = order[..sampled].iter().filter(|&&i| i + 1 > deepest).count();
    Ok(StopDecision {
        method: "tm".into(),
        stop_rank: deepest,
        stop_batch: None,
        examined_count: deepest + sampled_beyond,
        status: StopStatus::Stopped,
    })
}
