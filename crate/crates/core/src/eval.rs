//! Stopping metrics: recall, reliability, cost and cost difference to the
//! oracle, per topic and aggregated, plus CSV output.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::agent::{act, ActMode, PolicyNetwork};
use crate::baselines::{oracle_stop, StopDecision, StopStatus};
use crate::corpus::{recall_curve, BatchedRanking, RankedTopic, TargetSpec};
use crate::env::{stopping_rank, StoppingEnv};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopicResult {
    pub topic_id: String,
    pub method: String,
    pub target: TargetSpec,
    pub stop_rank: usize,
    pub collection_size: usize,
    pub relevant_found: usize,
    pub num_relevant: usize,
    pub recall: f64,
    pub reliability: u8,
    pub cost: f64,
    pub cost_diff: f64,
}

/// Scores one stopping decision against the topic's labels.
pub fn score_topic(topic: &RankedTopic, spec: TargetSpec, decision: &StopDecision) -> Result<TopicResult> {
    topic.require_relevant()?;
    let n = topic.len();
    if decision.stop_rank == 0 || decision.stop_rank > n {
        return Err(Error::invalid(format!(
            "stop rank {} outside 1..={n} for topic `{}`",
            decision.stop_rank,
            topic.id()
        )));
    }
    let total = topic.num_relevant();
    let found = topic.relevant_within(decision.stop_rank);
    let oracle = oracle_stop(topic, spec)?;
    let cost = decision.stop_rank as f64 / n as f64;
    let oracle_cost = oracle.stop_rank as f64 / n as f64;
    Ok(TopicResult {
        topic_id: topic.id().to_string(),
        method: decision.method.clone(),
        target: spec,
        stop_rank: decision.stop_rank,
        collection_size: n,
        relevant_found: found,
        num_relevant: total,
        recall: found as f64 / total as f64,
        reliability: spec.is_met(found, total) as u8,
        cost,
        cost_diff: cost - oracle_cost,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub target: TargetSpec,
    pub topics: usize,
    pub recall: f64,
    pub reliability: f64,
    pub cost: f64,
    pub cost_diff: f64,
}

/// Unweighted means per `(method, target)`, sorted by method then target.
pub fn aggregate(results: &[TopicResult]) -> Result<Vec<SummaryRow>> {
    if results.is_empty() {
        return Err(Error::invalid("nothing to aggregate"));
    }
    if let Some(r) = results.iter().find(|r| r.collection_size == 0) {
        return Err(Error::invalid(format!(
            "result for topic `{}` has unknown collection size",
            r.topic_id
        )));
    }
    let mut groups: BTreeMap<(&str, TargetSpec), Vec<&TopicResult>> = BTreeMap::new();
    for r in results {
        groups.entry((r.method.as_str(), r.target)).or_default().push(r);
    }
    Ok(groups
        .into_iter()
        .map(|((method, target), rows)| {
            let k = rows.len() as f64;
            let mean = |f: fn(&TopicResult) -> f64| rows.iter().map(|r| f(r)).sum::<f64>() / k;
            SummaryRow {
                method: method.to_string(),
                target,
                topics: rows.len(),
                recall: mean(|r| r.recall),
                reliability: mean(|r| r.reliability as f64),
                cost: mean(|r| r.cost),
                cost_diff: mean(|r| r.cost_diff),
            }
        })
        .collect())
}

/// Sorts rows by `(method, target, topic_id)`.
pub fn sort_results(results: &mut [TopicResult]) {
    results.sort_by(|a, b| {
        (a.method.as_str(), a.target, a.topic_id.as_str()).cmp(&(b.method.as_str(), b.target, b.topic_id.as_str()))
    });
}

pub const RESULTS_HEADER: &str = "topic_id,method,target,stop_rank,recall,reliability,cost,cost_diff";
pub const SUMMARY_HEADER: &str = "method,target,topics,recall,reliability,cost,cost_diff";

pub fn write_results_csv(results: &[TopicResult], path: &Path) -> Result<()> {
    let mut rows = results.to_vec();
    sort_results(&mut rows);
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{RESULTS_HEADER}")?;
    for r in &rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.topic_id,
            r.method,
            r.target.value(),
            r.stop_rank,
            r.recall,
            r.reliability,
            r.cost,
            r.cost_diff
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{SUMMARY_HEADER}")?;
    for r in rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            r.method,
            r.target.value(),
            r.topics,
            r.recall,
            r.reliability,
            r.cost,
            r.cost_diff
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `rank,recall` export of a topic's recall curve.
pub fn write_curve_csv(topic: &RankedTopic, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "rank,recall")?;
    for (rank, recall) in recall_curve(topic)? {
        writeln!(w, "{rank},{recall}")?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the policy greedily for one target and reports where it stopped.
pub fn policy_stop(
    policy: &PolicyNetwork,
    env: &mut StoppingEnv,
    target: TargetSpec,
    method: &str,
) -> Result<StopDecision> {
    // greedy selection never draws from the generator
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut obs = env.reset_with_target(target, false)?.observation.clone();
    loop {
        let action = act(policy, &obs, ActMode::Greedy, &mut rng)?;
        let out = env.step(action)?;
        if out.done {
            let br: &BatchedRanking = env.ranking();
            let rank = stopping_rank(&out.next_state, br)?;
            let batch = out.next_state.stop_batch;
            let exhausted = batch == Some(br.num_batches());
            return Ok(StopDecision {
                method: method.to_string(),
                stop_rank: rank,
                stop_batch: batch,
                examined_count: rank,
                status: if exhausted { StopStatus::Exhausted } else { StopStatus::Stopped },
            });
        }
        obs = out.next_state.observation;
    }
}
