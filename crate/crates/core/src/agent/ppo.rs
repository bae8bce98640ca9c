//! Proximal policy optimization over a set of stopping environments.

use std::collections::VecDeque;

use log::debug;
use ndarray::{Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::env::{Action, EpisodicEnv};
use crate::error::{Error, Result};

use super::network::{softmax2, PolicyNetwork};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    pub epochs_per_update: usize,
    pub discount: f64,
    pub gae_lambda: f64,
    pub learning_rate: f64,
    pub hidden_width: usize,
    pub rollout_steps_per_env: usize,
    pub minibatch_size: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub clip_range: f64,
    pub max_grad_norm: f64,
    pub normalize_advantage: bool,
    /// Score tracked for early stopping and best-policy selection.
    pub early_stop_metric: EarlyStopMetric,
    /// Rollouts without improvement of the tracked score before stopping.
    pub early_stop_patience: usize,
    /// Environment steps of this run before stale rollouts start to count.
    pub early_stop_warmup_steps: usize,
    /// Completed episodes averaged for the rolling mean return.
    pub return_window: usize,
    pub improvement_tol: f64,
    pub max_env_steps: usize,
    pub seed: u64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            epochs_per_update: 10,
            discount: 0.99,
            gae_lambda: 0.95,
            learning_rate: 3e-4,
            hidden_width: 64,
            rollout_steps_per_env: 10,
            minibatch_size: 64,
            entropy_coef: 0.1,
            value_coef: 0.5,
            clip_range: 0.1,
            max_grad_norm: 0.5,
            normalize_advantage: true,
            early_stop_metric: EarlyStopMetric::GreedyEval,
            early_stop_patience: 10,
            early_stop_warmup_steps: 100_000,
            return_window: 100,
            improvement_tol: 1e-4,
            max_env_steps: 200_000,
            seed: 0,
        }
    }
}

impl TrainerConfig {
    /// Defaults for an environment without classifier estimates: longer
    /// rollouts and a smaller entropy bonus.
    pub fn without_classifier() -> Self {
        Self {
            rollout_steps_per_env: 100,
            entropy_coef: 0.001,
            ..Self::default()
        }
    }

    pub fn for_classifier(use_classifier: bool) -> Self {
        if use_classifier {
            Self::default()
        } else {
            Self::without_classifier()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive_counts = [
            self.epochs_per_update,
            self.hidden_width,
            self.rollout_steps_per_env,
            self.minibatch_size,
            self.early_stop_patience,
            self.return_window,
            self.max_env_steps,
        ];
        if positive_counts.contains(&0) {
            return Err(Error::invalid("trainer counts must be positive"));
        }
        let rates = [
            self.discount,
            self.learning_rate,
            self.clip_range,
            self.max_grad_norm,
        ];
        if rates.iter().any(|&v| !(v > 0.0 && v.is_finite())) || self.discount > 1.0 {
            return Err(Error::invalid("trainer rates must be positive and finite"));
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) || self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::invalid("invalid lambda or loss coefficients"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarlyStopMetric {
    /// Mean return of greedy episodes over every environment's evaluation
    /// targets, measured after each update. Falls back to the rolling
    /// return when the environments offer no evaluation episodes.
    GreedyEval,
    /// Rolling mean of the last `return_window` training episode returns.
    RollingReturn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActMode {
    Sample,
    Greedy,
}

/// Picks an action for one observation. Greedy ties go to STOP.
pub fn act<R: Rng + ?Sized>(
    policy: &PolicyNetwork,
    obs: &[f64],
    mode: ActMode,
    rng: &mut R,
) -> Result<Action> {
    if obs.len() != policy.obs_dim() {
        return Err(Error::Shape(format!(
            "observation has length {}, policy expects {}",
            obs.len(),
            policy.obs_dim()
        )));
    }
    let p = action_probabilities(policy, obs);
    Ok(match mode {
        ActMode::Greedy => {
            if p[0] >= p[1] {
                Action::Stop
            } else {
                Action::Continue
            }
        }
        ActMode::Sample => sample_action(p, rng),
    })
}

pub fn action_probabilities(policy: &PolicyNetwork, obs: &[f64]) -> [f64; 2] {
    let x = ArrayView1::from(obs).insert_axis(ndarray::Axis(0));
    let logits = policy.actor.forward(x);
    softmax2(logits[[0, 0]], logits[[0, 1]])
}

fn sample_action<R: Rng + ?Sized>(p: [f64; 2], rng: &mut R) -> Action {
    if rng.random::<f64>() < p[0] {
        Action::Stop
    } else {
        Action::Continue
    }
}

/// Generalized advantage estimates and the matching value targets for one
/// environment's rollout. `dones[t]` marks that step `t` ended an episode.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = last_value;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}

/// Training samples for one gradient step.
#[derive(Debug, Clone)]
pub struct Minibatch {
    pub obs: Array2<f64>,
    pub actions: Vec<usize>,
    pub old_log_probs: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossStats {
    pub total: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

/// Clipped-surrogate loss plus weighted value loss minus weighted entropy,
/// averaged over the minibatch, with its gradient.
pub fn ppo_loss(
    policy: &PolicyNetwork,
    mb: &Minibatch,
    cfg: &TrainerConfig,
) -> (LossStats, PolicyNetwork) {
    let n = mb.actions.len() as f64;
    let actor = policy.actor.forward_trace(mb.obs.view());
    let critic = policy.critic.forward_trace(mb.obs.view());
    let mut d_logits = Array2::<f64>::zeros(actor.output.raw_dim());
    let mut d_values = Array2::<f64>::zeros(critic.output.raw_dim());
    let mut stats = LossStats::default();
    let (lo, hi) = (1.0 - cfg.clip_range, 1.0 + cfg.clip_range);

    for i in 0..mb.actions.len() {
        let (z0, z1) = (actor.output[[i, 0]], actor.output[[i, 1]]);
        let p = softmax2(z0, z1);
        let logp = [p[0].ln(), p[1].ln()];
        let a = mb.actions[i];
        let adv = mb.advantages[i];
        let log_ratio = logp[a] - mb.old_log_probs[i];
        let ratio = log_ratio.exp();
        let unclipped = ratio * adv;
        let clipped = ratio.clamp(lo, hi) * adv;
        stats.policy_loss -= unclipped.min(clipped) / n;
        // d(-min)/d logp_a: the unclipped branch carries ratio * adv
        let d_logp = if unclipped <= clipped { -adv * ratio / n } else { 0.0 };
        if (ratio - 1.0).abs() > cfg.clip_range {
            stats.clip_fraction += 1.0 / n;
        }
        stats.approx_kl += ((ratio - 1.0) - log_ratio) / n;

        let entropy = -(p[0] * logp[0] + p[1] * logp[1]);
        stats.entropy += entropy / n;
        for k in 0..2 {
            let onehot = if k == a { 1.0 } else { 0.0 };
            // dH/dz_k = -p_k (log p_k + H)
            let d_ent = -p[k] * (logp[k] + entropy);
            d_logits[[i, k]] = d_logp * (onehot - p[k]) - cfg.entropy_coef * d_ent / n;
        }

        let err = critic.output[[i, 0]] - mb.returns[i];
        stats.value_loss += err * err / n;
        d_values[[i, 0]] = cfg.value_coef * 2.0 * err / n;
    }
    stats.total = stats.policy_loss + cfg.value_coef * stats.value_loss - cfg.entropy_coef * stats.entropy;

    let mut grads = policy.zeros_like();
    policy.actor.backward(&actor, d_logits, &mut grads.actor);
    policy.critic.backward(&critic, d_values, &mut grads.critic);
    (stats, grads)
}

/// Adam with bias correction over every parameter array of a network.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(policy: &PolicyNetwork, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = policy.param_slices().iter().map(|s| vec![0.0; s.len()]).collect();
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-5,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, policy: &mut PolicyNetwork, grads: &PolicyNetwork) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for (((p, g), m), v) in policy
            .param_slices_mut()
            .into_iter()
            .zip(grads.param_slices())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                p[i] -= self.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

fn clip_grad_norm(grads: &mut PolicyNetwork, max_norm: f64) -> f64 {
    let norm = grads
        .param_slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt();
    if norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for s in grads.param_slices_mut() {
            for g in s {
                *g *= scale;
            }
        }
    }
    norm
}

/// One row of the training log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RolloutLog {
    pub rollout: usize,
    pub env_steps: usize,
    pub episodes: usize,
    pub mean_return: f64,
    /// Greedy evaluation return after the update (NaN when not measured).
    pub eval_return: f64,
    /// Best tracked score so far.
    pub best_return: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EarlyStopping,
    StepBudget,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Policy at the best rolling mean return.
    pub policy: PolicyNetwork,
    pub last_policy: PolicyNetwork,
    pub log: Vec<RolloutLog>,
    /// Every completed episode's undiscounted return, in completion order.
    pub episode_returns: Vec<f64>,
    pub stop_reason: StopReason,
    pub rollouts: usize,
    pub env_steps: usize,
}

/// Where a (possibly resumed) run starts.
#[derive(Debug, Clone, Default)]
pub struct TrainStart {
    pub policy: Option<PolicyNetwork>,
    pub rollouts_done: usize,
    pub env_steps_done: usize,
}

struct Slot<'a, E> {
    env: &'a mut E,
    rng: ChaCha8Rng,
    obs: Vec<f64>,
    episode_return: f64,
}

struct EnvRollout {
    obs: Vec<Vec<f64>>,
    actions: Vec<usize>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    last_value: f64,
    finished: Vec<f64>,
}

fn collect<E: EpisodicEnv>(slot: &mut Slot<'_, E>, policy: &PolicyNetwork, steps: usize) -> Result<EnvRollout> {
    let mut r = EnvRollout {
        obs: Vec::with_capacity(steps),
        actions: Vec::with_capacity(steps),
        log_probs: Vec::with_capacity(steps),
        values: Vec::with_capacity(steps),
        rewards: Vec::with_capacity(steps),
        dones: Vec::with_capacity(steps),
        last_value: 0.0,
        finished: Vec::new(),
    };
    for _ in 0..steps {
        let x = ArrayView1::from(slot.obs.as_slice()).insert_axis(ndarray::Axis(0));
        let logits = policy.actor.forward(x);
        let value = policy.critic.forward(x)[[0, 0]];
        let p = softmax2(logits[[0, 0]], logits[[0, 1]]);
        let action = sample_action(p, &mut slot.rng);
        let (reward, next, done) = slot.env.step_episode(action)?;
        r.obs.push(std::mem::take(&mut slot.obs));
        r.actions.push(action.index());
        r.log_probs.push(p[action.index()].ln());
        r.values.push(value);
        r.rewards.push(reward);
        r.dones.push(done);
        slot.episode_return += reward;
        if done {
            r.finished.push(slot.episode_return);
            slot.episode_return = 0.0;
            slot.obs = slot.env.reset_episode(&mut slot.rng)?;
        } else {
            slot.obs = next;
        }
    }
    let x = ArrayView1::from(slot.obs.as_slice()).insert_axis(ndarray::Axis(0));
    r.last_value = policy.critic.forward(x)[[0, 0]];
    Ok(r)
}

/// Trains a policy on the given environments.
///
/// Each environment runs `rollout_steps_per_env` steps per rollout with its
/// own seeded generator, so results do not depend on thread scheduling.
/// Training ends when the rolling mean episode return has not improved for
/// `early_stop_patience` rollouts, or when the step budget is spent.
pub fn train<E: EpisodicEnv>(envs: &mut [E], cfg: &TrainerConfig, start: TrainStart) -> Result<TrainOutcome> {
    cfg.validate()?;
    if envs.is_empty() {
        return Err(Error::invalid("training needs at least one environment"));
    }
    let obs_dim = envs[0].obs_dim();
    if envs.iter().any(|e| e.obs_dim() != obs_dim) {
        return Err(Error::invalid("environments disagree on observation size"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut policy = match start.policy {
        Some(p) => {
            if p.obs_dim() != obs_dim {
                return Err(Error::Shape(format!(
                    "policy expects observations of length {}, environments produce {obs_dim}",
                    p.obs_dim()
                )));
            }
            p
        }
        None => PolicyNetwork::new(obs_dim, cfg.hidden_width, &mut rng),
    };
    let mut adam = Adam::new(&policy, cfg.learning_rate);

    let mut slots: Vec<Slot<'_, E>> = Vec::with_capacity(envs.len());
    for (i, env) in envs.iter_mut().enumerate() {
        let mut env_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        env_rng.set_stream(i as u64 + 1);
        let obs = env.reset_episode(&mut env_rng)?;
        slots.push(Slot {
            env,
            rng: env_rng,
            obs,
            episode_return: 0.0,
        });
    }

    let use_eval = cfg.early_stop_metric == EarlyStopMetric::GreedyEval
        && slots.iter().any(|s| s.env.eval_episodes() > 0);
    let mut window: VecDeque<f64> = VecDeque::with_capacity(cfg.return_window);
    let mut best_return = f64::NEG_INFINITY;
    let mut best_policy = policy.clone();
    let mut stale = 0usize;
    let mut log = Vec::new();
    let mut episode_returns = Vec::new();
    let mut env_steps = start.env_steps_done;
    let mut rollout = start.rollouts_done;
    let mut steps_this_run = 0usize;

    let stop_reason = loop {
        let rollouts: Vec<EnvRollout> = slots
            .par_iter_mut()
            .map(|slot| collect(slot, &policy, cfg.rollout_steps_per_env))
            .collect::<Result<_>>()?;
        rollout += 1;
        let steps = cfg.rollout_steps_per_env * slots.len();
        env_steps += steps;
        steps_this_run += steps;

        let mut obs_rows = Vec::with_capacity(steps);
        let mut actions = Vec::with_capacity(steps);
        let mut old_log_probs = Vec::with_capacity(steps);
        let mut advantages = Vec::with_capacity(steps);
        let mut returns = Vec::with_capacity(steps);
        let mut episodes = 0;
        for r in rollouts {
            let (adv, ret) = gae(&r.rewards, &r.values, &r.dones, r.last_value, cfg.discount, cfg.gae_lambda);
            for f in r.finished {
                episodes += 1;
                episode_returns.push(f);
                if window.len() == cfg.return_window {
                    window.pop_front();
                }
                window.push_back(f);
            }
            obs_rows.extend(r.obs);
            actions.extend(r.actions);
            old_log_probs.extend(r.log_probs);
            advantages.extend(adv);
            returns.extend(ret);
        }

        let mut totals = LossStats::default();
        let mut updates = 0usize;
        let mut order: Vec<usize> = (0..obs_rows.len()).collect();
        for _ in 0..cfg.epochs_per_update {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.minibatch_size) {
                let mb = gather(chunk, &obs_rows, &actions, &old_log_probs, &advantages, &returns, cfg.normalize_advantage);
                let (stats, mut grads) = ppo_loss(&policy, &mb, cfg);
                if !stats.total.is_finite() {
                    return Err(Error::Diverged {
                        rollout,
                        message: format!("non-finite loss {stats:?}"),
                    });
                }
                clip_grad_norm(&mut grads, cfg.max_grad_norm);
                adam.step(&mut policy, &grads);
                totals.policy_loss += stats.policy_loss;
                totals.value_loss += stats.value_loss;
                totals.entropy += stats.entropy;
                totals.approx_kl += stats.approx_kl;
                totals.clip_fraction += stats.clip_fraction;
                updates += 1;
            }
        }
        let u = updates.max(1) as f64;

        let mean_return = if window.is_empty() {
            f64::NAN
        } else {
            window.iter().sum::<f64>() / window.len() as f64
        };
        let eval_return = if use_eval {
            greedy_eval(&slots, &policy)?
        } else {
            f64::NAN
        };
        let score = if use_eval { eval_return } else { mean_return };
        if !score.is_nan() {
            if score > best_return + cfg.improvement_tol || best_return == f64::NEG_INFINITY {
                best_return = score;
                best_policy = policy.clone();
                stale = 0;
            } else if steps_this_run > cfg.early_stop_warmup_steps {
                stale += 1;
            }
        }
        let row = RolloutLog {
            rollout,
            env_steps,
            episodes,
            mean_return,
            eval_return,
            best_return,
            policy_loss: totals.policy_loss / u,
            value_loss: totals.value_loss / u,
            entropy: totals.entropy / u,
            approx_kl: totals.approx_kl / u,
            clip_fraction: totals.clip_fraction / u,
        };
        debug!("{row:?}");
        log.push(row);

        if stale >= cfg.early_stop_patience {
            break StopReason::EarlyStopping;
        }
        if steps_this_run >= cfg.max_env_steps {
            break StopReason::StepBudget;
        }
    };

    Ok(TrainOutcome {
        policy: best_policy,
        last_policy: policy,
        log,
        episode_returns,
        stop_reason,
        rollouts: rollout,
        env_steps,
    })
}

/// Mean greedy return over every evaluation episode of every environment.
fn greedy_eval<E: EpisodicEnv>(slots: &[Slot<'_, E>], policy: &PolicyNetwork) -> Result<f64> {
    let returns: Vec<Vec<f64>> = slots
        .par_iter()
        .map(|slot| {
            let mut decide = |obs: &[f64]| {
                let p = action_probabilities(policy, obs);
                Ok(if p[0] >= p[1] { Action::Stop } else { Action::Continue })
            };
            (0..slot.env.eval_episodes())
                .map(|k| slot.env.eval_return(k, &mut decide))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let all: Vec<f64> = returns.into_iter().flatten().collect();
    Ok(all.iter().sum::<f64>() / all.len().max(1) as f64)
}

fn gather(
    idx: &[usize],
    obs: &[Vec<f64>],
    actions: &[usize],
    log_probs: &[f64],
    advantages: &[f64],
    returns: &[f64],
    normalize: bool,
) -> Minibatch {
    let dim = obs[idx[0]].len();
    let mut x = Array2::zeros((idx.len(), dim));
    for (r, &i) in idx.iter().enumerate() {
        x.row_mut(r).assign(&ArrayView1::from(obs[i].as_slice()));
    }
    let mut adv: Vec<f64> = idx.iter().map(|&i| advantages[i]).collect();
    if normalize && adv.len() > 1 {
        normalize_advantages(&mut adv);
    }
    Minibatch {
        obs: x,
        actions: idx.iter().map(|&i| actions[i]).collect(),
        old_log_probs: idx.iter().map(|&i| log_probs[i]).collect(),
        advantages: adv,
        returns: idx.iter().map(|&i| returns[i]).collect(),
    }
}

/// Zero mean, unit (sample) standard deviation.
pub fn normalize_advantages(adv: &mut [f64]) {
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let std = var.sqrt();
    for a in adv {
        *a = (*a - mean) / (std + 1e-8);
    }
}
