//! The batch-review stopping environment.
//!
//! State `S_E` means batches `1..=E` have been judged. The observation has
//! `B + 2` entries: the relevant proportion of each examined batch, a
//! classifier estimate (or `-1` without a classifier) for each unexamined
//! batch, `E / B`, and the target recall. Either action taken at `S_E`
//! earns `step_reward(E)`, and the forced transition into `S_B` also
//! carries `step_reward(B)`, so an episode that stops after batch `i`
//! returns exactly `cumulative_reward(i)`.

use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::classifier::{EstimateTrack, FitOptions};
use crate::corpus::{target_batch, BatchedRanking, TargetSpec};
use crate::error::{Error, Result};
use crate::reward::{Objective, RewardParams};

/// Value used for unexamined batches when the classifier is off.
pub const DUMMY_ESTIMATE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Stop,
    Continue,
}

impl Action {
    pub fn index(self) -> usize {
        match self {
            Action::Stop => 0,
            Action::Continue => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Action::Stop
        } else {
            Action::Continue
        }
    }
}

/// How each episode picks its target recall.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetSampler {
    Fixed(TargetSpec),
    Uniform(Vec<TargetSpec>),
}

impl TargetSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> TargetSpec {
        match self {
            TargetSampler::Fixed(t) => *t,
            TargetSampler::Uniform(ts) => ts[rng.random_range(0..ts.len())],
        }
    }

    pub fn targets(&self) -> Vec<TargetSpec> {
        match self {
            TargetSampler::Fixed(t) => vec![*t],
            TargetSampler::Uniform(ts) => ts.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub batches: usize,
    pub objective: Objective,
    pub use_classifier: bool,
    pub targets: TargetSampler,
}

impl EnvConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batches < 2 {
            return Err(Error::invalid("environment needs at least 2 batches"));
        }
        if let TargetSampler::Uniform(ts) = &self.targets {
            if ts.is_empty() {
                return Err(Error::invalid("target set is empty"));
            }
        }
        self.objective.validate()
    }

    pub fn obs_dim(&self) -> usize {
        self.batches + 2
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub observation: Vec<f64>,
    /// Batches examined so far (`E`).
    pub examined: usize,
    pub target: TargetSpec,
    pub terminal: bool,
    pub stop_batch: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub next_state: EnvState,
    pub done: bool,
}

/// Minimal episodic interface driven by the trainer.
pub trait EpisodicEnv: Send + Sync {
    fn obs_dim(&self) -> usize;
    /// Starts a new episode, returning the first observation.
    fn reset_episode(&mut self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>>;
    /// Returns `(reward, next observation, done)`.
    fn step_episode(&mut self, action: Action) -> Result<(f64, Vec<f64>, bool)>;

    /// Number of fixed evaluation episodes this environment offers.
    fn eval_episodes(&self) -> usize {
        0
    }

    /// Plays evaluation episode `k` with the given decision rule and returns
    /// its return, leaving any running training episode untouched.
    fn eval_return(&self, k: usize, _decide: &mut dyn FnMut(&[f64]) -> Result<Action>) -> Result<f64> {
        Err(Error::invalid(format!("no evaluation episode {k}")))
    }
}

/// One topic's stopping environment.
#[derive(Debug, Clone)]
pub struct StoppingEnv {
    cfg: EnvConfig,
    ranking: Arc<BatchedRanking>,
    estimates: Option<Arc<EstimateTrack>>,
    state: Option<EnvState>,
    reward: Option<RewardParams>,
}

impl StoppingEnv {
    /// `estimates` must be present iff the classifier is enabled; see
    /// [`StoppingEnv::build`] to compute it.
    pub fn new(
        cfg: EnvConfig,
        ranking: Arc<BatchedRanking>,
        estimates: Option<Arc<EstimateTrack>>,
    ) -> Result<Self> {
        cfg.validate()?;
        if ranking.num_batches() != cfg.batches {
            return Err(Error::BatchMismatch {
                expected: cfg.batches,
                found: ranking.num_batches(),
            });
        }
        match (&estimates, cfg.use_classifier) {
            (Some(track), true) if track.num_batches() != cfg.batches => {
                return Err(Error::BatchMismatch {
                    expected: cfg.batches,
                    found: track.num_batches(),
                })
            }
            (None, true) => return Err(Error::invalid("classifier enabled but no estimates given")),
            _ => {}
        }
        let estimates = if cfg.use_classifier { estimates } else { None };
        Ok(Self {
            cfg,
            ranking,
            estimates,
            state: None,
            reward: None,
        })
    }

    /// Batches the ranking and, if needed, runs the classifier over it.
    pub fn build(cfg: EnvConfig, ranking: Arc<BatchedRanking>) -> Result<Self> {
        let estimates = if cfg.use_classifier {
            Some(Arc::new(EstimateTrack::build(&ranking, FitOptions::default())?))
        } else {
            None
        };
        Self::new(cfg, ranking, estimates)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn ranking(&self) -> &BatchedRanking {
        &self.ranking
    }

    pub fn state(&self) -> Option<&EnvState> {
        self.state.as_ref()
    }

    /// Target batch of the current episode, when the topic has relevant documents.
    pub fn target_batch(&self) -> Option<usize> {
        self.reward.map(|r| r.target_batch())
    }

    /// Starts an episode with a sampled target. Training episodes need the
    /// target batch, so the topic must contain relevant documents.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<&EnvState> {
        let target = self.cfg.targets.sample(rng);
        self.reset_with_target(target, true)
    }

    /// Starts an episode with a given target. With `training = false` a
    /// topic without relevant documents is allowed and rewards are zero.
    pub fn reset_with_target(&mut self, target: TargetSpec, training: bool) -> Result<&EnvState> {
        self.reward = if self.ranking.topic().num_relevant() > 0 {
            let t = target_batch(&self.ranking, target)?;
            Some(RewardParams::new(self.cfg.objective, self.cfg.batches, t)?)
        } else if training {
            return Err(Error::NoRelevant(self.ranking.topic().id().to_string()));
        } else {
            None
        };
        let state = EnvState {
            observation: self.observe(1, target),
            examined: 1,
            target,
            terminal: false,
            stop_batch: None,
        };
        Ok(self.state.insert(state))
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        let state = self.state.as_mut().ok_or(Error::NotReset)?;
        if state.terminal {
            return Err(Error::EpisodeFinished);
        }
        let e = state.examined;
        let mut reward = self.reward.map_or(0.0, |r| r.step_reward(e));
        let b = self.cfg.batches;
        match action {
            Action::Stop => {
                state.terminal = true;
                state.stop_batch = Some(e);
            }
            Action::Continue => {
                let next = e + 1;
                let target = state.target;
                let observation = observe(&self.cfg, &self.ranking, self.estimates.as_deref(), next, target);
                let state = self.state.as_mut().expect("checked above");
                state.examined = next;
                state.observation = observation;
                if next == b {
                    // S_B allows no action, so its reward arrives with the transition into it
                    reward += self.reward.map_or(0.0, |r| r.step_reward(b));
                    state.terminal = true;
                    state.stop_batch = Some(b);
                }
            }
        }
        let next_state = self.state.clone().expect("checked above");
        Ok(StepOutcome {
            reward,
            done: next_state.terminal,
            next_state,
        })
    }

    fn observe(&self, examined: usize, target: TargetSpec) -> Vec<f64> {
        observe(&self.cfg, &self.ranking, self.estimates.as_deref(), examined, target)
    }
}

fn observe(
    cfg: &EnvConfig,
    br: &BatchedRanking,
    estimates: Option<&EstimateTrack>,
    examined: usize,
    target: TargetSpec,
) -> Vec<f64> {
    let b = cfg.batches;
    let mut obs = Vec::with_capacity(b + 2);
    obs.extend((1..=examined).map(|j| br.batch_proportion(j)));
    match estimates {
        Some(track) => obs.extend_from_slice(track.estimates(examined)),
        None => obs.resize(b, DUMMY_ESTIMATE),
    }
    debug_assert_eq!(obs.len(), b);
    obs.push(examined as f64 / b as f64);
    obs.push(target.value());
    obs
}

/// Last rank of the batch an episode stopped at.
pub fn stopping_rank(state: &EnvState, br: &BatchedRanking) -> Result<usize> {
    match (state.terminal, state.stop_batch) {
        (true, Some(b)) => Ok(br.end_rank(b)),
        _ => Err(Error::EpisodeRunning),
    }
}

impl EpisodicEnv for StoppingEnv {
    fn obs_dim(&self) -> usize {
        self.cfg.obs_dim()
    }

    fn reset_episode(&mut self, rng: &mut dyn rand::RngCore) -> Result<Vec<f64>> {
        Ok(self.reset(rng)?.observation.clone())
    }

    fn step_episode(&mut self, action: Action) -> Result<(f64, Vec<f64>, bool)> {
        let out = self.step(action)?;
        Ok((out.reward, out.next_state.observation, out.done))
    }

    /// One episode per configured target.
    fn eval_episodes(&self) -> usize {
        self.cfg.targets.targets().len()
    }

    fn eval_return(&self, k: usize, decide: &mut dyn FnMut(&[f64]) -> Result<Action>) -> Result<f64> {
        let targets = self.cfg.targets.targets();
        let target = *targets
            .get(k)
            .ok_or_else(|| Error::invalid(format!("no evaluation episode {k}")))?;
        let mut env = StoppingEnv {
            cfg: self.cfg.clone(),
            ranking: Arc::clone(&self.ranking),
            estimates: self.estimates.clone(),
            state: None,
            reward: None,
        };
        let mut obs = env.reset_with_target(target, true)?.observation.clone();
        let mut total = 0.0;
        loop {
            let out = env.step(decide(&obs)?)?;
            total += out.reward;
            if out.done {
                return Ok(total);
            }
            obs = out.next_state.observation;
        }
    }
}
