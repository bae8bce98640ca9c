use ndarray::Array2;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grlstop::agent::{
    act, action_probabilities, normalize_advantages, ppo_loss, train, ActMode, EarlyStopMetric, Minibatch,
    PolicyNetwork, StopReason, TrainStart, TrainerConfig,
};
use grlstop::env::{Action, EpisodicEnv};

/// Two-step episodes: STOP at the first step pays 1, anything else pays 0.
#[derive(Clone)]
struct Toy {
    t: usize,
}

impl EpisodicEnv for Toy {
    fn obs_dim(&self) -> usize {
        2
    }

    fn reset_episode(&mut self, _rng: &mut dyn RngCore) -> grlstop::Result<Vec<f64>> {
        self.t = 0;
        Ok(vec![1.0, 0.0])
    }

    fn step_episode(&mut self, action: Action) -> grlstop::Result<(f64, Vec<f64>, bool)> {
        self.t += 1;
        Ok(match (action, self.t) {
            (Action::Stop, 1) => (1.0, vec![0.0, 0.0], true),
            (Action::Stop, _) => (0.0, vec![0.0, 0.0], true),
            (Action::Continue, 1) => (0.0, vec![0.0, 1.0], false),
            (Action::Continue, _) => (0.0, vec![0.0, 0.0], true),
        })
    }
}

/// Every episode pays nothing, so no rollout can improve on the first.
#[derive(Clone)]
struct Flat;

impl EpisodicEnv for Flat {
    fn obs_dim(&self) -> usize {
        3
    }

    fn reset_episode(&mut self, _rng: &mut dyn RngCore) -> grlstop::Result<Vec<f64>> {
        Ok(vec![0.5; 3])
    }

    fn step_episode(&mut self, _action: Action) -> grlstop::Result<(f64, Vec<f64>, bool)> {
        Ok((0.0, vec![0.5; 3], true))
    }
}

fn random_minibatch(policy: &PolicyNetwork, n: usize, rng: &mut ChaCha8Rng) -> Minibatch {
    let dim = policy.obs_dim();
    let obs = Array2::from_shape_fn((n, dim), |_| rng.random_range(-1.0..1.0));
    let actions: Vec<usize> = (0..n).map(|_| rng.random_range(0..2)).collect();
    // old log-probs close to the current ones so no sample sits on a clip kink
    let old_log_probs = (0..n)
        .map(|i| {
            let p = action_probabilities(policy, obs.row(i).as_slice().unwrap());
            p[actions[i]].ln() + rng.random_range(-0.03..0.03)
        })
        .collect();
    Minibatch {
        obs,
        actions,
        old_log_probs,
        advantages: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        returns: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    }
}

#[test]
fn ppo_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = TrainerConfig::default();
    for _ in 0..5 {
        let policy = PolicyNetwork::new(6, 4, &mut rng);
        let mb = random_minibatch(&policy, 16, &mut rng);
        let (_, grads) = ppo_loss(&policy, &mb, &cfg);
        let analytic: Vec<f64> = grads.param_slices().iter().flat_map(|s| s.iter().copied()).collect();
        let mut numeric = Vec::new();
        let h = 1e-6;
        let sizes: Vec<usize> = policy.param_slices().iter().map(|s| s.len()).collect();
        for (a, &len) in sizes.iter().enumerate() {
            for k in 0..len {
                let mut p = policy.clone();
                p.param_slices_mut()[a][k] += h;
                let up = ppo_loss(&p, &mb, &cfg).0.total;
                p.param_slices_mut()[a][k] -= 2.0 * h;
                let down = ppo_loss(&p, &mb, &cfg).0.total;
                numeric.push((up - down) / (2.0 * h));
            }
        }
        let diff: f64 = analytic.iter().zip(&numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(diff / norm < 1e-4, "relative gradient error {}", diff / norm);
    }
}

#[test]
fn advantage_normalization_ignores_positive_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let base: Vec<f64> = (0..50).map(|_| rng.random_range(-3.0..3.0)).collect();
    let mut a = base.clone();
    normalize_advantages(&mut a);
    for scale in [0.01, 7.0, 1e4] {
        let mut b: Vec<f64> = base.iter().map(|x| x * scale).collect();
        normalize_advantages(&mut b);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
        // the sign of each advantage, hence the preferred action, is kept
        assert!(base.iter().zip(&b).all(|(x, y)| x.signum() == y.signum() || x.abs() < 1e-9));
    }
}

#[test]
fn early_stop_after_patience_stale_rollouts() {
    for metric in [EarlyStopMetric::RollingReturn, EarlyStopMetric::GreedyEval] {
        let cfg = TrainerConfig {
            early_stop_metric: metric,
            early_stop_warmup_steps: 0,
            hidden_width: 8,
            ..TrainerConfig::default()
        };
        let mut envs = vec![Flat, Flat];
        let out = train(&mut envs, &cfg, TrainStart::default()).unwrap();
        assert_eq!(out.stop_reason, StopReason::EarlyStopping);
        assert_eq!(out.rollouts, 1 + cfg.early_stop_patience);
        assert_eq!(out.log.len(), out.rollouts);
    }
}

#[test]
fn warmup_delays_early_stopping() {
    let cfg = TrainerConfig {
        early_stop_metric: EarlyStopMetric::RollingReturn,
        early_stop_warmup_steps: 200,
        hidden_width: 8,
        ..TrainerConfig::default()
    };
    let mut envs = vec![Flat, Flat];
    let out = train(&mut envs, &cfg, TrainStart::default()).unwrap();
    // 20 steps per rollout: 10 rollouts of warmup, then 10 stale ones
    assert_eq!(out.stop_reason, StopReason::EarlyStopping);
    assert_eq!(out.rollouts, 10 + cfg.early_stop_patience);
}

#[test]
fn toy_policy_learns_to_stop_first() {
    let cfg = TrainerConfig {
        max_env_steps: 5_000,
        seed: 3,
        ..TrainerConfig::default()
    };
    let mut envs = vec![Toy { t: 0 }; 4];
    let out = train(&mut envs, &cfg, TrainStart::default()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    assert_eq!(act(&out.policy, &[1.0, 0.0], ActMode::Greedy, &mut rng).unwrap(), Action::Stop);
    let tail = &out.episode_returns[out.episode_returns.len() - 100..];
    assert!(tail.iter().sum::<f64>() / 100.0 >= 0.95);
}

#[test]
fn entropy_bonus_keeps_the_policy_less_certain() {
    let run = |entropy_coef: f64| {
        let cfg = TrainerConfig {
            max_env_steps: 3_000,
            entropy_coef,
            seed: 4,
            ..TrainerConfig::default()
        };
        let mut envs = vec![Toy { t: 0 }; 4];
        let out = train(&mut envs, &cfg, TrainStart::default()).unwrap();
        action_probabilities(&out.last_policy, &[1.0, 0.0])[0]
    };
    // the small default coefficient is indistinguishable from none here;
    // a large one visibly holds the STOP probability back
    let (none, some, lots) = (run(0.0), run(0.1), run(1.0));
    assert!(none > lots && some > lots, "{none} {some} {lots}");
}

#[test]
fn greedy_action_examples() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut policy = PolicyNetwork::new(3, 4, &mut rng);
    let last = policy.actor.layers.len() - 1;

    // equal logits: ties go to STOP
    policy.actor.layers[last].w.fill(0.0);
    policy.actor.layers[last].b.fill(0.0);
    assert_eq!(act(&policy, &[0.1, 0.2, 0.3], ActMode::Greedy, &mut rng).unwrap(), Action::Stop);

    // saturated logits still give a valid distribution and a clear choice
    policy.actor.layers[last].b[1] = 800.0;
    let p = action_probabilities(&policy, &[0.1, 0.2, 0.3]);
    assert!(p.iter().all(|x| x.is_finite()) && (p[0] + p[1] - 1.0).abs() < 1e-12);
    assert_eq!(act(&policy, &[0.1, 0.2, 0.3], ActMode::Greedy, &mut rng).unwrap(), Action::Continue);
    for _ in 0..100 {
        assert_eq!(act(&policy, &[0.1, 0.2, 0.3], ActMode::Sample, &mut rng).unwrap(), Action::Continue);
    }

    assert!(act(&policy, &[0.1, 0.2], ActMode::Greedy, &mut rng).is_err());
}

#[test]
fn sampling_is_deterministic_under_a_seed() {
    let policy = PolicyNetwork::new(3, 4, &mut ChaCha8Rng::seed_from_u64(6));
    let draw = |seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..200)
            .map(|i| act(&policy, &[i as f64 / 200.0, 0.5, 0.1], ActMode::Sample, &mut rng).unwrap())
            .collect::<Vec<_>>()
    };
    assert_eq!(draw(9), draw(9));
}

#[test]
fn training_is_deterministic_under_a_seed() {
    let run = || {
        let cfg = TrainerConfig {
            max_env_steps: 1_000,
            seed: 8,
            ..TrainerConfig::default()
        };
        let mut envs = vec![Toy { t: 0 }; 3];
        let out = train(&mut envs, &cfg, TrainStart::default()).unwrap();
        (out.episode_returns, out.policy.param_slices().concat())
    };
    assert_eq!(run(), run());
}
