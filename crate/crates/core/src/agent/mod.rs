//! Actor-critic stopping policy and its PPO trainer.

mod checkpoint;
mod network;
mod ppo;

pub use checkpoint::{
    decode, decode_header, encode, load_checkpoint, save_checkpoint, CheckpointHeader, ParamSpec, PolicyCheckpoint,
    FORMAT_VERSION,
};
pub use network::{softmax2, Dense, Mlp, PolicyNetwork};
pub use ppo::{
    act, action_probabilities, gae, normalize_advantages, ppo_loss, train, ActMode, Adam, EarlyStopMetric, LossStats,
    Minibatch, RolloutLog, StopReason, TrainOutcome, TrainStart, TrainerConfig,
};
