//! Stopping rules for technology-assisted review.
//!
//! A ranking is reviewed batch by batch; after each batch a policy trained
//! with PPO decides whether to stop. The policy sees the relevance rate of
//! every examined batch, a classifier's estimate for every unexamined
//! batch, how far it has read and the target recall. Its reward is shaped
//! so that one model serves any target recall, and two exponents trade
//! reaching the target against reviewing fewer documents.

pub mod agent;
pub mod baselines;
pub mod classifier;
pub mod cli;
pub mod corpus;
pub mod env;
pub mod error;
pub mod eval;
pub mod reward;

pub use error::{Error, Result};
