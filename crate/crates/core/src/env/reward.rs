//! Rewards and episode termination.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::nmi;

use super::state::{Action, GlobalState};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardConfig {
    /// Weight of the episode's final immediate reward.
    pub delta: f64,
    pub max_steps: usize,
}

impl RewardConfig {
    pub fn new(delta: f64, max_steps: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&delta) {
            return Err(Error::Config(format!("delta must lie in [0, 1], got {delta}")));
        }
        if max_steps == 0 {
            return Err(Error::Config("max_steps must be >= 1".into()));
        }
        Ok(Self { delta, max_steps })
    }

    /// Weight of the future-maximum term; `beta + delta = 1`.
    pub fn beta(&self) -> f64 {
        1.0 - self.delta
    }
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            delta: 0.2,
            max_steps: 30,
        }
    }
}

/// NMI between a clustering restricted to the labeled points and their labels.
pub fn labeled_nmi(assignment: &[i64], labeled: &[usize], truth: &[i64]) -> Result<f64> {
    if labeled.is_empty() {
        return Err(Error::InvalidArgument("labeled subset is empty".into()));
    }
    let pred: Vec<i64> = labeled.iter().map(|&i| assignment[i]).collect();
    nmi(&pred, truth)
}

/// `r_i = beta * max(imm[i..]) + delta * imm[last]`.
pub fn episode_rewards(immediate: &[f64], delta: f64) -> Vec<f64> {
    let Some(&last) = immediate.last() else {
        return Vec::new();
    };
    let beta = 1.0 - delta;
    let mut future_max = f64::NEG_INFINITY;
    let mut out = vec![0.0; immediate.len()];
    for (i, &r) in immediate.iter().enumerate().rev() {
        future_max = future_max.max(r);
        out[i] = beta * future_max + delta * last;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StopReason {
    /// A parameter was pushed past its bound.
    Bounds,
    /// The step limit was reached.
    Timeout,
    /// The policy chose STOP at step 2 or later.
    Action,
    /// The agent's clustering-round budget ran out.
    Budget,
}

/// Termination test after step `step` (1-based) produced `next`.
pub fn check_termination(next: &GlobalState, step: usize, action: Action, max_steps: usize) -> Option<StopReason> {
    if next.min_boundary_distance() < 0.0 {
        Some(StopReason::Bounds)
    } else if step >= max_steps {
        Some(StopReason::Timeout)
    } else if action == Action::Stop && step >= 2 {
        Some(StopReason::Action)
    } else {
        None
    }
}
