//! Twin-critic actor-critic learner over the discrete search actions.
//!
//! The actor emits one logit per action and the executed action is the
//! argmax. Critics score a state together with a one-hot action. For the
//! actor update the one-hot is relaxed to `softmax(logits)` so the critic's
//! action gradient can flow back into the actor.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::nn::{Adam, Mlp};

use super::replay::{ReplayBuffer, Transition};
use super::state::Action;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Td3Config {
    pub hidden: usize,
    pub gamma: f64,
    pub tau: f64,
    pub batch_size: usize,
    pub policy_delay: usize,
    pub learning_rate: f64,
    pub target_noise: f64,
    pub noise_clip: f64,
    pub buffer_capacity: usize,
}

impl Default for Td3Config {
    fn default() -> Self {
        Self {
            hidden: 256,
            gamma: 0.1,
            tau: 0.005,
            batch_size: 16,
            policy_delay: 2,
            learning_rate: 1e-3,
            target_noise: 0.2,
            noise_clip: 0.5,
            buffer_capacity: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Td3 {
    pub config: Td3Config,
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    actor_target: Mlp,
    critic_targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    critic_updates: usize,
}

fn softmax_rows(x: &Array2<f64>) -> Array2<f64> {
    let mut out = x.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

pub fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

impl Td3 {
    pub fn new(state_dim: usize, config: Td3Config, rng: &mut impl Rng) -> Self {
        let h = config.hidden;
        let actor = Mlp::new(&[state_dim, h, h, Action::COUNT], rng);
        let critics = [
            Mlp::new(&[state_dim + Action::COUNT, h, h, 1], rng),
            Mlp::new(&[state_dim + Action::COUNT, h, h, 1], rng),
        ];
        let lr = config.learning_rate;
        Self {
            config,
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor_opt: Adam::new(&actor, lr),
            critic_opts: [Adam::new(&critics[0], lr), Adam::new(&critics[1], lr)],
            actor,
            critics,
            critic_updates: 0,
        }
    }

    pub fn greedy_action(&self, state: &[f64]) -> Action {
        Action::from_index(argmax(&self.actor.forward_one(state)))
    }

    /// Random action with probability `epsilon`, otherwise the greedy one.
    pub fn explore_action(&self, state: &[f64], epsilon: f64, rng: &mut impl Rng) -> Action {
        if rng.random::<f64>() < epsilon {
            Action::from_index(rng.random_range(0..Action::COUNT))
        } else {
            self.greedy_action(state)
        }
    }

    pub fn q_values(&self, state: &[f64]) -> Vec<f64> {
        Action::ALL
            .iter()
            .map(|a| {
                let mut x = state.to_vec();
                x.extend_from_slice(&a.one_hot());
                self.critics[0].forward_one(&x)[0]
            })
            .collect()
    }

    pub fn critic_updates(&self) -> usize {
        self.critic_updates
    }

    /// One training step on a sampled minibatch; `None` when the buffer holds
    /// fewer than `batch_size` transitions.
    pub fn update(&mut self, buffer: &ReplayBuffer, rng: &mut impl Rng) -> Option<UpdateStats> {
        let batch = buffer.sample(self.config.batch_size, rng)?;
        Some(self.update_on(&batch, rng))
    }

    pub fn update_on(&mut self, batch: &[&Transition], rng: &mut impl Rng) -> UpdateStats {
        let m = batch.len();
        let dim = batch[0].state.len();
        let rows = |f: &dyn Fn(&Transition) -> &[f64]| {
            let flat: Vec<f64> = batch.iter().flat_map(|t| f(t).iter().copied()).collect();
            Array2::from_shape_vec((m, dim), flat).expect("uniform state width")
        };
        let states = rows(&|t| &t.state);
        let next_states = rows(&|t| &t.next_state);
        let mut actions = Array2::zeros((m, Action::COUNT));
        for (i, t) in batch.iter().enumerate() {
            actions[[i, t.action.index()]] = 1.0;
        }

        // Smoothed target action: noisy target-actor logits, then one-hot argmax.
        let noise = Normal::new(0.0, self.config.target_noise).expect("valid sigma");
        let clip = self.config.noise_clip;
        let mut target_logits = self.actor_target.forward(next_states.view());
        target_logits.mapv_inplace(|v| v + noise.sample(rng).clamp(-clip, clip));
        let mut next_actions = Array2::zeros((m, Action::COUNT));
        for (i, row) in target_logits.rows().into_iter().enumerate() {
            next_actions[[i, argmax(row.as_slice().expect("contiguous"))]] = 1.0;
        }
        let next_input = concatenate(Axis(1), &[next_states.view(), next_actions.view()]).expect("rows");
        let q1 = self.critic_targets[0].forward(next_input.view());
        let q2 = self.critic_targets[1].forward(next_input.view());
        let targets: Vec<f64> = batch
            .iter()
            .enumerate()
            .map(|(i, t)| t.reward + self.config.gamma * q1[[i, 0]].min(q2[[i, 0]]))
            .collect();

        let input = concatenate(Axis(1), &[states.view(), actions.view()]).expect("rows");
        let mut critic_loss = 0.0;
        for c in 0..2 {
            let cache = self.critics[c].forward_cached(input.view());
            let out = cache.output();
            let mut grad = Array2::zeros((m, 1));
            for i in 0..m {
                let err = out[[i, 0]] - targets[i];
                if c == 0 {
                    critic_loss += err * err;
                }
                grad[[i, 0]] = 2.0 * err;
            }
            let (g, _) = self.critics[c].backward(&cache, grad.view());
            self.critic_opts[c].step(&mut self.critics[c], &g);
        }
        self.critic_updates += 1;

        let mut actor_loss = None;
        if self.critic_updates.is_multiple_of(self.config.policy_delay) {
            actor_loss = Some(self.actor_step(states.view()));
            let tau = self.config.tau;
            self.actor_target.soft_update_from(&self.actor, tau);
            for c in 0..2 {
                self.critic_targets[c].soft_update_from(&self.critics[c], tau);
            }
        }
        UpdateStats {
            critic_loss,
            actor_loss,
        }
    }

    /// Minimises `-mean Q1(s, softmax(actor(s)))`; returns the loss.
    fn actor_step(&mut self, states: ArrayView2<'_, f64>) -> f64 {
        let m = states.nrows();
        let dim = states.ncols();
        let a_cache = self.actor.forward_cached(states);
        let probs = softmax_rows(a_cache.output());
        let input = concatenate(Axis(1), &[states, probs.view()]).expect("rows");
        let c_cache = self.critics[0].forward_cached(input.view());
        let loss = -c_cache.output().sum() / m as f64;
        let grad_q = Array2::from_elem((m, 1), -1.0 / m as f64);
        let (_, grad_in) = self.critics[0].backward(&c_cache, grad_q.view());
        let grad_p = grad_in.slice(s![.., dim..]);
        // Softmax Jacobian: dz = p * (dp - <p, dp>).
        let mut grad_z = Array2::zeros((m, Action::COUNT));
        for i in 0..m {
            let dot: f64 = (0..Action::COUNT).map(|j| probs[[i, j]] * grad_p[[i, j]]).sum();
            for j in 0..Action::COUNT {
                grad_z[[i, j]] = probs[[i, j]] * (grad_p[[i, j]] - dot);
            }
        }
        let (g, _) = self.actor.backward(&a_cache, grad_z.view());
        self.actor_opt.step(&mut self.actor, &g);
        loss
    }
}
