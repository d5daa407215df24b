//! Memoised clustering evaluations and single-episode rollouts.

use std::collections::HashMap;
use std::sync::Arc;

use ndarray::ArrayView2;
use rand::Rng;
use serde::Serialize;

use crate::dbscan::{cluster_centers, run_dbscan, ClusterResult, DbscanParams};
use crate::error::{Error, Result};

use super::replay::{ReplayBuffer, Transition};
use super::reward::{check_termination, episode_rewards, labeled_nmi, RewardConfig, StopReason};
use super::state::{apply_action, local_features, Action, Bounds, ClampFlags, Encoder, GlobalState, StepSizes};
use super::td3::Td3;

/// A clustering of the partition with its labeled-subset reward.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub result: Arc<ClusterResult>,
    pub reward: f64,
    /// Scaled local features, one row per cluster.
    pub locals: Arc<Vec<Vec<f64>>>,
}

/// One DBSCAN invocation, in the order it was spent.
#[derive(Debug, Clone)]
pub struct RoundRecord {
    pub params: DbscanParams,
    pub reward: f64,
    pub result: Arc<ClusterResult>,
}

/// Runs DBSCAN on one partition, caching by parameter pair. Every cache miss
/// spends one round of the budget.
#[derive(Debug)]
pub struct ClusteringOracle<'a> {
    points: ArrayView2<'a, f64>,
    labeled: Vec<usize>,
    truth: Vec<i64>,
    max_rounds: usize,
    cache: HashMap<(u64, usize), Evaluation>,
    rounds: Vec<RoundRecord>,
}

impl<'a> ClusteringOracle<'a> {
    /// `labeled` indexes rows of `points`; `truth[i]` is the label of `labeled[i]`.
    pub fn new(points: ArrayView2<'a, f64>, labeled: Vec<usize>, truth: Vec<i64>, max_rounds: usize) -> Result<Self> {
        if labeled.is_empty() {
            return Err(Error::InvalidArgument("labeled subset is empty".into()));
        }
        if labeled.len() != truth.len() {
            return Err(Error::LengthMismatch {
                predicted: labeled.len(),
                truth: truth.len(),
            });
        }
        if labeled.iter().any(|&i| i >= points.nrows()) {
            return Err(Error::InvalidArgument("labeled index out of range".into()));
        }
        Ok(Self {
            points,
            labeled,
            truth,
            max_rounds,
            cache: HashMap::new(),
            rounds: Vec::new(),
        })
    }

    pub fn points(&self) -> ArrayView2<'a, f64> {
        self.points
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.rounds
    }

    pub fn rounds_used(&self) -> usize {
        self.rounds.len()
    }

    pub fn exhausted(&self) -> bool {
        self.rounds.len() >= self.max_rounds
    }

    /// Cached evaluation, without spending a round.
    pub fn cached(&self, params: DbscanParams) -> Option<Evaluation> {
        self.cache.get(&params.key()).cloned()
    }

    /// Evaluation of `params`; `None` when it is not cached and the budget is spent.
    pub fn evaluate(&mut self, params: DbscanParams) -> Option<Evaluation> {
        if let Some(e) = self.cache.get(&params.key()) {
            return Some(e.clone());
        }
        if self.exhausted() {
            return None;
        }
        let result = run_dbscan(self.points, params);
        let reward = labeled_nmi(&result.assignment, &self.labeled, &self.truth).expect("labeled subset validated");
        let (n, d) = self.points.dim();
        let locals = cluster_centers(self.points, &result)
            .iter()
            .map(|c| local_features(c, d, n))
            .collect();
        let eval = Evaluation {
            result: Arc::new(result),
            reward,
            locals: Arc::new(locals),
        };
        self.rounds.push(RoundRecord {
            params,
            reward,
            result: Arc::clone(&eval.result),
        });
        self.cache.insert(params.key(), eval.clone());
        Some(eval)
    }
}

/// Fixed inputs of one episode.
#[derive(Debug, Clone, Copy)]
pub struct EpisodeSetup<'e> {
    pub encoder: &'e Encoder,
    pub bounds: Bounds,
    pub steps: StepSizes,
    pub start: DbscanParams,
    pub reward: RewardConfig,
    /// Probability of a uniformly random action.
    pub epsilon: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct StepRecord {
    pub step: usize,
    pub action: Action,
    pub params: DbscanParams,
    pub clamped: ClampFlags,
    pub num_clusters: usize,
    pub immediate: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpisodeTrace {
    pub start: DbscanParams,
    pub start_reward: Option<f64>,
    pub steps: Vec<StepRecord>,
    pub stop_reason: StopReason,
}

fn encode(
    setup: &EpisodeSetup<'_>,
    oracle: &ClusteringOracle<'_>,
    params: DbscanParams,
    flags: ClampFlags,
    eval: &Evaluation,
) -> (Vec<f64>, GlobalState) {
    let (n, d) = oracle.points().dim();
    let global = GlobalState::new(params, &setup.bounds, flags, eval.result.num_clusters, n);
    let fused = setup.encoder.fuse(&global.features(d, n), &eval.locals);
    (fused.state, global)
}

/// Rolls out one episode from `setup.start`, training the learner after every
/// step and storing the episode's transitions once it ends.
pub fn run_episode(
    oracle: &mut ClusteringOracle<'_>,
    setup: &EpisodeSetup<'_>,
    learner: &mut Td3,
    buffer: &mut ReplayBuffer,
    rng: &mut impl Rng,
) -> EpisodeTrace {
    let mut trace = EpisodeTrace {
        start: setup.start,
        start_reward: None,
        steps: Vec::new(),
        stop_reason: StopReason::Budget,
    };
    let Some(start_eval) = oracle.evaluate(setup.start) else {
        return trace;
    };
    trace.start_reward = Some(start_eval.reward);
    let mut params = setup.start;
    let (mut state, _) = encode(setup, oracle, params, ClampFlags::default(), &start_eval);
    let mut pending: Vec<(Vec<f64>, Action, Vec<f64>)> = Vec::new();

    for step in 1.. {
        let action = learner.explore_action(&state, setup.epsilon, rng);
        let (next_params, flags) = apply_action(params, action, setup.steps, &setup.bounds);
        let Some(eval) = oracle.evaluate(next_params) else {
            trace.stop_reason = StopReason::Budget;
            break;
        };
        let (next_state, global) = encode(setup, oracle, next_params, flags, &eval);
        let stop = check_termination(&global, step, action, setup.reward.max_steps);
        trace.steps.push(StepRecord {
            step,
            action,
            params: next_params,
            clamped: flags,
            num_clusters: eval.result.num_clusters,
            immediate: eval.reward,
            reward: 0.0,
        });
        pending.push((state, action, next_state.clone()));
        learner.update(buffer, rng);
        if let Some(reason) = stop {
            trace.stop_reason = reason;
            break;
        }
        state = next_state;
        params = next_params;
    }

    let immediate: Vec<f64> = trace.steps.iter().map(|s| s.immediate).collect();
    let rewards = episode_rewards(&immediate, setup.reward.delta);
    for ((record, (s, a, s2)), r) in trace.steps.iter_mut().zip(pending).zip(rewards) {
        record.reward = r;
        buffer.push(Transition {
            state: s,
            action: a,
            next_state: s2,
            reward: r,
        });
    }
    trace
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::td3::Td3Config;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_blobs() -> (Array2<f64>, Vec<i64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, center) in [(0.25, 0.25), (0.75, 0.75)].iter().enumerate() {
            for _ in 0..20 {
                rows.push(center.0 + rng.random_range(-0.05..0.05));
                rows.push(center.1 + rng.random_range(-0.05..0.05));
                labels.push(c as i64);
            }
        }
        (Array2::from_shape_vec((40, 2), rows).unwrap(), labels)
    }

    #[test]
    fn oracle_counts_only_new_params() {
        let (pts, labels) = two_blobs();
        let idx: Vec<usize> = (0..40).step_by(4).collect();
        let truth = idx.iter().map(|&i| labels[i]).collect();
        let mut o = ClusteringOracle::new(pts.view(), idx, truth, 2).unwrap();
        let a = DbscanParams::new(0.2, 3).unwrap();
        let b = DbscanParams::new(0.3, 3).unwrap();
        let c = DbscanParams::new(0.4, 3).unwrap();
        let ea = o.evaluate(a).unwrap();
        assert_eq!(ea.reward, 1.0);
        o.evaluate(a).unwrap();
        assert_eq!(o.rounds_used(), 1);
        o.evaluate(b).unwrap();
        assert!(o.exhausted());
        assert!(o.evaluate(c).is_none());
        assert!(o.evaluate(b).is_some());
    }

    #[test]
    fn full_labels_reward_equals_full_nmi() {
        let (pts, labels) = two_blobs();
        let mut o = ClusteringOracle::new(pts.view(), (0..40).collect(), labels.clone(), 10).unwrap();
        let p = DbscanParams::new(0.05, 4).unwrap();
        let e = o.evaluate(p).unwrap();
        assert_eq!(e.reward, crate::metrics::nmi(&e.result.assignment, &labels).unwrap());
    }

    #[test]
    fn empty_labeled_subset_rejected() {
        let (pts, _) = two_blobs();
        assert!(ClusteringOracle::new(pts.view(), vec![], vec![], 10).is_err());
    }

    fn setup_for(encoder: &Encoder) -> EpisodeSetup<'_> {
        EpisodeSetup {
            encoder,
            bounds: Bounds {
                eps_lo: 0.0,
                eps_hi: 2f64.sqrt(),
                min_pts_lo: 1,
                min_pts_hi: 10,
            },
            steps: StepSizes {
                eps: 2f64.sqrt() / 5.0,
                min_pts: 2,
            },
            start: DbscanParams::new(2f64.sqrt() / 2.0, 6).unwrap(),
            reward: RewardConfig::default(),
            epsilon: 0.9,
        }
    }

    fn rollout(seed: u64) -> EpisodeTrace {
        let (pts, labels) = two_blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let encoder = Encoder::new(2, 32, &mut rng);
        let mut learner = Td3::new(64, Td3Config::default(), &mut rng);
        let mut buffer = ReplayBuffer::new(2000);
        let mut o = ClusteringOracle::new(pts.view(), (0..40).collect(), labels, 30).unwrap();
        run_episode(&mut o, &setup_for(&encoder), &mut learner, &mut buffer, &mut rng)
    }

    #[test]
    fn episode_is_reproducible_and_consistent() {
        let a = rollout(5);
        let b = rollout(5);
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        assert!(!a.steps.is_empty());
        let last = a.steps.last().unwrap();
        match a.stop_reason {
            StopReason::Bounds => assert!(last.clamped.any()),
            StopReason::Action => assert!(last.action == Action::Stop && last.step >= 2),
            StopReason::Timeout => assert_eq!(last.step, 30),
            StopReason::Budget => {}
        }
        let max = a.steps.iter().map(|s| s.immediate).fold(0.0, f64::max);
        for s in &a.steps {
            assert!(s.reward <= max + 1e-12);
            assert!(s.reward >= 0.2 * last.immediate - 1e-12);
        }
    }

    #[test]
    fn stop_at_step_two_ends_with_action() {
        let (pts, labels) = two_blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let encoder = Encoder::new(2, 32, &mut rng);
        let mut learner = Td3::new(64, Td3Config::default(), &mut rng);
        // Force STOP: the output bias dominates every logit.
        let last = learner.actor.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        last.bias[Action::Stop.index()] = 1.0;
        let mut buffer = ReplayBuffer::new(2000);
        let mut o = ClusteringOracle::new(pts.view(), (0..40).collect(), labels, 30).unwrap();
        let mut setup = setup_for(&encoder);
        setup.epsilon = 0.0;
        let t = run_episode(&mut o, &setup, &mut learner, &mut buffer, &mut rng);
        assert_eq!(t.steps.len(), 2);
        assert_eq!(t.stop_reason, StopReason::Action);
        assert_eq!(buffer.len(), 2);
        assert_eq!(o.rounds_used(), 1);
    }

    #[test]
    fn always_right_hits_the_bound() {
        let (pts, labels) = two_blobs();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let encoder = Encoder::new(2, 32, &mut rng);
        let mut learner = Td3::new(64, Td3Config::default(), &mut rng);
        let last = learner.actor.layers.last_mut().unwrap();
        last.weight.fill(0.0);
        last.bias.fill(0.0);
        last.bias[Action::Right.index()] = 1.0;
        let mut buffer = ReplayBuffer::new(2000);
        let mut o = ClusteringOracle::new(pts.view(), (0..40).collect(), labels, 30).unwrap();
        let mut setup = setup_for(&encoder);
        setup.epsilon = 0.0;
        // Start 2.5 steps below the upper bound: steps 1, 2 stay inside, step 3 overshoots.
        setup.start = DbscanParams::new(2f64.sqrt() - 2.5 * setup.steps.eps, 3).unwrap();
        let t = run_episode(&mut o, &setup, &mut learner, &mut buffer, &mut rng);
        assert_eq!(t.steps.len(), 3);
        assert_eq!(t.stop_reason, StopReason::Bounds);
    }
}
