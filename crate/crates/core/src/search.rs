//! Layered coarse-to-fine parameter search for one agent, and merging of
//! per-agent clusterings into one labelling.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::debug;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{sample_labeled_subset, Dataset};
use crate::dbscan::{ClusterResult, DbscanParams, NOISE};
use crate::env::{
    run_episode, Bounds, ClusteringOracle, Encoder, EpisodeSetup, EpisodeTrace, ReplayBuffer, RewardConfig, StepSizes,
    StopReason, Td3, Td3Config,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub pi_eps: f64,
    pub pi_min_pts: f64,
    pub layers: usize,
    pub episodes: usize,
    pub min_pts_cap_fraction: f64,
    /// DBSCAN invocations each agent may spend.
    pub max_rounds: usize,
    pub label_proportion: f64,
    pub state_hidden: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    pub reward: RewardConfig,
    pub td3: Td3Config,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            pi_eps: 5.0,
            pi_min_pts: 4.0,
            layers: 3,
            episodes: 15,
            min_pts_cap_fraction: 0.25,
            max_rounds: 30,
            label_proportion: 0.2,
            state_hidden: 32,
            epsilon_start: 0.9,
            epsilon_end: 0.1,
            reward: RewardConfig::default(),
            td3: Td3Config::default(),
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.pi_eps >= 1.0 && self.pi_min_pts >= 1.0) {
            return bad("search space sizes must be >= 1");
        }
        if self.layers == 0 || self.episodes == 0 {
            return bad("layers and episodes must be >= 1");
        }
        if self.max_rounds == 0 {
            return bad("round budget must be positive");
        }
        if !(self.min_pts_cap_fraction > 0.0 && self.min_pts_cap_fraction <= 1.0) {
            return bad("MinPts cap fraction must lie in (0, 1]");
        }
        if !(self.label_proportion > 0.0 && self.label_proportion <= 1.0) {
            return bad("label proportion must lie in (0, 1]");
        }
        if self.state_hidden == 0 || self.td3.hidden == 0 || self.td3.batch_size == 0 || self.td3.policy_delay == 0 {
            return bad("network widths, batch size and policy delay must be positive");
        }
        RewardConfig::new(self.reward.delta, self.reward.max_steps)?;
        Ok(())
    }
}

/// Rounds `x >= 0` to the nearest integer, halves up.
pub fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor().max(0.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchLayer {
    pub index: usize,
    pub bounds: Bounds,
    pub steps: StepSizes,
    pub start: DbscanParams,
}

/// Eps in `[0, sqrt(d)]`, MinPts in `[1, max(1, round(fraction * size))]`.
pub fn layer_zero_bounds(dim: usize, partition_size: usize, min_pts_cap_fraction: f64) -> Bounds {
    Bounds {
        eps_lo: 0.0,
        eps_hi: (dim as f64).sqrt(),
        min_pts_lo: 1,
        min_pts_hi: round_half_up(min_pts_cap_fraction * partition_size as f64).max(1),
    }
}

/// Layer 0: `pi` steps span each range and the search starts at the midpoint.
pub fn layer_zero(dim: usize, partition_size: usize, cfg: &SearchConfig) -> SearchLayer {
    let bounds = layer_zero_bounds(dim, partition_size, cfg.min_pts_cap_fraction);
    let steps = StepSizes {
        eps: (bounds.eps_hi - bounds.eps_lo) / cfg.pi_eps,
        min_pts: (((bounds.min_pts_hi - 1) as f64 / cfg.pi_min_pts).floor() as usize).max(1),
    };
    let start = DbscanParams {
        eps: 0.5 * (bounds.eps_lo + bounds.eps_hi),
        min_pts: round_half_up(0.5 * (bounds.min_pts_lo + bounds.min_pts_hi) as f64),
    };
    SearchLayer {
        index: 0,
        bounds,
        steps,
        start,
    }
}

/// Shrinks the steps by `pi` and centres the next bounds on the best
/// parameters, clipped to the layer-0 bounds.
pub fn next_layer(prev: &SearchLayer, base: &Bounds, best: DbscanParams, pi_eps: f64, pi_min_pts: f64) -> SearchLayer {
    let eps_step = prev.steps.eps / pi_eps;
    let mp_step = ((prev.steps.min_pts as f64 / pi_min_pts + 0.5).floor() as usize).max(1);
    let eps_half = 0.5 * pi_eps * eps_step;
    let mp_half = 0.5 * pi_min_pts * mp_step as f64;
    let mp = best.min_pts as f64;
    let bounds = Bounds {
        eps_lo: (best.eps - eps_half).max(base.eps_lo),
        eps_hi: (best.eps + eps_half).min(base.eps_hi),
        min_pts_lo: round_half_up((mp - mp_half).max(0.0)).max(base.min_pts_lo),
        min_pts_hi: round_half_up(mp + mp_half).min(base.min_pts_hi),
    };
    SearchLayer {
        index: prev.index + 1,
        bounds,
        steps: StepSizes {
            eps: eps_step,
            min_pts: mp_step,
        },
        start: best,
    }
}

/// Deterministic child seed for `(seed, stream, index)` (splitmix64 finaliser).
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_add(1).wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Best parameters found after a given number of rounds.
#[derive(Debug, Clone)]
pub struct RoundBest {
    pub params: DbscanParams,
    pub reward: f64,
    pub result: Arc<ClusterResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LayerSummary {
    pub layer: SearchLayer,
    pub best: DbscanParams,
    pub best_reward: f64,
    pub episodes_run: usize,
}

#[derive(Debug, Clone)]
pub struct AgentResult {
    pub partition_id: usize,
    /// Dataset indices of the partition, ascending.
    pub indices: Vec<usize>,
    pub best_params: DbscanParams,
    pub best_reward: f64,
    /// Historical best by labeled reward, one entry per spent round.
    pub series: Vec<RoundBest>,
    pub final_result: Arc<ClusterResult>,
    pub layers: Vec<LayerSummary>,
    pub stop_reasons: BTreeMap<StopReason, usize>,
    pub traces: Vec<EpisodeTrace>,
}

impl AgentResult {
    pub fn rounds_used(&self) -> usize {
        self.series.len()
    }
}

/// Searches DBSCAN parameters for the points `partition` of `ds`.
pub fn run_agent(ds: &Dataset, partition: &[usize], partition_id: usize, cfg: &SearchConfig, seed: u64) -> Result<AgentResult> {
    cfg.validate()?;
    if partition.is_empty() {
        return Err(Error::InvalidArgument("partition is empty".into()));
    }
    let sub = ds.subset(partition);
    let n = sub.len();
    // At least one labeled point per partition.
    let proportion = cfg.label_proportion.max(1.0 / n as f64);
    let labeled = sample_labeled_subset(&sub, proportion, derive_seed(seed, partition_id as u64, u64::MAX))?;
    let labels = sub.require_labels()?;
    let truth = labeled.indices.iter().map(|&i| labels[i]).collect();
    let mut oracle = ClusteringOracle::new(sub.points(), labeled.indices.clone(), truth, cfg.max_rounds)?;

    let base = layer_zero(sub.dim(), n, cfg);
    let mut layer = base;
    let mut best: Option<(DbscanParams, f64)> = None;
    let mut layers = Vec::new();
    let mut stop_reasons = BTreeMap::new();
    let mut traces = Vec::new();

    for l in 0..cfg.layers {
        if l > 0 {
            let (p, _) = best.expect("previous layer observed its start");
            layer = next_layer(&layer, &base.bounds, p, cfg.pi_eps, cfg.pi_min_pts);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, partition_id as u64, l as u64));
        let encoder = Encoder::new(sub.dim(), cfg.state_hidden, &mut rng);
        let mut learner = Td3::new(encoder.state_dim(), cfg.td3, &mut rng);
        let mut buffer = ReplayBuffer::new(cfg.td3.buffer_capacity);
        let mut layer_best: Option<(DbscanParams, f64)> = None;
        let mut episodes_run = 0;
        for e in 0..cfg.episodes {
            let frac = if cfg.episodes > 1 { e as f64 / (cfg.episodes - 1) as f64 } else { 0.0 };
            let setup = EpisodeSetup {
                encoder: &encoder,
                bounds: layer.bounds,
                steps: layer.steps,
                start: layer.start,
                reward: cfg.reward,
                epsilon: cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * frac,
            };
            let trace = run_episode(&mut oracle, &setup, &mut learner, &mut buffer, &mut rng);
            episodes_run += 1;
            *stop_reasons.entry(trace.stop_reason).or_insert(0) += 1;
            let observed = trace
                .start_reward
                .map(|r| (trace.start, r))
                .into_iter()
                .chain(trace.steps.iter().map(|s| (s.params, s.immediate)));
            for (p, r) in observed {
                if layer_best.is_none_or(|(_, b)| r > b) {
                    layer_best = Some((p, r));
                }
            }
            traces.push(trace);
            if oracle.exhausted() {
                break;
            }
        }
        let Some((p, r)) = layer_best else { break };
        if best.is_none_or(|(_, b)| r >= b) {
            best = Some((p, r));
        }
        debug!(
            "agent {partition_id} layer {l}: best {:?} reward {r:.4}, rounds {}",
            p,
            oracle.rounds_used()
        );
        layers.push(LayerSummary {
            layer,
            best: p,
            best_reward: r,
            episodes_run,
        });
        if oracle.exhausted() {
            break;
        }
    }

    let (best_params, best_reward) = best.expect("the first layer evaluates its start");
    let final_result = oracle.cached(best_params).expect("best parameters were evaluated").result;
    let mut series: Vec<RoundBest> = Vec::with_capacity(oracle.rounds_used());
    for round in oracle.rounds() {
        let improved = series.last().is_none_or(|b| round.reward > b.reward);
        series.push(if improved {
            RoundBest {
                params: round.params,
                reward: round.reward,
                result: Arc::clone(&round.result),
            }
        } else {
            series.last().expect("non-empty").clone()
        });
    }
    Ok(AgentResult {
        partition_id,
        indices: partition.to_vec(),
        best_params,
        best_reward,
        series,
        final_result,
        layers,
        stop_reasons,
        traces,
    })
}

/// Joins per-partition clusterings, offsetting cluster ids so they are
/// globally unique; noise stays noise.
pub fn merge_assignments(parts: &[(&[usize], &ClusterResult)], n: usize) -> Result<ClusterResult> {
    let mut assignment = vec![NOISE; n];
    let mut covered = vec![false; n];
    let mut offset = 0usize;
    for (indices, result) in parts {
        if indices.len() != result.assignment.len() {
            return Err(Error::LengthMismatch {
                predicted: result.assignment.len(),
                truth: indices.len(),
            });
        }
        for (&i, &c) in indices.iter().zip(&result.assignment) {
            if i >= n {
                return Err(Error::InvalidArgument(format!("point {i} out of range")));
            }
            if std::mem::replace(&mut covered[i], true) {
                return Err(Error::OverlappingPartitions(i));
            }
            assignment[i] = if c == NOISE { NOISE } else { c + offset as i64 };
        }
        offset += result.num_clusters;
    }
    if let Some(i) = covered.iter().position(|c| !c) {
        return Err(Error::InvalidArgument(format!("point {i} is in no partition")));
    }
    Ok(ClusterResult {
        assignment,
        num_clusters: offset,
    })
}

/// Merged final clustering of all agents.
pub fn merge_agent_results(results: &[AgentResult], n: usize) -> Result<ClusterResult> {
    let parts: Vec<(&[usize], &ClusterResult)> = results
        .iter()
        .map(|r| (r.indices.as_slice(), r.final_result.as_ref()))
        .collect();
    merge_assignments(&parts, n)
}

/// Merged clustering after each of `rounds` rounds; an agent that stopped
/// early contributes its last round's result from then on.
pub fn merge_round_series(results: &[AgentResult], n: usize, rounds: usize) -> Result<Vec<ClusterResult>> {
    (0..rounds)
        .map(|r| {
            let parts: Vec<(&[usize], &ClusterResult)> = results
                .iter()
                .map(|a| {
                    let idx = r.min(a.series.len().saturating_sub(1));
                    (a.indices.as_slice(), a.series[idx].result.as_ref())
                })
                .collect();
            merge_assignments(&parts, n)
        })
        .collect()
}
