//! Serializable run reports.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dbscan::DbscanParams;
use crate::env::StopReason;
use crate::search::LayerSummary;

use super::config::RunConfig;

/// Mean and population variance over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stat {
    pub mean: f64,
    pub variance: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self {
                mean: f64::NAN,
                variance: f64::NAN,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, variance }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundMetric {
    pub round: usize,
    pub nmi: f64,
    pub ari: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AgentReport {
    pub agent: usize,
    pub size: usize,
    pub best: DbscanParams,
    pub best_reward: f64,
    pub rounds_used: usize,
    pub num_clusters: usize,
    pub layers: Vec<LayerSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedRun {
    pub seed: u64,
    pub nmi: f64,
    pub ari: f64,
    pub num_clusters: usize,
    pub noise_points: usize,
    pub num_agents: usize,
    pub agents: Vec<AgentReport>,
    /// Metrics of the merged best-so-far clustering after each round.
    pub rounds: Vec<RoundMetric>,
    pub stop_reasons: BTreeMap<StopReason, usize>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RoundStat {
    pub round: usize,
    pub nmi: Stat,
    pub ari: Stat,
}

#[derive(Debug, Clone, Serialize)]
pub struct Summary {
    pub nmi: Stat,
    pub ari: Stat,
    pub rounds: Vec<RoundStat>,
    pub stop_reasons: BTreeMap<StopReason, usize>,
}

impl Summary {
    pub fn of(runs: &[SeedRun]) -> Self {
        let pick = |f: fn(&SeedRun) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let num_rounds = runs.iter().map(|r| r.rounds.len()).max().unwrap_or(0);
        let rounds = (0..num_rounds)
            .map(|i| {
                let at = |f: fn(&RoundMetric) -> f64| {
                    runs.iter().filter_map(|r| r.rounds.get(i).map(f)).collect::<Vec<_>>()
                };
                RoundStat {
                    round: i + 1,
                    nmi: Stat::of(&at(|m| m.nmi)),
                    ari: Stat::of(&at(|m| m.ari)),
                }
            })
            .collect();
        let mut stop_reasons = BTreeMap::new();
        for r in runs {
            for (k, v) in &r.stop_reasons {
                *stop_reasons.entry(*k).or_insert(0) += v;
            }
        }
        Self {
            nmi: Stat::of(&pick(|r| r.nmi)),
            ari: Stat::of(&pick(|r| r.ari)),
            rounds,
            stop_reasons,
        }
    }
}

/// Report of `cluster` and `baseline`, and of each online block.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub command: String,
    pub dataset: String,
    pub num_points: usize,
    pub dim: usize,
    /// Selected k-NN parameter; absent when no graph was built.
    pub k: Option<usize>,
    pub stable_points: Vec<usize>,
    pub num_agents: usize,
    pub partition_sizes: Vec<usize>,
    pub config: RunConfig,
    pub runs: Vec<SeedRun>,
    pub summary: Summary,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlockReport {
    pub block: usize,
    pub offset: usize,
    pub len: usize,
    pub report: RunReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct OnlineReport {
    pub command: String,
    pub dataset: String,
    pub num_points: usize,
    pub num_blocks: usize,
    pub blocks: Vec<BlockReport>,
    pub wall_clock_secs: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeReport {
    pub node: usize,
    pub size: usize,
    pub entropy: f64,
    pub uncertainty: f64,
    pub partition: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct AllocationReport {
    pub command: String,
    pub dataset: String,
    pub num_points: usize,
    pub dim: usize,
    pub k: usize,
    pub stable_points: Vec<usize>,
    /// Normalized one-dimensional entropy for k = 1, 2, ...
    pub entropy_curve: Vec<f64>,
    pub one_dim_entropy: f64,
    pub tree_entropy: f64,
    pub num_agents: usize,
    pub partition_sizes: Vec<usize>,
    pub nodes: Vec<NodeReport>,
    pub wall_clock_secs: f64,
}
