//! Experiment orchestration behind the command-line front end.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{block_sizes, load_csv, normalize, sample_labeled_subset, split_blocks, Dataset};
use crate::dbscan::{ClusterResult, DbscanParams};
use crate::env::{ClusteringOracle, EpisodeTrace};
use crate::error::{Error, Result};
use crate::graph::{one_dim_se, select_k, KSelection};
use crate::metrics::{ari, nmi};
use crate::search::{
    derive_seed, layer_zero_bounds, merge_agent_results, merge_round_series, run_agent, AgentResult, RoundBest,
};
use crate::tree::{allocate_agents, export_tree, optimize_two_level, AgentAllocation, EncodingTree, ExportedNode};

use super::config::RunConfig;
use super::report::{
    AgentReport, AllocationReport, BlockReport, NodeReport, OnlineReport, RoundMetric, RunReport, SeedRun, Summary,
};

/// Stream id of the baseline's parameter draws in [`derive_seed`].
const BASELINE_STREAM: u64 = u64::MAX - 1;

/// Seed-independent preprocessing shared by every seed of a run.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub selection: Option<KSelection>,
    pub tree: Option<EncodingTree>,
    pub allocation: AgentAllocation,
}

pub fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    load_csv(&cfg.dataset, cfg.has_labels)
}

fn scaled(raw: &Dataset, cfg: &RunConfig) -> Result<Dataset> {
    raw.require_labels()?;
    if raw.len() < 2 {
        return Err(Error::DatasetTooSmall("at least two points are needed for scoring".into()));
    }
    Ok(if cfg.normalize { normalize(raw) } else { raw.clone() })
}

/// Scales the data and, unless a single agent is requested, selects k,
/// builds the encoding tree and allocates agents.
pub fn prepare(raw: &Dataset, cfg: &RunConfig, single_agent: bool) -> Result<Prepared> {
    let data = scaled(raw, cfg)?;
    if single_agent {
        let allocation = AgentAllocation::single(data.len());
        return Ok(Prepared {
            data,
            selection: None,
            tree: None,
            allocation,
        });
    }
    let selection = select_k(data.points(), cfg.k_cap)?;
    let tree = optimize_two_level(&selection.graph)?;
    let allocation = allocate_agents(&tree, selection.k, cfg.alloc_eps, cfg.alloc_min_pts)?;
    info!(
        "k={} stable={:?}, {} communities, {} agents",
        selection.k,
        selection.stable_points,
        tree.intermediate_nodes().len(),
        allocation.num_agents()
    );
    Ok(Prepared {
        data,
        selection: Some(selection),
        tree: Some(tree),
        allocation,
    })
}

/// One seed's run together with its labelling and episode traces.
#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub run: SeedRun,
    pub assignment: Vec<i64>,
    /// Per agent, the traces of its episodes in order.
    pub traces: Vec<Vec<EpisodeTrace>>,
}

fn score(result: &ClusterResult, truth: &[i64]) -> Result<(f64, f64)> {
    Ok((nmi(&result.assignment, truth)?, ari(&result.assignment, truth)?))
}

fn assemble(agents: Vec<AgentResult>, data: &Dataset, cfg: &RunConfig, seed: u64, started: Instant) -> Result<SeedOutcome> {
    let n = data.len();
    let num_agents = agents.len();
    let truth = data.require_labels()?;
    let merged = merge_agent_results(&agents, n)?;
    let (nmi_v, ari_v) = score(&merged, truth)?;
    let rounds = merge_round_series(&agents, n, cfg.max_rounds)?
        .iter()
        .enumerate()
        .map(|(r, c)| {
            let (nmi, ari) = score(c, truth)?;
            Ok(RoundMetric { round: r + 1, nmi, ari })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stop_reasons = BTreeMap::new();
    for a in &agents {
        for (k, v) in &a.stop_reasons {
            *stop_reasons.entry(*k).or_insert(0) += v;
        }
    }
    let reports = agents
        .iter()
        .map(|a| AgentReport {
            agent: a.partition_id,
            size: a.indices.len(),
            best: a.best_params,
            best_reward: a.best_reward,
            rounds_used: a.rounds_used(),
            num_clusters: a.final_result.num_clusters,
            layers: a.layers.clone(),
        })
        .collect();
    let traces = agents.into_iter().map(|a| a.traces).collect();
    Ok(SeedOutcome {
        run: SeedRun {
            seed,
            nmi: nmi_v,
            ari: ari_v,
            num_clusters: merged.num_clusters,
            noise_points: merged.noise_count(),
            num_agents,
            agents: reports,
            rounds,
            stop_reasons,
            wall_clock_secs: started.elapsed().as_secs_f64(),
        },
        assignment: merged.assignment,
        traces,
    })
}

/// Runs one agent per partition for a single seed.
pub fn run_seed(prep: &Prepared, cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let started = Instant::now();
    let search = cfg.search_config();
    let agents = prep
        .allocation
        .partitions
        .iter()
        .enumerate()
        .map(|(i, p)| run_agent(&prep.data, p, i, &search, seed))
        .collect::<Result<Vec<_>>>()?;
    assemble(agents, &prep.data, cfg, seed, started)
}

/// Uniform random parameter draws within the layer-0 bounds of the whole
/// dataset, scored and budgeted like one agent.
pub fn run_baseline_seed(data: &Dataset, cfg: &RunConfig, seed: u64) -> Result<SeedOutcome> {
    let started = Instant::now();
    let search = cfg.search_config();
    search.validate()?;
    let n = data.len();
    let labeled = sample_labeled_subset(data, search.label_proportion.max(1.0 / n as f64), derive_seed(seed, 0, u64::MAX))?;
    let labels = data.require_labels()?;
    let truth = labeled.indices.iter().map(|&i| labels[i]).collect();
    let mut oracle = ClusteringOracle::new(data.points(), labeled.indices, truth, cfg.max_rounds)?;
    let bounds = layer_zero_bounds(data.dim(), n, search.min_pts_cap_fraction);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, BASELINE_STREAM, 0));
    // Repeated draws are free, so cap the attempts for tiny parameter grids.
    let max_draws = 1000 * cfg.max_rounds;
    for _ in 0..max_draws {
        if oracle.exhausted() {
            break;
        }
        let params = DbscanParams {
            eps: rng.random_range(bounds.eps_lo..=bounds.eps_hi),
            min_pts: rng.random_range(bounds.min_pts_lo..=bounds.min_pts_hi),
        };
        oracle.evaluate(params);
    }
    let mut series: Vec<RoundBest> = Vec::new();
    for round in oracle.rounds() {
        if series.last().is_none_or(|b| round.reward > b.reward) {
            series.push(RoundBest {
                params: round.params,
                reward: round.reward,
                result: Arc::clone(&round.result),
            });
        } else {
            let last = series.last().expect("non-empty").clone();
            series.push(last);
        }
    }
    let best = series.last().expect("at least one round").clone();
    let agent = AgentResult {
        partition_id: 0,
        indices: (0..n).collect(),
        best_params: best.params,
        best_reward: best.reward,
        final_result: best.result,
        series,
        layers: Vec::new(),
        stop_reasons: BTreeMap::new(),
        traces: Vec::new(),
    };
    assemble(vec![agent], data, cfg, seed, started)
}

/// A full report plus the per-seed outcomes it was built from.
#[derive(Debug, Clone)]
pub struct ClusterOutput {
    pub report: RunReport,
    pub outcomes: Vec<SeedOutcome>,
    pub data: Dataset,
}

fn report(command: &str, prep: &Prepared, cfg: &RunConfig, outcomes: &[SeedOutcome], started: Instant) -> RunReport {
    let runs: Vec<SeedRun> = outcomes.iter().map(|o| o.run.clone()).collect();
    RunReport {
        command: command.into(),
        dataset: cfg.dataset.display().to_string(),
        num_points: prep.data.len(),
        dim: prep.data.dim(),
        k: prep.selection.as_ref().map(|s| s.k),
        stable_points: prep.selection.as_ref().map(|s| s.stable_points.clone()).unwrap_or_default(),
        num_agents: prep.allocation.num_agents(),
        partition_sizes: prep.allocation.partitions.iter().map(Vec::len).collect(),
        config: cfg.clone(),
        summary: Summary::of(&runs),
        runs,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    }
}

/// The full pipeline for every configured seed.
pub fn cluster_dataset(raw: &Dataset, cfg: &RunConfig, command: &str) -> Result<ClusterOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let prep = prepare(raw, cfg, cfg.single_agent)?;
    let outcomes = cfg
        .seeds
        .iter()
        .map(|&s| {
            let o = run_seed(&prep, cfg, s)?;
            info!("seed {s}: nmi={:.4} ari={:.4}", o.run.nmi, o.run.ari);
            Ok(o)
        })
        .collect::<Result<Vec<_>>>()?;
    let report = report(command, &prep, cfg, &outcomes, started);
    Ok(ClusterOutput {
        report,
        outcomes,
        data: prep.data,
    })
}

pub fn baseline_dataset(raw: &Dataset, cfg: &RunConfig) -> Result<ClusterOutput> {
    cfg.validate()?;
    let started = Instant::now();
    let prep = prepare(raw, cfg, true)?;
    let outcomes = cfg
        .seeds
        .iter()
        .map(|&s| run_baseline_seed(&prep.data, cfg, s))
        .collect::<Result<Vec<_>>>()?;
    let report = report("baseline", &prep, cfg, &outcomes, started);
    Ok(ClusterOutput {
        report,
        outcomes,
        data: prep.data,
    })
}

/// Splits the data into equal consecutive blocks and runs the pipeline on
/// each block independently.
pub fn online_dataset(raw: &Dataset, cfg: &RunConfig) -> Result<(OnlineReport, Vec<ClusterOutput>)> {
    cfg.validate()?;
    let started = Instant::now();
    let sizes = block_sizes(raw.len(), cfg.num_blocks)?;
    let mut offset = 0;
    let mut blocks = Vec::with_capacity(sizes.len());
    let mut outputs = Vec::with_capacity(sizes.len());
    for (b, (block, len)) in split_blocks(raw, cfg.num_blocks)?.iter().zip(sizes).enumerate() {
        info!("block {b}: points {offset}..{}", offset + len);
        let out = cluster_dataset(block, cfg, "online")?;
        blocks.push(BlockReport {
            block: b,
            offset,
            len,
            report: out.report.clone(),
        });
        outputs.push(out);
        offset += len;
    }
    let report = OnlineReport {
        command: "online".into(),
        dataset: cfg.dataset.display().to_string(),
        num_points: raw.len(),
        num_blocks: cfg.num_blocks,
        blocks,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, outputs))
}

/// k selection, encoding tree and agent allocation without any search.
pub fn allocate_dataset(raw: &Dataset, cfg: &RunConfig) -> Result<(AllocationReport, Vec<ExportedNode>)> {
    cfg.validate()?;
    let started = Instant::now();
    let data = if cfg.normalize { normalize(raw) } else { raw.clone() };
    let selection = select_k(data.points(), cfg.k_cap)?;
    let tree = optimize_two_level(&selection.graph)?;
    let allocation = allocate_agents(&tree, selection.k, cfg.alloc_eps, cfg.alloc_min_pts)?;
    let nodes = allocation
        .nodes
        .iter()
        .enumerate()
        .map(|(j, &id)| {
            Ok(NodeReport {
                node: id,
                size: tree.nodes[id].vertices.len(),
                entropy: tree.node_entropy(id)?,
                uncertainty: allocation.uncertainties[j],
                partition: allocation.node_partition[j],
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let report = AllocationReport {
        command: "allocate".into(),
        dataset: cfg.dataset.display().to_string(),
        num_points: data.len(),
        dim: data.dim(),
        k: selection.k,
        stable_points: selection.stable_points.clone(),
        entropy_curve: selection.curve.clone(),
        one_dim_entropy: one_dim_se(&selection.graph)?,
        tree_entropy: tree.tree_entropy(),
        num_agents: allocation.num_agents(),
        partition_sizes: allocation.partitions.iter().map(Vec::len).collect(),
        nodes,
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((report, export_tree(&tree, selection.k)))
}
