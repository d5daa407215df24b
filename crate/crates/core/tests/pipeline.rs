//! End-to-end behaviour of the search and the harness on synthetic data.

mod common;

use ardbscan::dataset::Dataset;
use ardbscan::harness::{allocate_dataset, baseline_dataset, cluster_dataset, online_dataset, ClusterOutput, Mode, RunConfig};
use ardbscan::search::{run_agent, SearchConfig};
use ardbscan::Error;
use serde_json::Value;

use common::*;

fn config(seeds: Vec<u64>) -> RunConfig {
    RunConfig {
        dataset: "synthetic".into(),
        seeds,
        ..RunConfig::default()
    }
}

fn metrics_only(out: &ClusterOutput) -> Value {
    let mut v = serde_json::to_value(&out.report.runs).unwrap();
    for run in v.as_array_mut().unwrap() {
        run.as_object_mut().unwrap().remove("wall_clock_secs");
    }
    v
}

#[test]
fn cluster_recovers_separated_blobs() {
    let ds = three_blobs(1);
    let out = cluster_dataset(&ds, &config(vec![0, 1]), "cluster").unwrap();
    let r = &out.report;
    assert_eq!(r.runs.len(), 2);
    assert_eq!(r.num_points, 180);
    assert!(r.k.is_some());
    assert_eq!(r.partition_sizes.iter().sum::<usize>(), 180);
    assert!(r.summary.nmi.mean > 0.9, "mean NMI {}", r.summary.nmi.mean);
    for run in &r.runs {
        assert_eq!(run.rounds.len(), 30);
        assert_eq!(run.agents.len(), run.num_agents);
        assert!(run.agents.iter().all(|a| a.rounds_used <= 30));
        assert!(run.stop_reasons.values().sum::<usize>() > 0);
    }
    assert_eq!(out.outcomes[0].assignment.len(), 180);
}

#[test]
fn round_series_length_follows_budget() {
    let ds = three_blobs(2);
    let cfg = RunConfig {
        max_rounds: 12,
        ..config(vec![3])
    };
    let out = cluster_dataset(&ds, &cfg, "cluster").unwrap();
    assert_eq!(out.report.runs[0].rounds.len(), 12);
    assert_eq!(out.report.summary.rounds.len(), 12);
}

#[test]
fn agent_series_is_historical_best() {
    let ds = ardbscan::dataset::normalize(&three_blobs(3));
    let idx: Vec<usize> = (0..ds.len()).collect();
    let cfg = SearchConfig::default();
    let a = run_agent(&ds, &idx, 0, &cfg, 9).unwrap();
    assert!(a.rounds_used() <= cfg.max_rounds && a.rounds_used() > 0);
    assert!(a.series.windows(2).all(|w| w[0].reward <= w[1].reward));
    assert_eq!(a.series.last().unwrap().reward, a.best_reward);
    assert!(a.layers.windows(2).all(|w| w[0].best_reward <= w[1].best_reward));
    for l in &a.layers[1..] {
        assert!(l.layer.bounds.contains(&l.layer.start));
    }
    let b = run_agent(&ds, &idx, 0, &cfg, 9).unwrap();
    assert_eq!(a.best_params, b.best_params);
    assert_eq!(a.final_result, b.final_result);
    let rewards = |r: &ardbscan::search::AgentResult| r.series.iter().map(|s| s.reward).collect::<Vec<_>>();
    assert_eq!(rewards(&a), rewards(&b));
}

#[test]
fn single_point_partition_is_handled() {
    let ds = three_blobs(4);
    let a = run_agent(&ds, &[7], 0, &SearchConfig::default(), 1).unwrap();
    assert_eq!(a.final_result.assignment.len(), 1);
    assert_eq!(a.best_params.min_pts, 1);
}

#[test]
fn identical_seeds_reproduce_metrics() {
    let ds = three_blobs(5);
    let cfg = config(vec![8]);
    let a = cluster_dataset(&ds, &cfg, "cluster").unwrap();
    let b = cluster_dataset(&ds, &cfg, "cluster").unwrap();
    assert_eq!(metrics_only(&a), metrics_only(&b));
    assert_eq!(a.outcomes[0].assignment, b.outcomes[0].assignment);
}

#[test]
fn one_block_online_equals_offline() {
    let ds = three_blobs(6);
    let cfg = RunConfig {
        mode: Mode::Online,
        num_blocks: 1,
        ..config(vec![2])
    };
    let offline = cluster_dataset(&ds, &cfg, "cluster").unwrap();
    let (online, outputs) = online_dataset(&ds, &cfg).unwrap();
    assert_eq!(online.blocks.len(), 1);
    assert_eq!(metrics_only(&offline), metrics_only(&outputs[0]));
}

#[test]
fn online_blocks_are_isolated() {
    let ds = three_blobs(7);
    let cfg = RunConfig {
        mode: Mode::Online,
        num_blocks: 3,
        layers: Some(2),
        ..config(vec![0])
    };
    let (report, outputs) = online_dataset(&ds, &cfg).unwrap();
    assert_eq!(report.blocks.len(), 3);
    let mut offset = 0;
    for (b, block) in report.blocks.iter().enumerate() {
        assert_eq!(block.offset, offset);
        assert_eq!(block.report.num_points, block.len);
        let rows: Vec<usize> = (offset..offset + block.len).collect();
        let alone = cluster_dataset(&ds.subset(&rows), &cfg, "online").unwrap();
        assert_eq!(metrics_only(&alone), metrics_only(&outputs[b]));
        offset += block.len;
    }
    assert_eq!(offset, ds.len());
}

#[test]
fn baseline_is_reproducible_and_budgeted() {
    let ds = three_blobs(8);
    let cfg = config(vec![1, 2]);
    let a = baseline_dataset(&ds, &cfg).unwrap();
    let b = baseline_dataset(&ds, &cfg).unwrap();
    assert_eq!(metrics_only(&a), metrics_only(&b));
    for run in &a.report.runs {
        assert_eq!(run.rounds.len(), 30);
        assert_eq!(run.agents[0].rounds_used, 30);
    }
    let zero = RunConfig { max_rounds: 0, ..cfg };
    let err = baseline_dataset(&ds, &zero).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
    assert!(err.to_string().contains("round budget must be positive"));
}

#[test]
fn single_agent_mode_skips_allocation() {
    let ds = three_blobs(9);
    let cfg = RunConfig {
        single_agent: true,
        ..config(vec![0])
    };
    let out = cluster_dataset(&ds, &cfg, "cluster").unwrap();
    assert_eq!(out.report.num_agents, 1);
    assert_eq!(out.report.k, None);
}

#[test]
fn too_small_or_unlabelled_data_is_rejected() {
    let one = Dataset::from_rows(vec![vec![0.0, 0.0]], Some(vec![0])).unwrap();
    assert!(matches!(cluster_dataset(&one, &config(vec![0]), "cluster"), Err(Error::DatasetTooSmall(_))));
    let unlabelled = Dataset::from_rows(vec![vec![0.0], vec![1.0], vec![2.0]], None).unwrap();
    assert!(matches!(cluster_dataset(&unlabelled, &config(vec![0]), "cluster"), Err(Error::MissingLabels)));
}

#[test]
fn allocation_report_is_complete() {
    let ds = blobs(10, &[(0.0, 0.0, 0.3, 80)]);
    let (report, tree) = allocate_dataset(&ds, &config(vec![0])).unwrap();
    assert_eq!(report.num_agents, 1);
    assert_eq!(report.partition_sizes, vec![80]);
    assert_eq!(report.entropy_curve.len(), 79);
    assert_eq!(report.nodes.len() + 1, tree.len());
    let v = serde_json::to_value(&report).unwrap();
    for key in ["k", "stable_points", "entropy_curve", "tree_entropy", "num_agents", "partition_sizes", "nodes"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}
