//! Experiment harness: configuration, orchestration, reports and output files.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;

use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

pub use config::{Mode, RunConfig};
pub use report::{AllocationReport, OnlineReport, RunReport, SeedRun, Stat, Summary};
pub use run::{
    allocate_dataset, baseline_dataset, cluster_dataset, load_dataset, online_dataset, prepare, run_seed, ClusterOutput,
    Prepared, SeedOutcome,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Cluster,
    Allocate,
    Online,
    Baseline,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(io_err(path))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// `point_index,cluster_id` rows with a header line; noise is `-1`.
pub fn write_assignment(path: &Path, assignment: &[i64]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    let to_io = |e: csv::Error| Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    w.write_record(["point_index", "cluster_id"]).map_err(to_io)?;
    for (i, c) in assignment.iter().enumerate() {
        w.write_record([i.to_string(), c.to_string()]).map_err(to_io)?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes `report.json`, the first seed's `assignment.csv` and optionally
/// `clusters.svg` and per-episode traces. With several seeds, traces go to
/// one `seed_<n>` directory per seed.
pub fn write_cluster_outputs(dir: &Path, output: &ClusterOutput, svg: bool, traces: bool) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_json(&dir.join("report.json"), &output.report)?;
    let Some(first) = output.outcomes.first() else {
        return Ok(());
    };
    write_assignment(&dir.join("assignment.csv"), &first.assignment)?;
    if svg {
        write_text(&dir.join("clusters.svg"), &svg::scatter_svg(output.data.points(), &first.assignment))?;
    }
    if traces {
        let several = output.outcomes.len() > 1;
        for o in &output.outcomes {
            let target: PathBuf = if several { dir.join(format!("seed_{}", o.run.seed)) } else { dir.to_path_buf() };
            std::fs::create_dir_all(&target).map_err(io_err(&target))?;
            for (agent, episodes) in o.traces.iter().enumerate() {
                for (e, t) in episodes.iter().enumerate() {
                    write_json(&target.join(format!("trace_{agent}_{e}.json")), t)?;
                }
            }
        }
    }
    Ok(())
}

/// Loads the dataset named by `cfg`, runs `command` and writes its outputs
/// under `out`.
pub fn execute(command: Command, cfg: &RunConfig, out: &Path, traces: bool) -> Result<()> {
    cfg.validate()?;
    let raw = load_dataset(cfg)?;
    match command {
        Command::Cluster => {
            let output = cluster_dataset(&raw, cfg, "cluster")?;
            write_cluster_outputs(out, &output, cfg.svg, traces)
        }
        Command::Baseline => {
            let output = baseline_dataset(&raw, cfg)?;
            write_cluster_outputs(out, &output, cfg.svg, traces)
        }
        Command::Online => {
            let (report, outputs) = online_dataset(&raw, cfg)?;
            std::fs::create_dir_all(out).map_err(io_err(out))?;
            write_json(&out.join("report.json"), &report)?;
            for (b, o) in outputs.iter().enumerate() {
                write_cluster_outputs(&out.join(format!("block_{b}")), o, cfg.svg, traces)?;
            }
            Ok(())
        }
        Command::Allocate => {
            let (report, tree) = allocate_dataset(&raw, cfg)?;
            std::fs::create_dir_all(out).map_err(io_err(out))?;
            write_json(&out.join("report.json"), &report)?;
            write_json(&out.join("tree.json"), &tree)
        }
    }
}
