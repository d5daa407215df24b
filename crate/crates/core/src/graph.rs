//! Weighted k-NN structured graph and selection of `k` by normalized
//! one-dimensional structural entropy.
//!
//! An undirected edge `{i, j}` exists when either endpoint lists the other
//! among its `k` nearest neighbours (ties at equal distance go to the lower
//! index). Edge weights are `exp(-D_ij * |E| / sum_E D)`, so the mean scaled
//! distance over the edge set is exactly one.

use std::collections::BTreeSet;

use log::debug;
use ndarray::{Array2, ArrayView2};
use serde::Serialize;

use crate::dbscan::euclidean;
use crate::error::{Error, Result};

/// Default upper limit of the k sweep.
pub const DEFAULT_K_CAP: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Edge {
    pub u: usize,
    pub v: usize,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructuredGraph {
    pub n: usize,
    pub k: usize,
    /// Undirected edges with `u < v`, sorted by `(u, v)`.
    pub edges: Vec<Edge>,
    pub degrees: Vec<f64>,
    pub volume: f64,
}

impl StructuredGraph {
    /// Builds a graph from unweighted pairs and their distances, applying the
    /// normalized exponential weighting.
    pub fn from_distances(n: usize, k: usize, pairs: Vec<(usize, usize, f64)>) -> Self {
        let total: f64 = pairs.iter().map(|p| p.2).sum();
        let scale = edge_scale(pairs.len(), total);
        let mut edges: Vec<Edge> = pairs
            .into_iter()
            .map(|(a, b, d)| Edge {
                u: a.min(b),
                v: a.max(b),
                distance: d,
                weight: (-d * scale).exp(),
            })
            .collect();
        edges.sort_by_key(|e| (e.u, e.v));
        Self::with_edges(n, k, edges)
    }

    /// Builds a graph from explicitly weighted edges.
    pub fn with_edges(n: usize, k: usize, edges: Vec<Edge>) -> Self {
        let mut degrees = vec![0.0; n];
        for e in &edges {
            degrees[e.u] += e.weight;
            degrees[e.v] += e.weight;
        }
        let volume = degrees.iter().sum();
        Self {
            n,
            k,
            edges,
            degrees,
            volume,
        }
    }

    /// Weighted adjacency lists.
    pub fn adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.n];
        for e in &self.edges {
            adj[e.u].push((e.v, e.weight));
            adj[e.v].push((e.u, e.weight));
        }
        adj
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }
}

/// `|E| / sum D`; identical points (zero total distance) give unit weights.
fn edge_scale(num_edges: usize, total_distance: f64) -> f64 {
    if total_distance > 0.0 {
        num_edges as f64 / total_distance
    } else {
        0.0
    }
}

pub fn pairwise_distances(points: ArrayView2<'_, f64>) -> Array2<f64> {
    let n = points.nrows();
    let mut d = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let dist = euclidean(points.row(i), points.row(j));
            d[[i, j]] = dist;
            d[[j, i]] = dist;
        }
    }
    d
}

/// Nearest neighbours of every point, ascending by `(distance, index)`,
/// truncated to `cap` entries.
#[derive(Debug, Clone)]
pub struct NeighborLists {
    lists: Vec<Vec<(f64, u32)>>,
}

impl NeighborLists {
    pub fn new(points: ArrayView2<'_, f64>, cap: usize) -> Self {
        let n = points.nrows();
        let cap = cap.min(n.saturating_sub(1));
        let mut row = Vec::with_capacity(n);
        let lists = (0..n)
            .map(|i| {
                row.clear();
                row.extend(
                    (0..n)
                        .filter(|&j| j != i)
                        .map(|j| (euclidean(points.row(i), points.row(j)), j as u32)),
                );
                let cmp = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
                if cap < row.len() {
                    row.select_nth_unstable_by(cap, cmp);
                    row.truncate(cap);
                }
                row.sort_unstable_by(cmp);
                row.clone()
            })
            .collect();
        Self { lists }
    }

    pub fn cap(&self) -> usize {
        self.lists.first().map_or(0, Vec::len)
    }

    pub fn list(&self, i: usize) -> &[(f64, u32)] {
        &self.lists[i]
    }

    /// Rank of `target` in the list of `owner`, if present.
    fn rank_of(&self, owner: usize, target: usize, distance: f64) -> Option<usize> {
        let list = &self.lists[owner];
        list.binary_search_by(|probe| {
            probe
                .0
                .total_cmp(&distance)
                .then(probe.1.cmp(&(target as u32)))
        })
        .ok()
    }

    /// Every undirected edge reachable within the cap together with the
    /// smallest `k` at which it appears, sorted by `(birth, u, v)`.
    fn edges_by_birth(&self) -> Vec<BornEdge> {
        let mut edges = Vec::new();
        for (i, list) in self.lists.iter().enumerate() {
            for (r, &(d, j)) in list.iter().enumerate() {
                let j = j as usize;
                let owns = match self.rank_of(j, i, d) {
                    None => true,
                    Some(rj) => r < rj || (r == rj && i < j),
                };
                if owns {
                    edges.push(BornEdge {
                        birth: r as u32 + 1,
                        u: i.min(j) as u32,
                        v: i.max(j) as u32,
                        distance: d,
                    });
                }
            }
        }
        edges.sort_unstable_by_key(|e| (e.birth, e.u, e.v));
        edges
    }
}

#[derive(Debug, Clone, Copy)]
struct BornEdge {
    birth: u32,
    u: u32,
    v: u32,
    distance: f64,
}

pub fn build_knn_graph(points: ArrayView2<'_, f64>, k: usize) -> Result<StructuredGraph> {
    let n = points.nrows();
    if k == 0 || k >= n {
        return Err(Error::InvalidArgument(format!(
            "k must lie in [1, {}], got {k}",
            n.saturating_sub(1)
        )));
    }
    let lists = NeighborLists::new(points, k);
    Ok(graph_from_lists(&lists, k))
}

fn graph_from_lists(lists: &NeighborLists, k: usize) -> StructuredGraph {
    let n = lists.lists.len();
    let mut pairs = BTreeSet::new();
    let mut pair_dist = Vec::new();
    for i in 0..n {
        for &(d, j) in lists.list(i).iter().take(k) {
            let j = j as usize;
            if pairs.insert((i.min(j), i.max(j))) {
                pair_dist.push((i.min(j), i.max(j), d));
            }
        }
    }
    StructuredGraph::from_distances(n, k, pair_dist)
}

fn entropy_of_degrees(degrees: &[f64], volume: f64) -> f64 {
    degrees
        .iter()
        .filter(|&&d| d > 0.0)
        .map(|&d| {
            let p = d / volume;
            -p * p.log2()
        })
        .sum()
}

/// One-dimensional structural entropy `-sum (d_v/vol) log2(d_v/vol)`.
pub fn one_dim_se(g: &StructuredGraph) -> Result<f64> {
    if g.volume <= 0.0 {
        return Err(Error::DegenerateGraph("graph volume is zero".into()));
    }
    Ok(entropy_of_degrees(&g.degrees, g.volume))
}

pub fn normalized_one_dim_se(g: &StructuredGraph) -> Result<f64> {
    Ok(one_dim_se(g)? / (g.k as f64 * g.n as f64))
}

#[derive(Debug, Clone)]
pub struct KSelection {
    pub k: usize,
    pub graph: StructuredGraph,
    /// Interior local minima of the normalized entropy curve.
    pub stable_points: Vec<usize>,
    /// `curve[k - 1]` is the normalized entropy of the k-NN graph.
    pub curve: Vec<f64>,
}

/// Normalized entropy for every `k` in `1..=cap`, sharing one neighbour pass.
pub fn normalized_entropy_curve(lists: &NeighborLists, n: usize) -> Vec<f64> {
    let edges = lists.edges_by_birth();
    let max_k = lists.cap();
    let mut curve = Vec::with_capacity(max_k);
    let mut degrees = vec![0.0; n];
    let mut end = 0usize;
    let mut total_distance = 0.0;
    for k in 1..=max_k {
        while end < edges.len() && edges[end].birth as usize <= k {
            total_distance += edges[end].distance;
            end += 1;
        }
        let scale = edge_scale(end, total_distance);
        degrees.iter_mut().for_each(|d| *d = 0.0);
        for e in &edges[..end] {
            let w = (-e.distance * scale).exp();
            degrees[e.u as usize] += w;
            degrees[e.v as usize] += w;
        }
        let volume: f64 = degrees.iter().sum();
        let h = entropy_of_degrees(&degrees, volume);
        curve.push(h / (k as f64 * n as f64));
    }
    curve
}

/// Stable points: `k` whose value is strictly below both neighbours.
pub fn stable_points(curve: &[f64]) -> Vec<usize> {
    (1..curve.len().saturating_sub(1))
        .filter(|&i| curve[i] < curve[i - 1] && curve[i] < curve[i + 1])
        .map(|i| i + 1)
        .collect()
}

/// Picks `k` as the stable point of least normalized entropy, falling back
/// to the global minimiser when the curve has no interior minimum.
pub fn choose_k(curve: &[f64]) -> Option<(usize, Vec<usize>)> {
    let stable = stable_points(curve);
    let by_value = |a: &usize, b: &usize| curve[*a - 1].total_cmp(&curve[*b - 1]).then(a.cmp(b));
    let k = if stable.is_empty() {
        (1..=curve.len()).min_by(by_value)?
    } else {
        *stable.iter().min_by(|a, b| by_value(a, b))?
    };
    Some((k, stable))
}

pub fn select_k(points: ArrayView2<'_, f64>, k_cap: usize) -> Result<KSelection> {
    let n = points.nrows();
    if n < 3 {
        return Err(Error::DatasetTooSmall(
            "too few points for stable-point detection".into(),
        ));
    }
    let lists = NeighborLists::new(points, k_cap.max(1));
    let curve = normalized_entropy_curve(&lists, n);
    let (k, stable) = choose_k(&curve).expect("curve is non-empty for n >= 3");
    debug!("k sweep over 1..={}: stable points {stable:?}, selected k={k}", curve.len());
    let graph = graph_from_lists(&lists, k);
    Ok(KSelection {
        k,
        graph,
        stable_points: stable,
        curve,
    })
}
