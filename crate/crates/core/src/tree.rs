//! Two-level encoding trees: structural entropy, greedy optimisation with
//! merge/combine operators, information uncertainty and agent allocation.
//!
//! The optimiser works on communities (children of the root). A vertex that
//! hangs directly under the root has the same entropy as a one-vertex
//! community, so both cases share one closed-form entropy delta.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use log::debug;
use ndarray::Array2;
use serde::Serialize;

use crate::dbscan::{run_dbscan, DbscanParams, NOISE};
use crate::error::{Error, Result};
use crate::graph::StructuredGraph;

/// Minimum decrease for an operator to count as successful.
pub const STRICT_DECREASE: f64 = 1e-12;

pub const ROOT: usize = 0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeNode {
    pub parent: Option<usize>,
    pub children: Vec<usize>,
    /// Sorted graph vertices under this node.
    pub vertices: Vec<usize>,
    /// Total weight of edges leaving the vertex set.
    pub cut: f64,
    /// Sum of degrees of the vertex set.
    pub volume: f64,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.children.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncodingTree {
    pub nodes: Vec<TreeNode>,
    pub graph_volume: f64,
}

fn cut_of(adj: &[Vec<(usize, f64)>], vertices: &[usize], inside: &mut [bool]) -> f64 {
    for &v in vertices {
        inside[v] = true;
    }
    let mut cut = 0.0;
    for &v in vertices {
        for &(u, w) in &adj[v] {
            if !inside[u] {
                cut += w;
            }
        }
    }
    for &v in vertices {
        inside[v] = false;
    }
    cut
}

fn require_volume(g: &StructuredGraph) -> Result<()> {
    if g.volume > 0.0 {
        Ok(())
    } else {
        Err(Error::DegenerateGraph("graph volume is zero".into()))
    }
}

impl EncodingTree {
    /// Root with one leaf per vertex; leaf of vertex `v` has id `v + 1`.
    pub fn flat(g: &StructuredGraph) -> Result<Self> {
        require_volume(g)?;
        let mut nodes = vec![TreeNode {
            parent: None,
            children: (1..=g.n).collect(),
            vertices: (0..g.n).collect(),
            cut: 0.0,
            volume: g.volume,
        }];
        for v in 0..g.n {
            nodes.push(TreeNode {
                parent: Some(ROOT),
                children: Vec::new(),
                vertices: vec![v],
                cut: g.degrees[v],
                volume: g.degrees[v],
            });
        }
        Ok(Self {
            nodes,
            graph_volume: g.volume,
        })
    }

    /// Root, one intermediate node per community (in the given order), then
    /// the leaves of each community. Cuts and volumes are computed from `g`.
    pub fn from_partition(g: &StructuredGraph, communities: &[Vec<usize>]) -> Result<Self> {
        require_volume(g)?;
        let adj = g.adjacency();
        let mut inside = vec![false; g.n];
        let stats: Vec<(f64, f64)> = communities
            .iter()
            .map(|c| {
                let vol = c.iter().map(|&v| g.degrees[v]).sum();
                (cut_of(&adj, c, &mut inside), vol)
            })
            .collect();
        Self::assemble(g, communities, &stats)
    }

    fn assemble(g: &StructuredGraph, communities: &[Vec<usize>], stats: &[(f64, f64)]) -> Result<Self> {
        let mut seen = vec![false; g.n];
        for c in communities {
            if c.is_empty() {
                return Err(Error::InvalidTreeOp("empty community".into()));
            }
            for &v in c {
                if v >= g.n || std::mem::replace(&mut seen[v], true) {
                    return Err(Error::InvalidTreeOp(format!("vertex {v} repeated or out of range")));
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidTreeOp("communities do not cover the graph".into()));
        }
        let m = communities.len();
        let mut nodes = vec![TreeNode {
            parent: None,
            children: (1..=m).collect(),
            vertices: (0..g.n).collect(),
            cut: 0.0,
            volume: g.volume,
        }];
        let mut next_leaf = m + 1;
        for (c, &(cut, volume)) in communities.iter().zip(stats) {
            let mut vertices = c.clone();
            vertices.sort_unstable();
            let children = (next_leaf..next_leaf + vertices.len()).collect();
            next_leaf += vertices.len();
            nodes.push(TreeNode {
                parent: Some(ROOT),
                children,
                vertices,
                cut,
                volume,
            });
        }
        for c in 1..=m {
            for &v in &nodes[c].vertices.clone() {
                nodes.push(TreeNode {
                    parent: Some(c),
                    children: Vec::new(),
                    vertices: vec![v],
                    cut: g.degrees[v],
                    volume: g.degrees[v],
                });
            }
        }
        Ok(Self {
            nodes,
            graph_volume: g.volume,
        })
    }

    /// Copy of the tree with every cut and volume recomputed from `g`.
    pub fn recomputed(&self, g: &StructuredGraph) -> Self {
        let adj = g.adjacency();
        let mut inside = vec![false; g.n];
        let mut out = self.clone();
        for node in out.nodes.iter_mut() {
            node.volume = node.vertices.iter().map(|&v| g.degrees[v]).sum();
            node.cut = cut_of(&adj, &node.vertices, &mut inside);
        }
        out.graph_volume = g.volume;
        out
    }

    pub fn height(&self) -> usize {
        fn depth(t: &EncodingTree, id: usize) -> usize {
            t.nodes[id].children.iter().map(|&c| 1 + depth(t, c)).max().unwrap_or(0)
        }
        depth(self, ROOT)
    }

    /// Children of the root that are not leaves.
    pub fn intermediate_nodes(&self) -> Vec<usize> {
        self.nodes[ROOT]
            .children
            .iter()
            .copied()
            .filter(|&c| !self.nodes[c].is_leaf())
            .collect()
    }

    /// `-(g / vol) log2(V / V_parent)`.
    pub fn node_entropy(&self, id: usize) -> Result<f64> {
        let node = self
            .nodes
            .get(id)
            .ok_or_else(|| Error::InvalidTreeOp(format!("no node {id}")))?;
        let parent = node
            .parent
            .ok_or_else(|| Error::InvalidTreeOp("the root has no node entropy".into()))?;
        let parent_volume = self.nodes[parent].volume;
        if parent_volume <= 0.0 {
            return Err(Error::InvalidTreeOp(format!("parent of node {id} has zero volume")));
        }
        if node.cut == 0.0 {
            return Ok(0.0);
        }
        Ok(-(node.cut / self.graph_volume) * (node.volume / parent_volume).log2())
    }

    pub fn tree_entropy(&self) -> f64 {
        (1..self.nodes.len())
            .map(|id| self.node_entropy(id).expect("valid tree"))
            .sum()
    }

    /// Leaf vertex sets of the root's children, in child order.
    pub fn communities(&self) -> Vec<Vec<usize>> {
        self.nodes[ROOT]
            .children
            .iter()
            .map(|&c| self.nodes[c].vertices.clone())
            .collect()
    }

    fn check_siblings(&self, a: usize, b: usize) -> Result<usize> {
        if a == b {
            return Err(Error::InvalidTreeOp("operator needs two distinct nodes".into()));
        }
        let parent_of = |id: usize| -> Result<usize> {
            self.nodes
                .get(id)
                .ok_or_else(|| Error::InvalidTreeOp(format!("no node {id}")))?
                .parent
                .ok_or_else(|| Error::InvalidTreeOp("the root cannot be an operand".into()))
        };
        let (pa, pb) = (parent_of(a)?, parent_of(b)?);
        if pa != pb {
            return Err(Error::InvalidTreeOp(format!("nodes {a} and {b} are not siblings")));
        }
        Ok(pa)
    }

    /// Places the leaves of `a` and `b` under one subtree. Two root-level
    /// leaves are given a new common parent, as with combining.
    pub fn merge_operator(&self, g: &StructuredGraph, a: usize, b: usize) -> Result<(Self, f64)> {
        let parent = self.check_siblings(a, b)?;
        if parent != ROOT {
            return Err(Error::InvalidTreeOp("merging below an intermediate node exceeds height 2".into()));
        }
        let (leaf_a, leaf_b) = (self.nodes[a].is_leaf(), self.nodes[b].is_leaf());
        if leaf_a && leaf_b {
            return self.combine_operator(g, a, b);
        }
        let mut groups = self.communities_with_singletons();
        let ga = self.group_index(&groups, a);
        let gb = self.group_index(&groups, b);
        let (keep, drop) = (ga.min(gb), ga.max(gb));
        let moved = groups.remove(drop);
        groups[keep].1.extend(moved.1);
        groups[keep].0 = true;
        self.rebuilt(g, groups)
    }

    /// Creates a new intermediate node holding the root-level leaves `a`, `b`.
    pub fn combine_operator(&self, g: &StructuredGraph, a: usize, b: usize) -> Result<(Self, f64)> {
        let parent = self.check_siblings(a, b)?;
        if parent != ROOT || !self.nodes[a].is_leaf() || !self.nodes[b].is_leaf() {
            return Err(Error::InvalidTreeOp("combining here exceeds height 2".into()));
        }
        let mut groups = self.communities_with_singletons();
        let ga = self.group_index(&groups, a);
        let gb = self.group_index(&groups, b);
        let (keep, drop) = (ga.min(gb), ga.max(gb));
        let moved = groups.remove(drop);
        groups[keep].1.extend(moved.1);
        groups[keep].0 = true;
        self.rebuilt(g, groups)
    }

    /// Root children as `(is_intermediate, vertices)`.
    fn communities_with_singletons(&self) -> Vec<(bool, Vec<usize>)> {
        self.nodes[ROOT]
            .children
            .iter()
            .map(|&c| (!self.nodes[c].is_leaf(), self.nodes[c].vertices.clone()))
            .collect()
    }

    fn group_index(&self, groups: &[(bool, Vec<usize>)], id: usize) -> usize {
        let first = self.nodes[id].vertices[0];
        groups
            .iter()
            .position(|(_, vs)| vs.contains(&first))
            .expect("node is a root child")
    }

    /// Rebuilds a tree from root-level groups and reports the entropy change,
    /// both evaluated from scratch.
    fn rebuilt(&self, g: &StructuredGraph, groups: Vec<(bool, Vec<usize>)>) -> Result<(Self, f64)> {
        let before = self.recomputed(g).tree_entropy();
        let adj = g.adjacency();
        let mut inside = vec![false; g.n];
        let mut nodes = vec![TreeNode {
            parent: None,
            children: Vec::new(),
            vertices: (0..g.n).collect(),
            cut: 0.0,
            volume: g.volume,
        }];
        for (intermediate, mut vertices) in groups {
            vertices.sort_unstable();
            let id = nodes.len();
            nodes[ROOT].children.push(id);
            let volume = vertices.iter().map(|&v| g.degrees[v]).sum();
            let cut = cut_of(&adj, &vertices, &mut inside);
            nodes.push(TreeNode {
                parent: Some(ROOT),
                children: Vec::new(),
                vertices: vertices.clone(),
                cut,
                volume,
            });
            if intermediate {
                for v in vertices {
                    let leaf = nodes.len();
                    nodes[id].children.push(leaf);
                    nodes.push(TreeNode {
                        parent: Some(id),
                        children: Vec::new(),
                        vertices: vec![v],
                        cut: g.degrees[v],
                        volume: g.degrees[v],
                    });
                }
            }
        }
        let tree = Self {
            nodes,
            graph_volume: g.volume,
        };
        let delta = tree.tree_entropy() - before;
        Ok((tree, delta))
    }
}

/// Which operator produced a greedy step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OperatorKind {
    Merge,
    Combine,
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizationStep {
    pub kind: OperatorKind,
    pub delta: f64,
    pub entropy_after: f64,
}

#[derive(Debug, Clone)]
pub struct OptimizedTree {
    pub tree: EncodingTree,
    pub initial_entropy: f64,
    pub steps: Vec<OptimizationStep>,
}

struct Community {
    vertices: Vec<usize>,
    cut: f64,
    volume: f64,
    min_vertex: usize,
    version: u32,
    alive: bool,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    delta: f64,
    tie: (usize, usize),
    a: usize,
    b: usize,
    version_a: u32,
    version_b: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    /// Reversed so the max-heap yields the most negative delta first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .delta
            .total_cmp(&self.delta)
            .then(other.tie.cmp(&self.tie))
            .then(other.version_a.cmp(&self.version_a))
            .then(other.version_b.cmp(&self.version_b))
    }
}

/// Per-community part of the tree entropy that changes under merging:
/// `-g log2(V / vol) + V log2 V`, before division by `vol`.
fn community_term(cut: f64, volume: f64, vol: f64) -> f64 {
    let cut_term = if cut > 0.0 { -cut * (volume / vol).log2() } else { 0.0 };
    cut_term + if volume > 0.0 { volume * volume.log2() } else { 0.0 }
}

/// Entropy change of joining two communities sharing weight `between`.
fn merge_delta(a: (f64, f64), b: (f64, f64), between: f64, vol: f64) -> f64 {
    let cut = (a.0 + b.0 - 2.0 * between).max(0.0);
    let volume = a.1 + b.1;
    (community_term(cut, volume, vol) - community_term(a.0, a.1, vol) - community_term(b.0, b.1, vol)) / vol
}

/// Greedy best-first minimisation of the two-level tree entropy.
pub fn optimize_two_level(g: &StructuredGraph) -> Result<EncodingTree> {
    Ok(optimize_two_level_traced(g)?.tree)
}

pub fn optimize_two_level_traced(g: &StructuredGraph) -> Result<OptimizedTree> {
    require_volume(g)?;
    let vol = g.volume;
    let initial_entropy = EncodingTree::flat(g)?.tree_entropy();
    let mut comms: Vec<Community> = (0..g.n)
        .map(|v| Community {
            vertices: vec![v],
            cut: g.degrees[v],
            volume: g.degrees[v],
            min_vertex: v,
            version: 0,
            alive: true,
        })
        .collect();
    let mut links: Vec<HashMap<usize, f64>> = vec![HashMap::new(); g.n];
    for e in &g.edges {
        *links[e.u].entry(e.v).or_insert(0.0) += e.weight;
        *links[e.v].entry(e.u).or_insert(0.0) += e.weight;
    }

    let candidate = |comms: &[Community], a: usize, b: usize, w: f64| {
        let (ca, cb) = (&comms[a], &comms[b]);
        let lo = ca.min_vertex.min(cb.min_vertex);
        let hi = ca.min_vertex.max(cb.min_vertex);
        Candidate {
            delta: merge_delta((ca.cut, ca.volume), (cb.cut, cb.volume), w, vol),
            tie: (lo, hi),
            a,
            b,
            version_a: ca.version,
            version_b: cb.version,
        }
    };

    let mut heap = BinaryHeap::new();
    for e in &g.edges {
        let w = links[e.u][&e.v];
        let c = candidate(&comms, e.u, e.v, w);
        if c.delta < -STRICT_DECREASE {
            heap.push(c);
        }
    }

    let mut entropy = initial_entropy;
    let mut steps = Vec::new();
    while let Some(c) = heap.pop() {
        let (ca, cb) = (&comms[c.a], &comms[c.b]);
        if !ca.alive || !cb.alive || ca.version != c.version_a || cb.version != c.version_b {
            continue;
        }
        let kind = if ca.vertices.len() == 1 && cb.vertices.len() == 1 {
            OperatorKind::Combine
        } else {
            OperatorKind::Merge
        };
        // Absorb the community with fewer links into the other.
        let (keep, gone) = if links[c.a].len() >= links[c.b].len() {
            (c.a, c.b)
        } else {
            (c.b, c.a)
        };
        let between = links[keep].remove(&gone).unwrap_or(0.0);
        let gone_links = std::mem::take(&mut links[gone]);
        for (&other, &w) in &gone_links {
            if other == keep {
                continue;
            }
            let back = links[other].remove(&gone).expect("links are symmetric");
            debug_assert_eq!(back, w);
            *links[other].entry(keep).or_insert(0.0) += w;
            *links[keep].entry(other).or_insert(0.0) += w;
        }
        let moved = std::mem::take(&mut comms[gone].vertices);
        comms[gone].alive = false;
        comms[gone].version += 1;
        let (gc, gv, gm) = (comms[gone].cut, comms[gone].volume, comms[gone].min_vertex);
        let k = &mut comms[keep];
        k.vertices.extend(moved);
        k.cut = (k.cut + gc - 2.0 * between).max(0.0);
        k.volume += gv;
        k.min_vertex = k.min_vertex.min(gm);
        k.version += 1;

        entropy += c.delta;
        steps.push(OptimizationStep {
            kind,
            delta: c.delta,
            entropy_after: entropy,
        });

        let mut neighbours: Vec<(usize, f64)> = links[keep].iter().map(|(&o, &w)| (o, w)).collect();
        neighbours.sort_unstable_by_key(|p| p.0);
        for (other, w) in neighbours {
            let cand = candidate(&comms, keep, other, w);
            if cand.delta < -STRICT_DECREASE {
                heap.push(cand);
            }
        }
    }

    let mut alive: Vec<&Community> = comms.iter().filter(|c| c.alive).collect();
    alive.sort_by_key(|c| c.min_vertex);
    let communities: Vec<Vec<usize>> = alive.iter().map(|c| c.vertices.clone()).collect();
    let stats: Vec<(f64, f64)> = alive.iter().map(|c| (c.cut, c.volume)).collect();
    let tree = EncodingTree::assemble(g, &communities, &stats)?;
    debug!(
        "encoding tree: {} operators, {} intermediate nodes, entropy {:.6} -> {:.6}",
        steps.len(),
        communities.len(),
        initial_entropy,
        entropy
    );
    Ok(OptimizedTree {
        tree,
        initial_entropy,
        steps,
    })
}

/// Node entropy normalised by child count and the graph's `k`.
pub fn information_uncertainty(tree: &EncodingTree, id: usize, k: usize) -> Result<f64> {
    let node = tree
        .nodes
        .get(id)
        .ok_or_else(|| Error::InvalidTreeOp(format!("no node {id}")))?;
    if node.parent.is_none() || node.is_leaf() {
        return Err(Error::InvalidTreeOp(format!("node {id} is not an intermediate node")));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    Ok(tree.node_entropy(id)? / (node.children.len() as f64 * k as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgentAllocation {
    /// Disjoint sorted vertex sets covering the graph, one per agent.
    pub partitions: Vec<Vec<usize>>,
    /// Intermediate node ids, in the order their uncertainties are listed.
    pub nodes: Vec<usize>,
    pub uncertainties: Vec<f64>,
    /// Partition index of each listed intermediate node.
    pub node_partition: Vec<usize>,
}

impl AgentAllocation {
    /// A single partition holding all `n` vertices.
    pub fn single(n: usize) -> Self {
        Self {
            partitions: vec![(0..n).collect()],
            nodes: Vec::new(),
            uncertainties: Vec::new(),
            node_partition: Vec::new(),
        }
    }

    pub fn num_agents(&self) -> usize {
        self.partitions.len()
    }
}

/// Groups positions of `values` by 1-D DBSCAN: one group per cluster in
/// cluster order, then one group per noise value.
pub fn group_uncertainties(values: &[f64], eps: f64, min_pts: usize) -> Result<Vec<Vec<usize>>> {
    let column = Array2::from_shape_vec((values.len(), 1), values.to_vec()).expect("column vector shape");
    let clustering = run_dbscan(column.view(), DbscanParams::new(eps, min_pts)?);
    let mut groups = clustering.members();
    for (i, &label) in clustering.assignment.iter().enumerate() {
        if label == NOISE {
            groups.push(vec![i]);
        }
    }
    Ok(groups)
}

/// Clusters the intermediate nodes by 1-D DBSCAN over their uncertainty and
/// pools the leaves of each cluster into one partition. Nodes left as noise
/// each form their own partition.
pub fn allocate_agents(tree: &EncodingTree, k: usize, alloc_eps: f64, alloc_min_pts: usize) -> Result<AgentAllocation> {
    let nodes = tree.intermediate_nodes();
    let root_leaves: Vec<usize> = tree.nodes[ROOT]
        .children
        .iter()
        .copied()
        .filter(|&c| tree.nodes[c].is_leaf())
        .collect();
    let uncertainties = nodes
        .iter()
        .map(|&id| information_uncertainty(tree, id, k))
        .collect::<Result<Vec<f64>>>()?;
    let groups = group_uncertainties(&uncertainties, alloc_eps, alloc_min_pts)?;
    let mut partitions: Vec<Vec<usize>> = Vec::with_capacity(groups.len());
    let mut node_partition = vec![0; nodes.len()];
    for (p, group) in groups.iter().enumerate() {
        let mut vertices = Vec::new();
        for &i in group {
            vertices.extend_from_slice(&tree.nodes[nodes[i]].vertices);
            node_partition[i] = p;
        }
        partitions.push(vertices);
    }
    // Vertices left directly under the root form one extra partition.
    if !root_leaves.is_empty() {
        partitions.push(root_leaves.iter().map(|&id| tree.nodes[id].vertices[0]).collect());
    }
    for p in &mut partitions {
        p.sort_unstable();
    }
    Ok(AgentAllocation {
        partitions,
        nodes,
        uncertainties,
        node_partition,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ExportedNode {
    pub id: usize,
    pub parent: Option<usize>,
    pub vertices: Vec<usize>,
    pub entropy: Option<f64>,
    pub uncertainty: Option<f64>,
}

/// Root and intermediate nodes, for the `allocate` command's JSON output.
pub fn export_tree(tree: &EncodingTree, k: usize) -> Vec<ExportedNode> {
    std::iter::once(ROOT)
        .chain(tree.intermediate_nodes())
        .map(|id| ExportedNode {
            id,
            parent: tree.nodes[id].parent,
            vertices: tree.nodes[id].vertices.clone(),
            entropy: tree.node_entropy(id).ok(),
            uncertainty: information_uncertainty(tree, id, k).ok(),
        })
        .collect()
}
