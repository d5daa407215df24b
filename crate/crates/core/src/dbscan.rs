//! Exact DBSCAN over Euclidean feature vectors.
//!
//! Neighbourhoods are closed balls (`distance <= eps`) and include the query
//! point itself, so a point is core iff its ball holds at least `min_pts`
//! points. Points are scanned in index order and clusters are expanded
//! breadth-first; a border point reachable from several clusters joins the
//! first one that reaches it.

use std::collections::VecDeque;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cluster id reserved for noise.
pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanParams {
    pub eps: f64,
    pub min_pts: usize,
}

impl DbscanParams {
    pub fn new(eps: f64, min_pts: usize) -> Result<Self> {
        if !(eps >= 0.0 && eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
        }
        if min_pts == 0 {
            return Err(Error::InvalidArgument("min_pts must be >= 1".into()));
        }
        Ok(Self { eps, min_pts })
    }

    /// Bitwise key, used to memoise clusterings per parameter pair.
    pub fn key(&self) -> (u64, usize) {
        (self.eps.to_bits(), self.min_pts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub assignment: Vec<i64>,
    pub num_clusters: usize,
}

impl ClusterResult {
    pub fn noise_count(&self) -> usize {
        self.assignment.iter().filter(|&&c| c == NOISE).count()
    }

    /// Member indices of every cluster, ordered by cluster id.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_clusters];
        for (i, &c) in self.assignment.iter().enumerate() {
            if c != NOISE {
                members[c as usize].push(i);
            }
        }
        members
    }
}

#[inline]
pub fn euclidean(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Range-query helper: points sorted along the first feature so each query
/// only inspects a slab `|x0 - q0| <= eps` before the exact distance test.
struct SlabIndex<'a> {
    points: ArrayView2<'a, f64>,
    order: Vec<usize>,
    keys: Vec<f64>,
}

impl<'a> SlabIndex<'a> {
    fn new(points: ArrayView2<'a, f64>) -> Self {
        let mut order: Vec<usize> = (0..points.nrows()).collect();
        order.sort_by(|&a, &b| points[[a, 0]].total_cmp(&points[[b, 0]]).then(a.cmp(&b)));
        let keys = order.iter().map(|&i| points[[i, 0]]).collect();
        Self { points, order, keys }
    }

    /// All `j` with `euclidean(p_i, p_j) <= eps`, in ascending index order.
    fn neighbours(&self, i: usize, eps: f64, out: &mut Vec<usize>) {
        out.clear();
        let q = self.points.row(i);
        let x0 = q[0];
        // Widened slab: sqrt of a rounded sum can land one ulp under |dx|.
        let slack = eps * 1e-12 + f64::MIN_POSITIVE;
        let lo = self.keys.partition_point(|&k| k < x0 - eps - slack);
        let hi = self.keys.partition_point(|&k| k <= x0 + eps + slack);
        for &j in &self.order[lo..hi] {
            if euclidean(q, self.points.row(j)) <= eps {
                out.push(j);
            }
        }
        out.sort_unstable();
    }
}

pub fn run_dbscan(points: ArrayView2<'_, f64>, params: DbscanParams) -> ClusterResult {
    let n = points.nrows();
    if n == 0 {
        return ClusterResult {
            assignment: Vec::new(),
            num_clusters: 0,
        };
    }
    let index = SlabIndex::new(points);
    let mut assignment = vec![NOISE; n];
    // Whether the point's neighbourhood has been examined.
    let mut visited = vec![false; n];
    let mut num_clusters = 0usize;
    let mut neighbours = Vec::new();
    let mut queue = VecDeque::new();

    for start in 0..n {
        if visited[start] {
            continue;
        }
        visited[start] = true;
        index.neighbours(start, params.eps, &mut neighbours);
        if neighbours.len() < params.min_pts {
            continue;
        }
        let cluster = num_clusters as i64;
        num_clusters += 1;
        assignment[start] = cluster;
        queue.clear();
        for &j in &neighbours {
            if assignment[j] == NOISE {
                assignment[j] = cluster;
                queue.push_back(j);
            }
        }
        while let Some(q) = queue.pop_front() {
            if visited[q] {
                continue;
            }
            visited[q] = true;
            index.neighbours(q, params.eps, &mut neighbours);
            if neighbours.len() < params.min_pts {
                continue;
            }
            for &j in &neighbours {
                if assignment[j] == NOISE {
                    assignment[j] = cluster;
                    queue.push_back(j);
                }
            }
        }
    }

    ClusterResult {
        assignment,
        num_clusters,
    }
}

/// Per-cluster summary used by the search state.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterCenter {
    /// Feature vector of the member closest to the cluster centroid.
    pub center: Vec<f64>,
    /// Distance from that member to the partition's own central object.
    pub center_distance: f64,
    pub size: usize,
}

/// Index of the member nearest to the centroid of `members`; ties go to the
/// lowest index.
pub fn central_object(points: ArrayView2<'_, f64>, members: &[usize]) -> Option<usize> {
    let (&first, _) = members.split_first()?;
    let dim = points.ncols();
    let mut centroid = vec![0.0; dim];
    for &i in members {
        for (c, x) in centroid.iter_mut().zip(points.row(i).iter()) {
            *c += x;
        }
    }
    let count = members.len() as f64;
    centroid.iter_mut().for_each(|c| *c /= count);
    let centroid = ArrayView1::from(&centroid);

    let mut best = first;
    let mut best_dist = f64::INFINITY;
    for &i in members {
        let d = euclidean(points.row(i), centroid);
        if d < best_dist || (d == best_dist && i < best) {
            best = i;
            best_dist = d;
        }
    }
    Some(best)
}

pub fn cluster_centers(points: ArrayView2<'_, f64>, result: &ClusterResult) -> Vec<ClusterCenter> {
    let all: Vec<usize> = (0..points.nrows()).collect();
    let Some(partition_center) = central_object(points, &all) else {
        return Vec::new();
    };
    result
        .members()
        .into_iter()
        .map(|members| {
            let c = central_object(points, &members).expect("clusters are non-empty");
            ClusterCenter {
                center: points.row(c).to_vec(),
                center_distance: euclidean(points.row(c), points.row(partition_center)),
                size: members.len(),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn params(eps: f64, min_pts: usize) -> DbscanParams {
        DbscanParams::new(eps, min_pts).unwrap()
    }

    #[test]
    fn empty_input() {
        let pts = Array2::<f64>::zeros((0, 2));
        let r = run_dbscan(pts.view(), params(0.5, 2));
        assert!(r.assignment.is_empty());
        assert_eq!(r.num_clusters, 0);
    }

    #[test]
    fn single_point_is_its_own_core() {
        let pts = array![[0.3, 0.3]];
        let r = run_dbscan(pts.view(), params(0.1, 1));
        assert_eq!(r.assignment, vec![0]);
    }

    #[test]
    fn min_pts_above_n_is_all_noise() {
        let pts = array![[0.0, 0.0], [0.0, 0.1], [0.1, 0.0]];
        let r = run_dbscan(pts.view(), params(10.0, 4));
        assert_eq!(r.assignment, vec![NOISE; 3]);
        assert_eq!(r.num_clusters, 0);
    }

    #[test]
    fn two_separated_groups() {
        let pts = array![
            [0.0, 0.0],
            [0.1, 0.0],
            [0.0, 0.1],
            [10.0, 0.0],
            [10.1, 0.0],
            [10.0, 0.1]
        ];
        let r = run_dbscan(pts.view(), params(0.5, 2));
        assert_eq!(r.num_clusters, 2);
        assert_eq!(r.assignment, vec![0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn eps_boundary_is_inclusive() {
        let pts = array![[0.0], [0.5]];
        let r = run_dbscan(pts.view(), params(0.5, 2));
        assert_eq!(r.assignment, vec![0, 0]);
    }

    #[test]
    fn border_joins_first_cluster() {
        // Point 3 is a border point of both dense triples.
        let pts = array![[0.0], [0.05], [0.1], [1.0], [1.9], [1.95], [2.0]];
        let r = run_dbscan(pts.view(), params(0.9, 4));
        assert_eq!(r.assignment, vec![0, 0, 0, 0, 1, 1, 1]);
    }

    #[test]
    fn zero_eps_groups_duplicates() {
        let pts = array![[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]];
        let r = run_dbscan(pts.view(), params(0.0, 2));
        assert_eq!(r.assignment, vec![0, 0, NOISE]);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DbscanParams::new(-0.1, 1).is_err());
        assert!(DbscanParams::new(f64::NAN, 1).is_err());
        assert!(DbscanParams::new(0.1, 0).is_err());
    }

    #[test]
    fn centers_tie_breaks_low_index() {
        let pts = array![[0.0, 0.0], [2.0, 0.0]];
        let res = ClusterResult {
            assignment: vec![0, 0],
            num_clusters: 1,
        };
        let centers = cluster_centers(pts.view(), &res);
        assert_eq!(centers.len(), 1);
        assert_eq!(centers[0].center, vec![0.0, 0.0]);
        assert_eq!(centers[0].size, 2);
        assert_eq!(centers[0].center_distance, 0.0);
    }

    #[test]
    fn singleton_cluster_center() {
        let pts = array![[0.0, 0.0], [1.0, 0.0], [5.0, 0.0]];
        let res = ClusterResult {
            assignment: vec![NOISE, NOISE, 0],
            num_clusters: 1,
        };
        let centers = cluster_centers(pts.view(), &res);
        assert_eq!(centers[0].center, vec![5.0, 0.0]);
        // Partition centroid is (2,0); its nearest member is (1,0).
        assert_eq!(centers[0].center_distance, 4.0);
        assert_eq!(centers[0].size, 1);
    }
}
