//! Independent reference implementations and fixtures shared by the
//! integration tests.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use ardbscan::dataset::Dataset;
use ardbscan::dbscan::{ClusterResult, DbscanParams, NOISE};
use ardbscan::graph::StructuredGraph;
use ardbscan::nn::Mlp;
use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Gaussian blobs `(cx, cy, sigma, count)`, labelled by blob index.
pub fn blobs(seed: u64, specs: &[(f64, f64, f64, usize)]) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, &(x, y, s, count)) in specs.iter().enumerate() {
        let nx = Normal::new(x, s).unwrap();
        let ny = Normal::new(y, s).unwrap();
        for _ in 0..count {
            rows.push(vec![nx.sample(&mut rng), ny.sample(&mut rng)]);
            labels.push(c as i64);
        }
    }
    Dataset::from_rows(rows, Some(labels)).unwrap()
}

pub fn three_blobs(seed: u64) -> Dataset {
    blobs(seed, &[(0.0, 0.0, 0.5, 60), (5.0, 5.0, 0.5, 60), (0.0, 6.0, 1.0, 60)])
}

/// Directory holding benchmark CSVs: `ARDBSCAN_DATA_DIR`, else `data/` at the
/// workspace root.
pub fn data_dir() -> PathBuf {
    std::env::var_os("ARDBSCAN_DATA_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| std::path::Path::new(env!("CARGO_MANIFEST_DIR")).ancestors().nth(2).expect("workspace root").join("data"))
}

pub fn data_file(name: &str) -> Option<PathBuf> {
    let p = data_dir().join(format!("{name}.csv"));
    p.exists().then_some(p)
}

pub fn uniform_points(rng: &mut impl Rng, n: usize, d: usize) -> Array2<f64> {
    Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0))
}

/// O(n^2) density-connectivity check of a DBSCAN result. Core points must
/// form exactly the connected components of the core graph, noise must be
/// exactly the points with no core point in range, and every border point
/// must sit in the cluster of one of its core neighbours.
pub fn check_dbscan(points: ArrayView2<'_, f64>, params: DbscanParams, result: &ClusterResult) -> Result<(), String> {
    let n = points.nrows();
    let dist = |i: usize, j: usize| {
        points
            .row(i)
            .iter()
            .zip(points.row(j))
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    let near: Vec<Vec<usize>> = (0..n).map(|i| (0..n).filter(|&j| dist(i, j) <= params.eps).collect()).collect();
    let core: Vec<bool> = near.iter().map(|nb| nb.len() >= params.min_pts).collect();

    // Components of the core graph by union-find.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for i in 0..n {
        if core[i] {
            for &j in &near[i] {
                if core[j] {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    parent[a] = b;
                }
            }
        }
    }

    let a = &result.assignment;
    if a.len() != n {
        return Err("assignment length".into());
    }
    // Core components must map one-to-one onto cluster ids.
    let mut comp_to_id: HashMap<usize, i64> = HashMap::new();
    let mut id_to_comp: HashMap<i64, usize> = HashMap::new();
    for i in (0..n).filter(|&i| core[i]) {
        let c = find(&mut parent, i);
        if a[i] == NOISE {
            return Err(format!("core point {i} labelled noise"));
        }
        if *comp_to_id.entry(c).or_insert(a[i]) != a[i] || *id_to_comp.entry(a[i]).or_insert(c) != c {
            return Err(format!("core point {i} breaks the component bijection"));
        }
    }
    for i in (0..n).filter(|&i| !core[i]) {
        let reachable: Vec<i64> = near[i].iter().filter(|&&j| core[j]).map(|&j| a[j]).collect();
        match (reachable.is_empty(), a[i]) {
            (true, NOISE) => {}
            (true, l) => return Err(format!("point {i} has no core neighbour but label {l}")),
            (false, l) if reachable.contains(&l) => {}
            (false, l) => return Err(format!("border point {i} labelled {l}, admissible {reachable:?}")),
        }
    }
    let ids: std::collections::BTreeSet<i64> = a.iter().copied().filter(|&l| l != NOISE).collect();
    if ids.len() != result.num_clusters || ids.iter().any(|&l| l < 0 || l as usize >= result.num_clusters) {
        return Err("cluster ids are not 0..num_clusters".into());
    }
    Ok(())
}

/// ARI from pair counts over all point pairs.
pub fn pair_count_ari(x: &[i64], y: &[i64]) -> f64 {
    let (mut a, mut b, mut c, mut d) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..x.len() {
        for j in i + 1..x.len() {
            match (x[i] == x[j], y[i] == y[j]) {
                (true, true) => a += 1.0,
                (true, false) => b += 1.0,
                (false, true) => c += 1.0,
                (false, false) => d += 1.0,
            }
        }
    }
    let den = (a + b) * (b + d) + (a + c) * (c + d);
    if den == 0.0 {
        1.0
    } else {
        2.0 * (a * d - b * c) / den
    }
}

/// NMI with arithmetic-mean normalisation, natural logarithms.
pub fn reference_nmi(x: &[i64], y: &[i64]) -> f64 {
    let n = x.len() as f64;
    let mut joint: BTreeMap<(i64, i64), f64> = BTreeMap::new();
    let mut px: BTreeMap<i64, f64> = BTreeMap::new();
    let mut py: BTreeMap<i64, f64> = BTreeMap::new();
    for (&a, &b) in x.iter().zip(y) {
        *joint.entry((a, b)).or_default() += 1.0;
        *px.entry(a).or_default() += 1.0;
        *py.entry(b).or_default() += 1.0;
    }
    let h = |m: &BTreeMap<i64, f64>| -m.values().map(|&c| c / n * (c / n).ln()).sum::<f64>();
    let (hx, hy) = (h(&px), h(&py));
    if px.len() == 1 && py.len() == 1 {
        return 1.0;
    }
    if hx == 0.0 || hy == 0.0 {
        return 0.0;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(a, b), &c)| c / n * ((c / n) / (px[&a] / n * py[&b] / n)).ln())
        .sum();
    mi / ((hx + hy) / 2.0)
}

/// Every set partition of `0..n` as a label vector (restricted growth strings).
pub fn all_labelings(n: usize) -> Vec<Vec<i64>> {
    fn rec(cur: &mut Vec<i64>, max: i64, n: usize, out: &mut Vec<Vec<i64>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        for l in 0..=max + 1 {
            cur.push(l);
            rec(cur, max.max(l), n, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n == 0 {
        return vec![Vec::new()];
    }
    rec(&mut vec![0], 0, n, &mut out);
    out
}

pub fn labels_to_parts(labels: &[i64]) -> Vec<Vec<usize>> {
    let mut parts: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        parts.entry(l).or_default().push(i);
    }
    parts.into_values().collect()
}

/// Two-level structural entropy of `g` under the community partition `parts`.
pub fn partition_entropy(g: &StructuredGraph, parts: &[Vec<usize>]) -> f64 {
    let vol = g.volume;
    let mut owner = vec![usize::MAX; g.n];
    for (c, p) in parts.iter().enumerate() {
        for &v in p {
            owner[v] = c;
        }
    }
    let mut cut = vec![0.0; parts.len()];
    for e in &g.edges {
        if owner[e.u] != owner[e.v] {
            cut[owner[e.u]] += e.weight;
            cut[owner[e.v]] += e.weight;
        }
    }
    let mut h = 0.0;
    for (c, p) in parts.iter().enumerate() {
        let vc: f64 = p.iter().map(|&v| g.degrees[v]).sum();
        if vc > 0.0 {
            h -= cut[c] / vol * (vc / vol).log2();
        }
        for &v in p {
            let d = g.degrees[v];
            if d > 0.0 {
                h -= d / vol * (d / vc).log2();
            }
        }
    }
    h
}

/// Central finite differences of `sum(net(x) * c)` against backprop on 10
/// random parameters; returns the largest relative error.
pub fn max_gradient_error(sizes: &[usize], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Mlp::new(sizes, &mut rng);
    let x = Array2::from_shape_fn((4, sizes[0]), |_| rng.random_range(-1.0..1.0));
    let c = Array2::from_shape_fn((4, *sizes.last().unwrap()), |_| rng.random_range(-1.0..1.0));
    let loss = |n: &Mlp| (n.forward(x.view()) * &c).sum();
    let (g, _) = net.backward(&net.forward_cached(x.view()), c.view());
    let flat = g.flat();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let i = rng.random_range(0..net.num_params());
        let orig = net.param(i);
        net.set_param(i, orig + h);
        let up = loss(&net);
        net.set_param(i, orig - h);
        let down = loss(&net);
        net.set_param(i, orig);
        let numeric = (up - down) / (2.0 * h);
        let rel = (flat[i] - numeric).abs() / flat[i].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
