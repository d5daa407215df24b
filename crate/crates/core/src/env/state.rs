//! Search state: global and per-cluster features, attention fusion, and the
//! action set.

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dbscan::{ClusterCenter, DbscanParams};
use crate::nn::{ForwardCache, Gradients, Mlp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Left,
    Right,
    Down,
    Up,
    Stop,
}

impl Action {
    pub const ALL: [Action; 5] = [Action::Left, Action::Right, Action::Down, Action::Up, Action::Stop];
    pub const COUNT: usize = 5;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Self {
        Self::ALL[i]
    }

    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self.index()] = 1.0;
        v
    }
}

/// Inclusive parameter bounds of one search layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub min_pts_lo: usize,
    pub min_pts_hi: usize,
}

impl Bounds {
    pub fn contains(&self, p: &DbscanParams) -> bool {
        p.eps >= self.eps_lo && p.eps <= self.eps_hi && p.min_pts >= self.min_pts_lo && p.min_pts <= self.min_pts_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizes {
    pub eps: f64,
    pub min_pts: usize,
}

/// Which bound an action ran into; the matching boundary distance becomes
/// `-1` in the next state.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClampFlags {
    pub eps_lo: bool,
    pub eps_hi: bool,
    pub min_pts_lo: bool,
    pub min_pts_hi: bool,
}

impl ClampFlags {
    pub fn any(&self) -> bool {
        self.eps_lo || self.eps_hi || self.min_pts_lo || self.min_pts_hi
    }
}

pub fn apply_action(params: DbscanParams, action: Action, steps: StepSizes, bounds: &Bounds) -> (DbscanParams, ClampFlags) {
    let mut flags = ClampFlags::default();
    let mut eps = params.eps;
    let mut min_pts = params.min_pts as i64;
    match action {
        Action::Left => eps -= steps.eps,
        Action::Right => eps += steps.eps,
        Action::Down => min_pts -= steps.min_pts as i64,
        Action::Up => min_pts += steps.min_pts as i64,
        Action::Stop => {}
    }
    // Tolerate rounding when a step lands exactly on a bound.
    let slack = 1e-9 * bounds.eps_hi.abs().max(1.0);
    if (eps - bounds.eps_hi).abs() <= slack {
        eps = bounds.eps_hi;
    } else if (eps - bounds.eps_lo).abs() <= slack {
        eps = bounds.eps_lo;
    }
    if eps < bounds.eps_lo {
        flags.eps_lo = eps < bounds.eps_lo - slack;
        eps = bounds.eps_lo;
    } else if eps > bounds.eps_hi {
        flags.eps_hi = eps > bounds.eps_hi + slack;
        eps = bounds.eps_hi;
    }
    if min_pts < bounds.min_pts_lo as i64 {
        flags.min_pts_lo = true;
        min_pts = bounds.min_pts_lo as i64;
    } else if min_pts > bounds.min_pts_hi as i64 {
        flags.min_pts_hi = true;
        min_pts = bounds.min_pts_hi as i64;
    }
    (
        DbscanParams {
            eps,
            min_pts: min_pts as usize,
        },
        flags,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlobalState {
    pub eps: f64,
    pub min_pts: f64,
    /// `eps - lo`, `hi - eps`, `min_pts - lo`, `hi - min_pts`; `-1` after a clamp.
    pub boundary: [f64; 4],
    pub cluster_ratio: f64,
}

impl GlobalState {
    pub fn new(params: DbscanParams, bounds: &Bounds, flags: ClampFlags, num_clusters: usize, partition_size: usize) -> Self {
        let mp = params.min_pts as f64;
        let mut boundary = [
            params.eps - bounds.eps_lo,
            bounds.eps_hi - params.eps,
            mp - bounds.min_pts_lo as f64,
            bounds.min_pts_hi as f64 - mp,
        ];
        for (d, hit) in boundary
            .iter_mut()
            .zip([flags.eps_lo, flags.eps_hi, flags.min_pts_lo, flags.min_pts_hi])
        {
            if hit {
                *d = -1.0;
            }
        }
        Self {
            eps: params.eps,
            min_pts: mp,
            boundary,
            cluster_ratio: num_clusters as f64 / partition_size.max(1) as f64,
        }
    }

    pub fn min_boundary_distance(&self) -> f64 {
        self.boundary.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Network input: eps terms over `sqrt(d)`, MinPts terms over `|P|`; the
    /// `-1` sentinel is kept as is.
    pub fn features(&self, dim: usize, partition_size: usize) -> [f64; 7] {
        let e = (dim as f64).sqrt();
        let p = partition_size.max(1) as f64;
        let scale = |v: f64, s: f64| if v == -1.0 { v } else { v / s };
        [
            self.eps / e,
            self.min_pts / p,
            scale(self.boundary[0], e),
            scale(self.boundary[1], e),
            scale(self.boundary[2], p),
            scale(self.boundary[3], p),
            self.cluster_ratio,
        ]
    }
}

/// `d + 2` features of one cluster: center object, its distance to the
/// partition's central object, and the cluster size.
pub fn local_features(center: &ClusterCenter, dim: usize, partition_size: usize) -> Vec<f64> {
    let mut v = center.center.clone();
    v.push(center.center_distance / (dim as f64).sqrt());
    v.push(center.size as f64 / partition_size.max(1) as f64);
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusedOutput {
    pub state: Vec<f64>,
    pub attention: Vec<f64>,
}

/// Attention fusion of the global state with a variable number of clusters.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub global: Mlp,
    pub local: Mlp,
    pub score: Mlp,
}

/// Intermediate values of a fusion pass, for the backward pass.
pub struct EncoderCache {
    global: ForwardCache,
    local: Option<ForwardCache>,
    score: Option<ForwardCache>,
    scores: Vec<f64>,
    attention: Vec<f64>,
    pre_activation: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct EncoderGradients {
    pub global: Gradients,
    pub local: Gradients,
    pub score: Gradients,
}

impl Encoder {
    pub fn new(dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            global: Mlp::new(&[7, hidden], rng),
            local: Mlp::new(&[dim + 2, hidden], rng),
            score: Mlp::new(&[2 * hidden, 1], rng),
        }
    }

    pub fn hidden(&self) -> usize {
        self.global.output_dim()
    }

    pub fn state_dim(&self) -> usize {
        2 * self.hidden()
    }

    pub fn fuse(&self, global: &[f64; 7], locals: &[Vec<f64>]) -> FusedOutput {
        let (out, cache) = self.fuse_cached(global, locals);
        FusedOutput {
            state: out,
            attention: cache.attention,
        }
    }

    pub fn fuse_cached(&self, global: &[f64; 7], locals: &[Vec<f64>]) -> (Vec<f64>, EncoderCache) {
        let h = self.hidden();
        let g_in = ArrayView2::from_shape((1, 7), global.as_slice()).expect("row");
        let g_cache = self.global.forward_cached(g_in);
        let g_out = g_cache.output().row(0).to_owned();
        let mut pre = g_out.to_vec();
        pre.resize(2 * h, 0.0);

        if locals.is_empty() {
            let state = pre.iter().map(|v| v.max(0.0)).collect();
            return (
                state,
                EncoderCache {
                    global: g_cache,
                    local: None,
                    score: None,
                    scores: Vec::new(),
                    attention: Vec::new(),
                    pre_activation: pre,
                },
            );
        }

        let n = locals.len();
        let width = locals[0].len();
        let flat: Vec<f64> = locals.iter().flatten().copied().collect();
        let l_in = Array2::from_shape_vec((n, width), flat).expect("rectangular local states");
        let l_cache = self.local.forward_cached(l_in.view());
        let l_out = l_cache.output();
        let g_rep = g_out.broadcast((n, h)).expect("broadcast global row");
        let s_in = concatenate(Axis(1), &[g_rep, l_out.view()]).expect("same row count");
        let s_cache = self.score.forward_cached(s_in.view());
        let scores: Vec<f64> = s_cache.output().column(0).iter().map(|v| v.max(0.0)).collect();
        let total: f64 = scores.iter().sum();
        let attention: Vec<f64> = if total > 0.0 {
            scores.iter().map(|s| s / total).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        for (row, &a) in l_out.rows().into_iter().zip(&attention) {
            for (j, v) in row.iter().enumerate() {
                pre[h + j] += a * v;
            }
        }
        let state = pre.iter().map(|v| v.max(0.0)).collect();
        (
            state,
            EncoderCache {
                global: g_cache,
                local: Some(l_cache),
                score: Some(s_cache),
                scores,
                attention,
                pre_activation: pre,
            },
        )
    }

    /// Parameter gradients of a loss given its gradient with respect to the
    /// fused state.
    pub fn backward(&self, cache: &EncoderCache, grad_state: &[f64]) -> EncoderGradients {
        let h = self.hidden();
        let d_pre: Vec<f64> = grad_state
            .iter()
            .zip(&cache.pre_activation)
            .map(|(g, &p)| if p > 0.0 { *g } else { 0.0 })
            .collect();
        let mut d_g = Array2::from_shape_vec((1, h), d_pre[..h].to_vec()).expect("row");
        let zero_grads = |net: &Mlp| Gradients {
            layers: net
                .layers
                .iter()
                .map(|l| (Array2::zeros(l.weight.raw_dim()), ndarray::Array1::zeros(l.bias.len())))
                .collect(),
        };

        let (local, score) = match (&cache.local, &cache.score) {
            (Some(l_cache), Some(s_cache)) => {
                let l_out = l_cache.output();
                let n = l_out.nrows();
                let d_agg = &d_pre[h..];
                // d loss / d attention_n = <d_agg, F_L(x_n)>.
                let d_att: Vec<f64> = l_out.rows().into_iter().map(|r| r.iter().zip(d_agg).map(|(a, b)| a * b).sum()).collect();
                let total: f64 = cache.scores.iter().sum();
                let mut d_raw = Array2::zeros((n, 1));
                if total > 0.0 {
                    let weighted: f64 = d_att.iter().zip(&cache.attention).map(|(d, a)| d * a).sum();
                    let raw = s_cache.output();
                    for i in 0..n {
                        if raw[[i, 0]] > 0.0 {
                            d_raw[[i, 0]] = (d_att[i] - weighted) / total;
                        }
                    }
                }
                let (score_grads, d_s_in) = self.score.backward(s_cache, d_raw.view());
                let mut d_l = d_s_in.slice(ndarray::s![.., h..]).to_owned();
                for (mut row, &a) in d_l.rows_mut().into_iter().zip(&cache.attention) {
                    for (v, g) in row.iter_mut().zip(d_agg) {
                        *v += a * g;
                    }
                }
                d_g += &d_s_in.slice(ndarray::s![.., ..h]).sum_axis(Axis(0)).insert_axis(Axis(0));
                let (local_grads, _) = self.local.backward(l_cache, d_l.view());
                (local_grads, score_grads)
            }
            _ => (zero_grads(&self.local), zero_grads(&self.score)),
        };
        let (global, _) = self.global.backward(&cache.global, d_g.view());
        EncoderGradients { global, local, score }
    }
}
