//! Grouping of a robot's candidate motions and selection of the order in
//! which the low-level planner tries them.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ModelKind, StateMetric};
use crate::primitives::RolledMotion;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClusterMethod {
    Goc,
    Scgoc,
    None,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    Vanilla,
    #[serde(rename = "det")]
    Deterministic,
    Weighted,
}

pub const WEIGHT_EPSILON: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub method: ClusterMethod,
    /// Band width as a fraction of the h range. `None` picks per model.
    pub rho: Option<f64>,
    pub tau: f64,
    pub n: usize,
    pub selection: Selection,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            method: ClusterMethod::Goc,
            rho: None,
            tau: 1.0,
            n: 5,
            selection: Selection::Deterministic,
        }
    }
}

impl ClusterConfig {
    pub fn rho_for(&self, kind: ModelKind) -> f64 {
        self.rho.unwrap_or(match kind {
            ModelKind::Unicycle1st => 0.05,
            _ => 1.0,
        })
    }
}

/// Indices into the caller's motion list, sorted by h ascending.
#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub members: Vec<usize>,
    pub reference_h: f64,
}

fn sorted_by_h(h: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..h.len()).collect();
    idx.sort_by(|&a, &b| h[a].total_cmp(&h[b]).then(a.cmp(&b)));
    idx
}

/// Bands of width `rho * (h_max - h_min)` opened at the smallest remaining h.
pub fn goc_cluster(h: &[f64], rho: f64) -> Vec<Cluster> {
    if h.is_empty() {
        return Vec::new();
    }
    let order = sorted_by_h(h);
    let iota = rho * (h[order[order.len() - 1]] - h[order[0]]);
    let mut out = Vec::new();
    let mut k = 0;
    while k < order.len() {
        let hl = h[order[k]];
        let mut members = Vec::new();
        while k < order.len() && (h[order[k]] - hl).abs() <= iota {
            members.push(order[k]);
            k += 1;
        }
        out.push(Cluster {
            members,
            reference_h: hl,
        });
    }
    out
}

/// Balls of radius `tau` around the final state of the smallest remaining h.
pub fn scgoc_cluster(h: &[f64], finals: &[&[f64]], tau: f64, metric: &StateMetric) -> Vec<Cluster> {
    assert_eq!(h.len(), finals.len());
    let order = sorted_by_h(h);
    let mut taken = vec![false; h.len()];
    let mut out = Vec::new();
    for &r in &order {
        if taken[r] {
            continue;
        }
        let mut members = Vec::new();
        for &m in &order {
            if !taken[m] && metric.dist(finals[m], finals[r]) <= tau {
                taken[m] = true;
                members.push(m);
            }
        }
        out.push(Cluster {
            members,
            reference_h: h[r],
        });
    }
    out
}

/// Picks members of one cluster. Weighted selection draws without
/// replacement with probability proportional to `1 / (h + 1e-6)`.
pub fn select_elements<R: Rng>(cluster: &Cluster, h: &[f64], selection: Selection, n: usize, rng: &mut R) -> Vec<usize> {
    match selection {
        Selection::Vanilla => cluster.members.clone(),
        Selection::Deterministic => cluster.members.iter().take(n).copied().collect(),
        Selection::Weighted => {
            let mut pool = cluster.members.clone();
            let mut out = Vec::with_capacity(n.min(pool.len()));
            while out.len() < n && !pool.is_empty() {
                let w: Vec<f64> = pool.iter().map(|&m| 1.0 / (h[m].max(0.0) + WEIGHT_EPSILON)).collect();
                let total: f64 = w.iter().sum();
                let mut pick = rng.gen_range(0.0..total);
                let mut k = pool.len() - 1;
                for (i, wi) in w.iter().enumerate() {
                    if pick < *wi {
                        k = i;
                        break;
                    }
                    pick -= wi;
                }
                out.push(pool.remove(k));
            }
            out
        }
    }
}

/// Middle element first, then alternating outward: for n = 5 the order is
/// 3, 2, 4, 1, 5 (one-based).
pub fn inside_out_reorder<T: Clone>(items: &[T]) -> Vec<T> {
    let n = items.len();
    if n == 0 {
        return Vec::new();
    }
    let c = (n + 1) / 2;
    let mut out = Vec::with_capacity(n);
    out.push(items[c - 1].clone());
    for step in 1..n {
        if c > step {
            out.push(items[c - 1 - step].clone());
        }
        if c + step <= n {
            out.push(items[c - 1 + step].clone());
        }
    }
    out
}

/// Order in which the low-level planner tries one robot's motions.
/// Returns indices into `motions`.
pub fn cluster_order<R: Rng>(
    motions: &[RolledMotion],
    method: ClusterMethod,
    cfg: &ClusterConfig,
    kind: ModelKind,
    metric: &StateMetric,
    rng: &mut R,
) -> Vec<usize> {
    let h: Vec<f64> = motions.iter().map(|m| m.h).collect();
    match method {
        ClusterMethod::None => sorted_by_h(&h),
        ClusterMethod::Goc => goc_cluster(&h, cfg.rho_for(kind))
            .iter()
            .flat_map(|c| select_elements(c, &h, cfg.selection, cfg.n, rng))
            .collect(),
        ClusterMethod::Scgoc => {
            let finals: Vec<&[f64]> = motions.iter().map(|m| m.final_state().values()).collect();
            scgoc_cluster(&h, &finals, cfg.tau, metric)
                .iter()
                .flat_map(|c| inside_out_reorder(&select_elements(c, &h, cfg.selection, cfg.n, rng)))
                .collect()
        }
    }
}

/// Reorders (and possibly thins) `motions` per [`cluster_order`].
pub fn cluster_motions<R: Rng>(
    motions: Vec<RolledMotion>,
    method: ClusterMethod,
    cfg: &ClusterConfig,
    kind: ModelKind,
    metric: &StateMetric,
    rng: &mut R,
) -> Vec<RolledMotion> {
    let order = cluster_order(&motions, method, cfg, kind, metric, rng);
    let mut slots: Vec<Option<RolledMotion>> = motions.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().unwrap()).collect()
}
