use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::ser::SerializeStruct;
use serde::{Serialize, Serializer};

use crate::analytic::JointTable;

use super::Network;

/// Which paradoxes a node experiences.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct NodeFlags {
    pub quality_mean: bool,
    pub quality_median: bool,
    pub degree_mean: bool,
    pub degree_median: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct FlagCounts {
    pub quality_mean: u64,
    pub quality_median: u64,
    pub degree_mean: u64,
    pub degree_median: u64,
}

impl FlagCounts {
    fn add(&mut self, f: NodeFlags) {
        self.quality_mean += f.quality_mean as u64;
        self.quality_median += f.quality_median as u64;
        self.degree_mean += f.degree_mean as u64;
        self.degree_median += f.degree_median as u64;
    }

    fn merge(mut self, o: FlagCounts) -> FlagCounts {
        self.quality_mean += o.quality_mean;
        self.quality_median += o.quality_median;
        self.degree_mean += o.degree_mean;
        self.degree_median += o.degree_median;
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct EmpiricalFractions {
    pub quality_mean: f64,
    pub quality_median: f64,
    pub degree_mean: f64,
    pub degree_median: f64,
}

/// Normalized node counts per `(degree, quality)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct JointHistogram {
    counts: BTreeMap<(u64, u32), u64>,
    total: u64,
}

impl JointHistogram {
    pub fn count(&self, k: u64, theta: u32) -> u64 {
        self.counts.get(&(k, theta)).copied().unwrap_or(0)
    }

    pub fn prob(&self, k: u64, theta: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.count(k, theta) as f64 / self.total as f64
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `((k, θ), fraction)` in increasing `(k, θ)`.
    pub fn entries(&self) -> impl Iterator<Item = ((u64, u32), f64)> + '_ {
        let t = self.total as f64;
        self.counts.iter().map(move |(&key, &c)| (key, c as f64 / t))
    }

    pub fn merge(&mut self, other: &JointHistogram) {
        for (&key, &c) in &other.counts {
            *self.counts.entry(key).or_default() += c;
        }
        self.total += other.total;
    }
}

impl Serialize for JointHistogram {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        #[derive(Serialize)]
        struct Cell {
            k: u64,
            theta: u32,
            count: u64,
        }
        let cells: Vec<Cell> = self.counts.iter().map(|(&(k, theta), &count)| Cell { k, theta, count }).collect();
        let mut st = s.serialize_struct("JointHistogram", 2)?;
        st.serialize_field("total", &self.total)?;
        st.serialize_field("cells", &cells)?;
        st.end()
    }
}

pub fn joint_histogram(net: &Network) -> JointHistogram {
    let mut h = JointHistogram::default();
    for u in 0..net.node_count() {
        *h.counts.entry((net.degree(u) as u64, net.quality(u))).or_default() += 1;
    }
    h.total = net.node_count() as u64;
    h
}

/// `½ Σ |P̂(k,θ) − P(k,θ)|` over `k ≤ k_limit` and every quality.
pub fn total_variation(hist: &JointHistogram, joint: &JointTable, k_limit: u64) -> f64 {
    let theta_max = joint.params().quality().theta_max();
    let mut sum = 0.0;
    for k in 0..=k_limit {
        for theta in 0..=theta_max {
            sum += (hist.prob(k, theta) - joint.prob(k, theta)).abs();
        }
    }
    // Observed qualities outside the model's range.
    for ((k, theta), p) in hist.entries() {
        if k <= k_limit && theta > theta_max {
            sum += p;
        }
    }
    0.5 * sum
}

#[derive(Debug, Clone, Serialize)]
pub struct EmpiricalReport {
    pub node_count: u64,
    /// Nodes without neighbors; excluded from the fractions.
    pub isolated: u64,
    pub flagged: FlagCounts,
    pub fractions: EmpiricalFractions,
    pub histogram: JointHistogram,
    pub seeds: Vec<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flags: Option<Vec<NodeFlags>>,
}

impl EmpiricalReport {
    fn from_counts(
        node_count: u64,
        isolated: u64,
        flagged: FlagCounts,
        histogram: JointHistogram,
        seeds: Vec<u64>,
    ) -> Self {
        let denom = (node_count - isolated) as f64;
        let frac = |c: u64| if denom > 0.0 { c as f64 / denom } else { 0.0 };
        EmpiricalReport {
            node_count,
            isolated,
            flagged,
            fractions: EmpiricalFractions {
                quality_mean: frac(flagged.quality_mean),
                quality_median: frac(flagged.quality_median),
                degree_mean: frac(flagged.degree_mean),
                degree_median: frac(flagged.degree_median),
            },
            histogram,
            seeds,
            flags: None,
        }
    }

    /// Sums counts and histograms over replicas; per-node flags are dropped.
    pub fn pool(reports: &[EmpiricalReport]) -> EmpiricalReport {
        let mut hist = JointHistogram::default();
        let mut flagged = FlagCounts::default();
        let (mut nodes, mut isolated) = (0, 0);
        let mut seeds = Vec::new();
        for r in reports {
            hist.merge(&r.histogram);
            flagged = flagged.merge(r.flagged);
            nodes += r.node_count;
            isolated += r.isolated;
            seeds.extend_from_slice(&r.seeds);
        }
        Self::from_counts(nodes, isolated, flagged, hist, seeds)
    }
}

/// Smallest `v` such that at least half the values are `≤ v`.
fn lower_median(values: &mut [u64]) -> u64 {
    let idx = values.len().div_ceil(2) - 1;
    *values.select_nth_unstable(idx).1
}

fn node_flags(net: &Network, u: usize) -> Option<NodeFlags> {
    let nbrs = net.neighbors(u);
    if nbrs.is_empty() {
        return None;
    }
    let k = nbrs.len() as u64;
    let theta = net.quality(u) as u64;
    let mut degrees: Vec<u64> = nbrs.iter().map(|&v| net.degree(v as usize) as u64).collect();
    let mut quals: Vec<u64> = nbrs.iter().map(|&v| net.quality(v as usize) as u64).collect();
    // Means compared exactly: x < Σ/k  ⇔  x·k < Σ.
    let degree_sum: u64 = degrees.iter().sum();
    let quality_sum: u64 = quals.iter().sum();
    Some(NodeFlags {
        degree_mean: k * k < degree_sum,
        quality_mean: theta * k < quality_sum,
        degree_median: k < lower_median(&mut degrees),
        quality_median: theta < lower_median(&mut quals),
    })
}

fn report_impl(net: &Network, keep_flags: bool) -> EmpiricalReport {
    let per_node: Vec<Option<NodeFlags>> = (0..net.node_count()).into_par_iter().map(|u| node_flags(net, u)).collect();
    let mut flagged = FlagCounts::default();
    let mut isolated = 0;
    for f in &per_node {
        match f {
            Some(f) => flagged.add(*f),
            None => isolated += 1,
        }
    }
    let mut report = EmpiricalReport::from_counts(
        net.node_count() as u64,
        isolated,
        flagged,
        joint_histogram(net),
        net.seed().into_iter().collect(),
    );
    if keep_flags {
        report.flags = Some(per_node.into_iter().map(Option::unwrap_or_default).collect());
    }
    report
}

/// Per-node paradox flags aggregated into fractions, plus the joint
/// histogram. Medians use the lower-median convention.
pub fn empirical_report(net: &Network) -> EmpiricalReport {
    report_impl(net, false)
}

/// As [`empirical_report`], keeping the per-node flags (isolated nodes
/// carry all-false flags).
pub fn empirical_report_with_flags(net: &Network) -> EmpiricalReport {
    report_impl(net, true)
}

/// Neighbor `(ℓ, φ)` counts pooled over all nodes with degree `k` and
/// quality `θ`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NeighborCounts {
    pub counts: BTreeMap<(u64, u32), u64>,
    /// Number of neighbor slots counted (`k` per matching node).
    pub total: u64,
    pub nodes: u64,
}

impl NeighborCounts {
    pub fn frequency(&self, ell: u64, phi: u32) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        self.counts.get(&(ell, phi)).copied().unwrap_or(0) as f64 / self.total as f64
    }
}

pub fn neighbor_counts(net: &Network, k: u64, theta: u32) -> NeighborCounts {
    let mut out = NeighborCounts::default();
    for u in 0..net.node_count() {
        if net.degree(u) as u64 != k || net.quality(u) != theta {
            continue;
        }
        out.nodes += 1;
        for &v in net.neighbors(u) {
            let v = v as usize;
            *out.counts.entry((net.degree(v) as u64, net.quality(v))).or_default() += 1;
            out.total += 1;
        }
    }
    out
}

/// Average over the nodes of quality `θ` of their mean neighbor quality.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassNeighborMean {
    pub theta: u32,
    pub nodes: u64,
    pub mean: f64,
}

pub fn quality_class_neighbor_means(net: &Network) -> Vec<ClassNeighborMean> {
    let mut acc: BTreeMap<u32, (u64, f64)> = BTreeMap::new();
    for u in 0..net.node_count() {
        let nbrs = net.neighbors(u);
        if nbrs.is_empty() {
            continue;
        }
        let sum: u64 = nbrs.iter().map(|&v| net.quality(v as usize) as u64).sum();
        let e = acc.entry(net.quality(u)).or_default();
        e.0 += 1;
        e.1 += sum as f64 / nbrs.len() as f64;
    }
    acc.into_iter()
        .map(|(theta, (nodes, total))| ClassNeighborMean { theta, nodes, mean: total / nodes as f64 })
        .collect()
}
