//! Growth simulators and attributed graphs.
//!
//! Quality-based growth keeps one token per unit of attachment weight: a
//! node of degree `k` and quality `θ` owns `k + θ` entries of a flat token
//! list, so a uniform draw from the list is a draw proportional to `k + θ`.
//! This relies on qualities being integers.

mod ingest;
mod report;

use std::io::{self, Write};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::ModelParams;
use crate::error::{GfpError, Result};

pub use ingest::load_graph;
pub use report::{
    empirical_report, empirical_report_with_flags, joint_histogram, neighbor_counts, quality_class_neighbor_means,
    total_variation, ClassNeighborMean, EmpiricalFractions, EmpiricalReport, FlagCounts, JointHistogram,
    NeighborCounts, NodeFlags,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Qpa,
    Uniform,
    Ingested,
}

/// How arriving nodes pick their targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthMode {
    /// Proportional to `k + θ`.
    Qpa,
    /// Uniform over existing nodes.
    Uniform,
}

/// Undirected simple graph with one integer quality per node.
#[derive(Debug, Clone)]
pub struct Network {
    adjacency: Vec<Vec<u32>>,
    qualities: Vec<u32>,
    /// Edges in creation (or file) order.
    edges: Vec<(u32, u32)>,
    beta: u32,
    provenance: Provenance,
    seed: Option<u64>,
    /// Original node ids of an ingested graph, indexed by dense id.
    labels: Option<Vec<u64>>,
}

impl Network {
    pub(crate) fn from_parts(
        adjacency: Vec<Vec<u32>>,
        qualities: Vec<u32>,
        edges: Vec<(u32, u32)>,
        labels: Vec<u64>,
    ) -> Self {
        Network {
            adjacency,
            qualities,
            edges,
            beta: 0,
            provenance: Provenance::Ingested,
            seed: None,
            labels: Some(labels),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adjacency.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn neighbors(&self, node: usize) -> &[u32] {
        &self.adjacency[node]
    }

    pub fn quality(&self, node: usize) -> u32 {
        self.qualities[node]
    }

    pub fn qualities(&self) -> &[u32] {
        &self.qualities
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    /// Links per arriving node; zero for ingested graphs.
    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    /// External id of `node`: the original label for ingested graphs, the
    /// birth index otherwise.
    pub fn label(&self, node: usize) -> u64 {
        self.labels.as_ref().map_or(node as u64, |l| l[node])
    }

    /// Writes one `u v` line per edge in creation order.
    pub fn write_edge_list<W: Write + ?Sized>(&self, out: &mut W) -> io::Result<()> {
        for &(u, v) in &self.edges {
            writeln!(out, "{} {}", self.label(u as usize), self.label(v as usize))?;
        }
        Ok(())
    }

    fn add_edge(&mut self, u: u32, v: u32) {
        self.adjacency[u as usize].push(v);
        self.adjacency[v as usize].push(u);
        self.edges.push((u, v));
    }
}

/// Grows a network of `n` nodes from a complete graph on `β + 1` nodes.
pub fn grow(n: usize, params: &ModelParams, seed: u64, mode: GrowthMode) -> Result<Network> {
    let beta = params.beta() as usize;
    if n <= beta + 1 {
        return Err(GfpError::domain(format!("n = {n} must exceed beta + 1 = {}", beta + 1)));
    }
    if n > u32::MAX as usize {
        return Err(GfpError::domain(format!("n = {n} exceeds the supported node count")));
    }
    let quality = params.quality();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = Network {
        adjacency: Vec::with_capacity(n),
        qualities: Vec::with_capacity(n),
        edges: Vec::with_capacity(beta * (beta + 1) / 2 + beta * (n - beta - 1)),
        beta: params.beta(),
        provenance: match mode {
            GrowthMode::Qpa => Provenance::Qpa,
            GrowthMode::Uniform => Provenance::Uniform,
        },
        seed: Some(seed),
        labels: None,
    };
    let mut tokens: Vec<u32> = Vec::new();
    if mode == GrowthMode::Qpa {
        tokens.reserve(2 * net.edges.capacity() + n * quality.theta_max() as usize);
    }

    for u in 0..=beta {
        net.adjacency.push(Vec::with_capacity(beta));
        net.qualities.push(quality.sample(&mut rng));
        for v in 0..u {
            net.add_edge(u as u32, v as u32);
        }
    }
    if mode == GrowthMode::Qpa {
        for u in 0..=beta {
            let weight = beta + net.qualities[u] as usize;
            tokens.extend(std::iter::repeat_n(u as u32, weight));
        }
    }

    let mut targets: Vec<u32> = Vec::with_capacity(beta);
    for new in (beta + 1)..n {
        let theta = quality.sample(&mut rng);
        targets.clear();
        match mode {
            GrowthMode::Qpa => {
                while targets.len() < beta {
                    let t = tokens[rng.gen_range(0..tokens.len())];
                    if !targets.contains(&t) {
                        targets.push(t);
                    }
                }
            }
            GrowthMode::Uniform => {
                targets.extend(index::sample(&mut rng, new, beta).into_iter().map(|i| i as u32));
            }
        }
        net.adjacency.push(Vec::with_capacity(beta));
        net.qualities.push(theta);
        for &t in &targets {
            net.add_edge(new as u32, t);
        }
        if mode == GrowthMode::Qpa {
            tokens.extend_from_slice(&targets);
            tokens.extend(std::iter::repeat_n(new as u32, beta + theta as usize));
        }
    }

    if mode == GrowthMode::Qpa {
        let theta_sum: usize = net.qualities.iter().map(|&t| t as usize).sum();
        assert_eq!(tokens.len(), 2 * net.edge_count() + theta_sum, "token list out of step with the graph");
    }
    Ok(net)
}

/// Quality-based preferential attachment: targets drawn with probability
/// proportional to `k + θ`, duplicates redrawn.
pub fn grow_qpa(n: usize, params: &ModelParams, seed: u64) -> Result<Network> {
    grow(n, params, seed, GrowthMode::Qpa)
}

/// Targets drawn uniformly without replacement.
pub fn grow_uniform(n: usize, params: &ModelParams, seed: u64) -> Result<Network> {
    grow(n, params, seed, GrowthMode::Uniform)
}

/// Grows one network per seed in parallel and reports on each; the network
/// itself is dropped once reported. Order follows `seeds`.
pub fn replica_reports(
    n: usize,
    params: &ModelParams,
    mode: GrowthMode,
    seeds: &[u64],
) -> Result<Vec<EmpiricalReport>> {
    seeds.par_iter().map(|&seed| grow(n, params, seed, mode).map(|net| empirical_report(&net))).collect()
}
