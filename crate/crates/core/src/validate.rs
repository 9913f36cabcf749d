//! Cross-module consistency checks behind the `validate` command.
//!
//! Each check reports its measured value next to the bound it is held to.
//! The quick suite is purely analytic; the full suite adds Monte Carlo
//! comparisons against grown networks.

use std::fmt;

use serde::Serialize;

use crate::analytic::{
    build_joint_table, joint_probability, neighbor_quality_dist, nn_joint_dist, ModelParams, Truncation,
};
use crate::error::Result;
use crate::measures::{sweep, Family, ScanBounds, SweepRow, SweepSpec};
use crate::quality::{pmf_stats, QualityPmf};
use crate::simulate::{
    empirical_report, grow, grow_qpa, neighbor_counts, quality_class_neighbor_means, replica_reports, total_variation,
    EmpiricalReport, GrowthMode, Network,
};

pub const NORMALIZATION_TOL: f64 = 1e-6;
pub const BA_TOL: f64 = 1e-10;
pub const TV_BOUND: f64 = 0.02;

#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub detail: String,
    pub passed: bool,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        CheckOutcome { name: name.to_string(), detail, passed }
    }
}

impl fmt::Display for CheckOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.name, self.detail, if self.passed { "PASS" } else { "FAIL" })
    }
}

/// `(β, quality)` grid used by the normalization checks: three link counts,
/// three Bernoulli and three exponential parameters, two quality ranges.
pub fn normalization_grid() -> Vec<ModelParams> {
    let mut out = Vec::new();
    for beta in [2u32, 4, 8] {
        for theta_max in [4u32, 16] {
            for p in [0.1, 0.5, 0.9] {
                out.push(ModelParams::new(beta, QualityPmf::bernoulli(p, theta_max).unwrap()).unwrap());
            }
            for q in [0.5, 1.0, 1.5] {
                out.push(ModelParams::new(beta, QualityPmf::exponential(q, theta_max).unwrap()).unwrap());
            }
        }
    }
    out
}

/// Nine focal `(k, θ)` pairs probed for each parameter set: qualities
/// `0, θ̂, θmax` (those in the support) crossed with degrees `β, β+3, 2β+5`
/// and further doublings until nine pairs exist.
pub fn neighbor_probes(params: &ModelParams) -> Vec<(u64, u32)> {
    let b = params.beta() as u64;
    let q = params.quality();
    let mut thetas: Vec<u32> = [0, q.median(), q.theta_max()].into_iter().filter(|&t| q.in_support(t)).collect();
    thetas.dedup();
    let mut out = Vec::with_capacity(9);
    let mut k = b;
    let mut step = 0;
    while out.len() < 9 {
        for &t in &thetas {
            if out.len() < 9 {
                out.push((k, t));
            }
        }
        k = match step {
            0 => b + 3,
            _ => 2 * k - 1,
        };
        step += 1;
    }
    out
}

/// Exponential family over `q ∈ {0.1, …, 2}`, `β ∈ {2,4,6,8}`,
/// `θmax ∈ {4,8,16,24}`.
pub fn exponential_grid() -> SweepSpec {
    SweepSpec {
        family: Family::Exponential,
        x: (1..=20).map(|i| i as f64 / 10.0).collect(),
        beta: vec![2, 4, 6, 8],
        theta_max: vec![4, 8, 16, 24],
    }
}

fn joint_normalization(trunc: &Truncation) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for params in normalization_grid() {
        let t = build_joint_table(&params, trunc)?;
        worst = worst.max((t.total_mass() + t.tail_mass() - 1.0).abs());
    }
    Ok(CheckOutcome::new(
        "joint normalization",
        worst < NORMALIZATION_TOL,
        format!("residual {worst:.3e} < {NORMALIZATION_TOL:e}"),
    ))
}

fn ba_reduction() -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for beta in [2u32, 4, 8] {
        let params = ModelParams::new(beta, QualityPmf::bernoulli(1.0, 4)?)?;
        let b = beta as f64;
        for k in beta as u64..=1000 {
            let kf = k as f64;
            let exact = 2.0 * b * (b + 1.0) / (kf * (kf + 1.0) * (kf + 2.0));
            worst = worst.max((joint_probability(&params, k, 0)? - exact).abs());
        }
    }
    Ok(CheckOutcome::new("BA reduction", worst < BA_TOL, format!("max deviation {worst:.3e} < {BA_TOL:e}")))
}

fn neighbor_normalization(trunc: &Truncation) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for params in normalization_grid() {
        for (k, theta) in neighbor_probes(&params) {
            let d = nn_joint_dist(&params, k, theta, trunc)?;
            worst = worst.max((d.total() - 1.0).abs());
            count += 1;
        }
    }
    Ok(CheckOutcome::new(
        "neighbor normalization",
        worst < NORMALIZATION_TOL,
        format!("residual {worst:.3e} < {NORMALIZATION_TOL:e} over {count} (k, theta)"),
    ))
}

fn quality_conditional_normalization(trunc: &Truncation) -> Result<CheckOutcome> {
    let mut worst: f64 = 0.0;
    for params in normalization_grid() {
        for theta in params.quality().support() {
            let d = neighbor_quality_dist(&params, theta, trunc)?;
            worst = worst.max((d.total() - 1.0).abs());
        }
    }
    Ok(CheckOutcome::new(
        "neighbor quality normalization",
        worst < NORMALIZATION_TOL,
        format!("residual {worst:.3e} < {NORMALIZATION_TOL:e}"),
    ))
}

fn median_convention() -> Result<CheckOutcome> {
    let mut probs = vec![0.0; 6];
    probs[0] = 0.5;
    probs[5] = 0.5;
    let (_, median) = pmf_stats(&probs);
    Ok(CheckOutcome::new("median convention", median == 0, format!("median of 1/2 d[0] + 1/2 d[5] is {median}")))
}

fn ordering_checks(rows: &[SweepRow]) -> Vec<CheckOutcome> {
    let mut failed_rows = Vec::new();
    let mut median_le_mean = Vec::new();
    let mut majority = Vec::new();
    let mut wider = Vec::new();
    let mut flip = Vec::new();
    let mut min_majority = f64::INFINITY;
    for row in rows {
        let Some(r) = &row.report else {
            failed_rows.push(row.point_label());
            continue;
        };
        let (c, u, f) = (&r.qpa, &r.uncorrelated, &r.fractions);
        if f.degree_median > f.degree_mean {
            median_le_mean.push(row.point_label());
        }
        if row.theta_max == 16 {
            min_majority = min_majority.min(f.degree_mean);
            if f.degree_mean <= 0.8 {
                majority.push(row.point_label());
            }
        }
        if c.quality_mean < u.quality_mean || c.quality_median < u.quality_median {
            wider.push(row.point_label());
        }
        // An absent critical ranks below every present one.
        let flipped = if row.x < 1.0 {
            c.quality_mean < c.quality_median
        } else if row.x > 1.0 {
            c.quality_median < c.quality_mean
        } else {
            false
        };
        if flipped {
            flip.push(row.point_label());
        }
    }
    let summarize = |bad: &[String], total: usize| {
        if bad.is_empty() {
            format!("all {total} grid points")
        } else {
            format!("{} of {total} grid points violate, e.g. {}", bad.len(), bad[..bad.len().min(3)].join("; "))
        }
    };
    let n = rows.len();
    let mut out = vec![
        CheckOutcome::new(
            "median FP fraction <= mean FP fraction",
            median_le_mean.is_empty(),
            summarize(&median_le_mean, n),
        ),
        CheckOutcome::new(
            "mean FP fraction > 0.8 at theta_max 16",
            majority.is_empty(),
            format!(
                "min {min_majority:.6}; {}",
                summarize(&majority, rows.iter().filter(|r| r.theta_max == 16).count())
            ),
        ),
        CheckOutcome::new("QPA quality criticals >= uncorrelated", wider.is_empty(), summarize(&wider, n)),
        CheckOutcome::new("quality critical ordering flips at q = 1", flip.is_empty(), summarize(&flip, n)),
    ];
    if !failed_rows.is_empty() {
        out.push(CheckOutcome::new("exponential sweep", false, format!("failed at {}", failed_rows.join("; "))));
    }
    out
}

fn micro_graphs() -> Result<CheckOutcome> {
    let star = Network::from_parts(
        std::iter::once((1..11).collect()).chain((1..11).map(|_| vec![0])).collect(),
        vec![0; 11],
        (1..11).map(|v| (0, v)).collect(),
        (0..11).collect(),
    );
    let tri = Network::from_parts(
        vec![vec![1, 2], vec![0, 2], vec![0, 1]],
        vec![0, 0, 5],
        vec![(0, 1), (1, 2), (2, 0)],
        vec![0, 1, 2],
    );
    let s = empirical_report(&star);
    let t = empirical_report(&tri);
    let ok = s.flagged.degree_mean == 10
        && s.node_count == 11
        && t.flagged.quality_mean == 2
        && t.flagged.quality_median == 0
        && t.node_count == 3;
    Ok(CheckOutcome::new(
        "hand-computed micro-graphs",
        ok,
        format!(
            "star mean FP {}/{}, triangle mean QP {}/3, median QP {}/3",
            s.flagged.degree_mean, s.node_count, t.flagged.quality_mean, t.flagged.quality_median
        ),
    ))
}

fn monte_carlo_joint(trunc: &Truncation) -> Result<CheckOutcome> {
    let params = ModelParams::new(2, QualityPmf::exponential(0.5, 4)?)?;
    let seeds: Vec<u64> = (1..=10).collect();
    let reports = replica_reports(200_000, &params, GrowthMode::Qpa, &seeds)?;
    let pooled = EmpiricalReport::pool(&reports);
    let joint = build_joint_table(&params, trunc)?;
    let tv = total_variation(&pooled.histogram, &joint, 20);
    Ok(CheckOutcome::new(
        "Monte Carlo joint agreement",
        tv < TV_BOUND,
        format!("total variation {tv:.5} < {TV_BOUND} (k <= 20, 10 x 200000 nodes)"),
    ))
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

fn monte_carlo_neighbor() -> Result<CheckOutcome> {
    let params = ModelParams::new(2, QualityPmf::exponential(0.5, 2)?)?;
    let analytic = crate::analytic::nn_probability(&params, 4, 1, 3, 0)?;
    let mut freqs = Vec::new();
    for seed in 0..20u64 {
        let net = grow_qpa(100_000, &params, 1000 + seed)?;
        freqs.push(neighbor_counts(&net, 4, 1).frequency(3, 0));
    }
    let (m, se) = mean_and_se(&freqs);
    let z = (m - analytic).abs() / se;
    Ok(CheckOutcome::new(
        "neighbor formula vs simulation",
        z < 3.0,
        format!("P(3,0|4,1) analytic {analytic:.5}, simulated {m:.5} +- {se:.5} ({z:.2} SE < 3)"),
    ))
}

fn correlation_discrimination() -> Result<CheckOutcome> {
    let params = ModelParams::new(2, QualityPmf::bernoulli(0.5, 8)?)?;
    let mu = params.mu();
    let class_zero = |mode| -> Result<(f64, f64)> {
        let mut means = Vec::new();
        for seed in 0..10u64 {
            let net = grow(100_000, &params, 2000 + seed, mode)?;
            let m = quality_class_neighbor_means(&net);
            means.push(m.iter().find(|c| c.theta == 0).map_or(f64::NAN, |c| c.mean));
        }
        Ok(mean_and_se(&means))
    };
    let (qm, qse) = class_zero(GrowthMode::Qpa)?;
    let (um, use_) = class_zero(GrowthMode::Uniform)?;
    let zq = (qm - mu).abs() / qse;
    let zu = (um - mu).abs() / use_;
    Ok(CheckOutcome::new(
        "QPA vs uniform neighbor quality",
        zq > 3.0 && zu <= 3.0,
        format!("quality-0 neighbors: QPA {qm:.4} ({zq:.1} SE from mu {mu}), uniform {um:.4} ({zu:.1} SE)"),
    ))
}

fn determinism() -> Result<CheckOutcome> {
    let params = ModelParams::new(3, QualityPmf::exponential(1.2, 6)?)?;
    let dump = || -> Result<Vec<u8>> {
        let mut buf = Vec::new();
        grow_qpa(20_000, &params, 77)?.write_edge_list(&mut buf)?;
        Ok(buf)
    };
    let same = dump()? == dump()?;
    Ok(CheckOutcome::new("simulation determinism", same, "identical edge lists for a repeated seed".into()))
}

fn guard(name: &str, r: Result<CheckOutcome>) -> CheckOutcome {
    r.unwrap_or_else(|e| CheckOutcome::new(name, false, format!("error: {e}")))
}

/// Runs the suite; `quick` skips the Monte Carlo checks.
pub fn run_checks(quick: bool, trunc: &Truncation) -> Vec<CheckOutcome> {
    let mut out = vec![
        guard("joint normalization", joint_normalization(trunc)),
        guard("BA reduction", ba_reduction()),
        guard("neighbor normalization", neighbor_normalization(trunc)),
        guard("neighbor quality normalization", quality_conditional_normalization(trunc)),
        guard("median convention", median_convention()),
    ];
    match sweep(&exponential_grid(), trunc, &ScanBounds::default()) {
        Ok(rows) => out.extend(ordering_checks(&rows)),
        Err(e) => out.push(CheckOutcome::new("exponential sweep", false, format!("error: {e}"))),
    }
    out.push(guard("hand-computed micro-graphs", micro_graphs()));
    if !quick {
        out.push(guard("Monte Carlo joint agreement", monte_carlo_joint(trunc)));
        out.push(guard("neighbor formula vs simulation", monte_carlo_neighbor()));
        out.push(guard("QPA vs uniform neighbor quality", correlation_discrimination()));
        out.push(guard("simulation determinism", determinism()));
    }
    out
}
