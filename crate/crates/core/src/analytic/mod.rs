//! Stationary degree–quality distributions of quality-based preferential
//! attachment, where an existing node of degree `k` and quality `θ`
//! receives each new link with probability proportional to `k + θ`.
//!
//! * [`joint_probability`] / [`JointTable`]: fraction of nodes with degree
//!   `k` and quality `θ`,
//!   `ρ(θ)(2+μ/β) Γ(k+θ)Γ(β+θ+2+μ/β) / [Γ(β+θ)Γ(k+θ+3+μ/β)]` for `k ≥ β`.
//! * [`nn_probability`]: fraction of the neighbors of a `(k, θ)` node that
//!   have degree `ℓ` and quality `φ`, evaluated term by term in log space.
//! * [`neighbor_quality_dist`], [`neighbor_degree_dist`]: the conditionals
//!   `P(φ|θ)` and `P(ℓ|k)` whose means and medians drive the paradox
//!   measures.
//!
//! Summing the nearest-neighbor formula over `ℓ` term by term (each term is
//! a beta-negative-binomial series) gives closed forms that are used for
//! quantities whose `ℓ`-tails are too heavy to truncate:
//!
//! * `Σ_ℓ P(ℓ,φ|k,θ) = ρ(φ)/k · [(k−β) + β(β+φ)/(β+μ)]`, independent of `θ`;
//! * `E[ℓ+φ | k,θ] = (k+θ+2+m)/k · Σ_φ ρ(φ)(β+φ)[ψ(k+θ+2+m) − ψ(β+θ+2+m)
//!   + (β+φ+1)/(m(β+θ+1+m))]` with `m = μ/β`, infinite when `μ = 0`.
//!
//! Both are cross-checked against direct summation in the tests.

mod kernel;
mod tail;

use std::io::{self, Write};

use serde::Serialize;

use crate::error::{GfpError, Result};
use crate::numerics::{adaptive_series_capped, digamma, lbinom, lgamma, lgamma_ratio, log_sum_exp, CompensatedSum};
use crate::quality::{median_index, QualityPmf};

pub(crate) use kernel::NeighborKernel;
use tail::TailModel;

/// Truncated joint tables must leave less than this much mass out.
pub const JOINT_TAIL_TARGET: f64 = 1e-8;

/// Streams whose total mass is below this are skipped when only a median
/// is needed; they cannot move a CDF across one half.
const NEGLIGIBLE_STREAM_MASS: f64 = 1e-16;

/// Truncation controls for the unbounded degree sums.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Truncation {
    pub rel_tol: f64,
    /// Largest degree a joint table may reach.
    pub joint_k_cap: u64,
    /// Largest neighbor degree enumerated explicitly.
    pub ell_cap: u64,
}

impl Default for Truncation {
    fn default() -> Self {
        Truncation { rel_tol: 1e-10, joint_k_cap: 100_000, ell_cap: 10_000 }
    }
}

impl Truncation {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Truncation { rel_tol, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0 && self.rel_tol < 1.0) {
            return Err(GfpError::domain(format!("rel_tol must lie in (0,1), got {}", self.rel_tol)));
        }
        Ok(())
    }
}

/// Links per arriving node together with the quality distribution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelParams {
    beta: u32,
    quality: QualityPmf,
    #[serde(skip)]
    mu_over_beta: f64,
    /// `Σ_φ ρ(φ)(β+φ)(β+φ+1)`
    #[serde(skip)]
    shifted_second_moment: f64,
    /// `Σ_φ ρ(φ)·φ·(β+φ)`
    #[serde(skip)]
    phi_weighted: f64,
}

impl ModelParams {
    pub fn new(beta: u32, quality: QualityPmf) -> Result<Self> {
        if beta < 1 {
            return Err(GfpError::domain("beta must be at least 1"));
        }
        let b = beta as f64;
        let mu_over_beta = quality.mean() / b;
        let mut second = 0.0;
        let mut phi_weighted = 0.0;
        for (phi, p) in quality.probs().iter().enumerate() {
            let f = phi as f64;
            second += p * (b + f) * (b + f + 1.0);
            phi_weighted += p * f * (b + f);
        }
        Ok(ModelParams { beta, quality, mu_over_beta, shifted_second_moment: second, phi_weighted })
    }

    pub fn beta(&self) -> u32 {
        self.beta
    }

    pub fn quality(&self) -> &QualityPmf {
        &self.quality
    }

    pub fn mu(&self) -> f64 {
        self.quality.mean()
    }

    pub fn mu_over_beta(&self) -> f64 {
        self.mu_over_beta
    }

    /// `2 + μ/β`, the power-law excess of the degree tail.
    pub fn tail_exponent_offset(&self) -> f64 {
        2.0 + self.mu_over_beta
    }

    fn check_quality(&self, theta: u32, what: &str) -> Result<()> {
        if !self.quality.in_support(theta) {
            return Err(GfpError::domain(format!(
                "{what} = {theta} is outside the support of the quality distribution"
            )));
        }
        Ok(())
    }

    fn check_degree(&self, k: u64, what: &str) -> Result<()> {
        if k < self.beta as u64 {
            return Err(GfpError::domain(format!("{what} = {k} is below beta = {}", self.beta)));
        }
        Ok(())
    }
}

/// `ln P(k | θ)` for `k ≥ β`.
fn ln_degree_given_quality(params: &ModelParams, k: u64, theta: u32) -> f64 {
    let c = params.tail_exponent_offset();
    let b = params.beta as f64;
    let t = theta as f64;
    let kf = k as f64;
    c.ln() + lgamma_ratio(b + t, c) - lgamma_ratio(kf + t, c + 1.0)
}

fn degree_given_quality(params: &ModelParams, k: u64, theta: u32) -> f64 {
    if k < params.beta as u64 {
        return 0.0;
    }
    ln_degree_given_quality(params, k, theta).exp()
}

/// Exact `Σ_{k > cutoff} P(k|θ)` and `Σ_{k > cutoff} k·P(k|θ)`, from
/// `Σ_{k ≥ K} Γ(k+a)/Γ(k+a+d+1) = Γ(K+a)/(d·Γ(K+a+d))`.
fn conditional_degree_tail(params: &ModelParams, cutoff: u64, theta: u32) -> (f64, f64) {
    let c = params.tail_exponent_offset();
    let b = params.beta as f64;
    let t = theta as f64;
    if cutoff < params.beta as u64 {
        // Whole distribution: mass 1, mean c(β+θ)/(c−1) − θ.
        return (1.0, c * (b + t) / (c - 1.0) - t);
    }
    let kk = cutoff as f64;
    let ln_norm = lgamma_ratio(b + t, c);
    let mass = (ln_norm - lgamma_ratio(kk + 1.0 + t, c)).exp();
    let first = (ln_norm - lgamma_ratio(kk + 2.0 + t, c - 1.0)).exp() * c / (c - 1.0);
    (mass, first - t * mass)
}

/// Fraction of nodes with degree `k` and quality `theta`.
pub fn joint_probability(params: &ModelParams, k: u64, theta: u32) -> Result<f64> {
    params.check_quality(theta, "theta")?;
    if k < params.beta as u64 {
        return Ok(0.0);
    }
    let ln_rho = params.quality.prob(theta).ln();
    Ok((ln_rho + ln_degree_given_quality(params, k, theta)).exp())
}

/// `P(k, θ)` on `k ∈ [β, k_max]` with the exactly known remainder.
#[derive(Debug, Clone, Serialize)]
pub struct JointTable {
    params: ModelParams,
    k_max: u64,
    /// Row-major `[(k − β)][θ]`.
    #[serde(skip)]
    probs: Vec<f64>,
    #[serde(skip)]
    degree_marginal: Vec<f64>,
    #[serde(skip)]
    degree_cdf: Vec<f64>,
    mean_degree: f64,
    median_degree: u64,
    /// `Σ_{k > k_max} P(k)`.
    tail_mass: f64,
}

/// Builds the joint table. The cutoff is the later of the adaptive-series
/// stopping point on `P(k)` and the first degree whose exact remainder falls
/// below [`JOINT_TAIL_TARGET`].
pub fn build_joint_table(params: &ModelParams, trunc: &Truncation) -> Result<JointTable> {
    JointTable::build(params, trunc)
}

impl JointTable {
    pub fn build(params: &ModelParams, trunc: &Truncation) -> Result<Self> {
        trunc.validate()?;
        let beta = params.beta as u64;
        let cap = trunc.joint_k_cap;
        if cap < beta {
            return Err(GfpError::domain(format!("joint_k_cap {cap} is below beta {beta}")));
        }
        let support: Vec<u32> = params.quality.support().collect();
        let weights: Vec<f64> = support.iter().map(|&t| params.quality.prob(t)).collect();

        let marginal_at = |k: u64| -> f64 {
            support.iter().zip(&weights).map(|(&t, w)| w * degree_given_quality(params, k, t)).sum()
        };
        let series = adaptive_series_capped(marginal_at, beta, trunc.rel_tol, cap - beta + 1).map_err(|e| match e {
            GfpError::NonConvergence { cap, .. } => {
                GfpError::NonConvergence { what: "joint degree table".into(), cap: cap + beta - 1 }
            }
            other => other,
        })?;
        let adaptive_end = beta + series.terms_used - 1;

        let tail_at = |cutoff: u64| -> f64 {
            support.iter().zip(&weights).map(|(&t, w)| w * conditional_degree_tail(params, cutoff, t).0).sum()
        };
        let k_max = first_below(adaptive_end, cap, JOINT_TAIL_TARGET, tail_at)
            .ok_or_else(|| GfpError::NonConvergence { what: "joint degree table".into(), cap })?;

        let width = params.quality.theta_max() as usize + 1;
        let rows = (k_max - beta + 1) as usize;
        let mut probs = vec![0.0; rows * width];
        for (&t, &w) in support.iter().zip(&weights) {
            fill_column(params, t, w, beta, rows, width, &mut probs);
        }
        let degree_marginal: Vec<f64> = probs.chunks_exact(width).map(|row| row.iter().sum()).collect();
        let degree_cdf: Vec<f64> = degree_marginal
            .iter()
            .scan(CompensatedSum::default(), |acc, p| {
                acc.add(*p);
                Some(acc.value())
            })
            .collect();

        let mut mean = CompensatedSum::default();
        for (i, p) in degree_marginal.iter().enumerate() {
            mean.add((beta + i as u64) as f64 * p);
        }
        let mut tail_mass = 0.0;
        for (&t, &w) in support.iter().zip(&weights) {
            let (mass, moment) = conditional_degree_tail(params, k_max, t);
            tail_mass += w * mass;
            mean.add(w * moment);
        }
        let median_offset = degree_cdf.iter().position(|&c| c >= 0.5 - 1e-12).unwrap_or(rows - 1);

        Ok(JointTable {
            params: params.clone(),
            k_max,
            probs,
            degree_marginal,
            degree_cdf,
            mean_degree: mean.value(),
            median_degree: beta + median_offset as u64,
            tail_mass,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn k_min(&self) -> u64 {
        self.params.beta as u64
    }

    pub fn k_max(&self) -> u64 {
        self.k_max
    }

    pub fn mean_degree(&self) -> f64 {
        self.mean_degree
    }

    pub fn median_degree(&self) -> u64 {
        self.median_degree
    }

    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    fn width(&self) -> usize {
        self.params.quality.theta_max() as usize + 1
    }

    /// `P(k, θ)`; zero outside the table.
    pub fn prob(&self, k: u64, theta: u32) -> f64 {
        if k < self.k_min() || k > self.k_max || theta > self.params.quality.theta_max() {
            return 0.0;
        }
        self.probs[(k - self.k_min()) as usize * self.width() + theta as usize]
    }

    /// `P(k) = Σ_θ P(k, θ)`.
    pub fn degree_prob(&self, k: u64) -> f64 {
        if k < self.k_min() || k > self.k_max {
            return 0.0;
        }
        self.degree_marginal[(k - self.k_min()) as usize]
    }

    pub fn degree_marginal(&self) -> &[f64] {
        &self.degree_marginal
    }

    /// `Σ_{k' ≤ k} P(k')`.
    pub fn degree_cdf(&self, k: u64) -> f64 {
        if k < self.k_min() {
            return 0.0;
        }
        let idx = ((k - self.k_min()) as usize).min(self.degree_cdf.len() - 1);
        self.degree_cdf[idx]
    }

    /// Sum of every tabulated entry.
    pub fn total_mass(&self) -> f64 {
        *self.degree_cdf.last().unwrap()
    }

    /// `P(θ | k)` over the quality support, skipping zero entries.
    pub fn quality_given_degree(&self, k: u64) -> Result<Vec<(u32, f64)>> {
        let total = self.degree_prob(k);
        if !(total > 0.0) {
            return Err(GfpError::UndefinedConditional(format!(
                "P(k={k}) is zero or outside the table [{}, {}]",
                self.k_min(),
                self.k_max
            )));
        }
        Ok(self.params.quality.support().map(|t| (t, self.prob(k, t) / total)).filter(|(_, w)| *w > 0.0).collect())
    }
}

/// Smallest `k ≥ start` with `f(k) < target` for non-increasing `f`, or
/// `None` if that lies beyond `cap`.
fn first_below(start: u64, cap: u64, target: f64, f: impl Fn(u64) -> f64) -> Option<u64> {
    if f(start) < target {
        return Some(start);
    }
    let mut lo = start; // f(lo) >= target
    let mut hi = start.max(1);
    loop {
        hi = (hi * 2).min(cap);
        if f(hi) < target {
            break;
        }
        if hi == cap {
            return None;
        }
        lo = hi;
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if f(mid) < target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Fills one quality column by the ratio recurrence
/// `P(k+1,θ)/P(k,θ) = (k+θ)/(k+θ+3+μ/β)`, re-anchored on the exact value
/// every 512 rows to bound drift.
fn fill_column(params: &ModelParams, theta: u32, weight: f64, beta: u64, rows: usize, width: usize, probs: &mut [f64]) {
    let c = params.tail_exponent_offset();
    let t = theta as f64;
    let ln_w = weight.ln();
    let mut value = 0.0;
    for row in 0..rows {
        let k = beta + row as u64;
        if row % 512 == 0 {
            value = (ln_w + ln_degree_given_quality(params, k, theta)).exp();
        } else {
            let prev = (k - 1) as f64;
            value *= (prev + t) / (prev + t + c + 1.0);
        }
        probs[row * width + theta as usize] = value;
    }
}

/// Fraction of the neighbors of a `(k, θ)` node that have degree `ℓ` and
/// quality `φ`, evaluated exactly as the closed form is written: a
/// prefactor times the sum of two bracketed sums, each term assembled from
/// log-gamma and log-binomial values and combined by log-sum-exp.
pub fn nn_probability(params: &ModelParams, k: u64, theta: u32, ell: u64, phi: u32) -> Result<f64> {
    params.check_quality(theta, "theta")?;
    params.check_quality(phi, "phi")?;
    params.check_degree(k, "k")?;
    params.check_degree(ell, "ell")?;
    Ok(nn_probability_unchecked(params, k, theta, ell, phi))
}

pub(crate) fn nn_probability_unchecked(params: &ModelParams, k: u64, theta: u32, ell: u64, phi: u32) -> f64 {
    let beta = params.beta as u64;
    let m = params.mu_over_beta;
    let b = beta as f64;
    let (kf, lf, th, ph) = (k as f64, ell as f64, theta as f64, phi as f64);
    let a = kf + th + 3.0 + m;
    let gamma_phi = lgamma(b + 2.0 + ph + m);
    let gamma_theta = lgamma(b + 2.0 + th + m);

    let prefix =
        params.quality.prob(phi).ln() - kf.ln() - lgamma_ratio(a, lf + ph) + lgamma_ratio(b + ph, lf - b) + gamma_phi;

    let mut terms = Vec::with_capacity((k + ell).saturating_sub(2 * beta) as usize);
    for j in beta + 1..=k {
        let jf = j as f64;
        terms.push(lgamma_ratio(jf + th + 2.0 + m, b + ph) + lbinom(k - j + ell - beta, ell - beta) - gamma_phi);
    }
    for j in beta + 1..=ell {
        let jf = j as f64;
        terms.push(lgamma_ratio(jf + ph + 2.0 + m, b + th) + lbinom(ell - j + k - beta, k - beta) - gamma_theta);
    }
    if terms.is_empty() {
        return 0.0;
    }
    (prefix + log_sum_exp(&terms)).exp()
}

/// `Σ_ℓ P(ℓ, φ | k, θ)`, which does not depend on `θ`.
pub fn neighbor_quality_given_degree(params: &ModelParams, k: u64, phi: u32) -> f64 {
    let b = params.beta as f64;
    let kf = k as f64;
    let rho = params.quality.prob(phi);
    rho / kf * ((kf - b) + b * (b + phi as f64) / (b + params.mu()))
}

/// `E[ℓ | k, θ]` over the neighbors of a `(k, θ)` node. Infinite when the
/// mean quality is zero (the neighbor-degree tail then decays like `ℓ^-2`).
pub fn mean_neighbor_degree(params: &ModelParams, k: u64, theta: u32) -> f64 {
    let m = params.mu_over_beta;
    if m <= 0.0 {
        return f64::INFINITY;
    }
    let b = params.beta as f64;
    let kf = k as f64;
    let th = theta as f64;
    let mu = params.mu();
    let harmonic = digamma(kf + th + 2.0 + m) - digamma(b + th + 2.0 + m);
    let shifted =
        (kf + th + 2.0 + m) / kf * ((b + mu) * harmonic + params.shifted_second_moment / (m * (b + th + 1.0 + m)));
    let phi_mean = ((kf - b) * mu + b * params.phi_weighted / (b + mu)) / kf;
    shifted - phi_mean
}

/// What a [`NeighborDist`] is conditioned on and ranges over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NeighborKind {
    /// `P(ℓ, φ | k, θ)`, entries indexed by `(ℓ, φ)`.
    JointGivenNode { k: u64, theta: u32 },
    /// `P(φ | θ)`, entries indexed by `φ`.
    QualityGivenQuality { theta: u32 },
    /// `P(ℓ | k)`, entries indexed by `ℓ`.
    DegreeGivenDegree { k: u64 },
}

/// A truncated neighbor distribution.
#[derive(Debug, Clone, Serialize)]
pub struct NeighborDist {
    pub kind: NeighborKind,
    /// First neighbor degree (always β).
    pub ell_min: u64,
    /// Last enumerated neighbor degree; unused for quality distributions.
    pub ell_max: u64,
    /// Width of the quality axis, `θ_max + 1`.
    pub quality_width: usize,
    pub probs: Vec<f64>,
    /// Mass beyond `ell_max` (estimated) or zero for exact distributions.
    pub tail_mass: f64,
    /// `Σ_{ℓ > ell_max} ℓ·P(ℓ)` for degree distributions.
    pub tail_first_moment: f64,
    /// Mean of the attribute the distribution ranges over (exact).
    pub mean: Option<f64>,
    /// Median under the smallest-value-with-CDF-at-least-one-half rule.
    pub median: Option<u64>,
}

impl NeighborDist {
    /// `Σ probs + tail_mass`.
    pub fn total(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        self.probs.iter().for_each(|p| acc.add(*p));
        acc.add(self.tail_mass);
        acc.value()
    }

    /// Entry for `(ℓ, φ)` of a joint distribution.
    pub fn joint_prob(&self, ell: u64, phi: u32) -> f64 {
        if ell < self.ell_min || ell > self.ell_max || phi as usize >= self.quality_width {
            return 0.0;
        }
        self.probs[(ell - self.ell_min) as usize * self.quality_width + phi as usize]
    }

    /// `Σ_{ℓ ≤ ell_max} ℓ·P(ℓ) + tail_first_moment` for a degree distribution.
    pub fn truncated_mean(&self) -> f64 {
        let mut acc = CompensatedSum::default();
        for (i, p) in self.probs.iter().enumerate() {
            acc.add((self.ell_min + i as u64) as f64 * p);
        }
        acc.add(self.tail_first_moment);
        acc.value()
    }

    /// Writes a joint distribution as CSV with `ell,phi,prob` rows.
    pub fn write_nn_table<W: Write + ?Sized>(&self, beta: u32, quality: &QualityPmf, out: &mut W) -> io::Result<()> {
        let NeighborKind::JointGivenNode { k, theta } = self.kind else {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "not a joint neighbor distribution"));
        };
        writeln!(out, "# beta={beta}")?;
        writeln!(out, "# k={k}")?;
        writeln!(out, "# theta={theta}")?;
        writeln!(out, "# tail_mass={:e}", self.tail_mass)?;
        writeln!(out, "ell,phi,prob")?;
        let support: Vec<u32> = quality.support().collect();
        for ell in self.ell_min..=self.ell_max {
            for &phi in &support {
                writeln!(out, "{ell},{phi},{:e}", self.joint_prob(ell, phi))?;
            }
        }
        Ok(())
    }
}

/// Stops once ten consecutive `ℓ` each add less than `rel_tol` of the
/// running total, after a minimum span that keeps the tail fit well posed.
/// The fitted tail is accurate once enumeration reaches this multiple of
/// the polynomial degree `k + θ + 1`.
const TAIL_RELIABLE_FACTOR: u64 = 10;

struct EllStop {
    rel_tol: f64,
    min_ell: u64,
    cap: u64,
    run: usize,
    total: CompensatedSum,
}

impl EllStop {
    fn new(trunc: &Truncation, beta: u64, degree: u64) -> Self {
        let min_ell = (beta + 64).max(beta + 8 * degree).min(trunc.ell_cap.max(beta));
        EllStop {
            rel_tol: trunc.rel_tol,
            min_ell,
            cap: trunc.ell_cap.max(beta),
            run: 0,
            total: CompensatedSum::default(),
        }
    }

    /// Records the term at `ell`; true when enumeration should end.
    fn done(&mut self, ell: u64, term: f64) -> bool {
        self.total.add(term);
        if term <= self.rel_tol * self.total.value() {
            self.run += 1;
        } else {
            self.run = 0;
        }
        ell >= self.cap || (self.run >= 10 && ell >= self.min_ell)
    }
}

/// `P(ℓ, φ | k, θ)` enumerated over `ℓ ∈ [β, L]` with a fitted tail.
pub fn nn_joint_dist(params: &ModelParams, k: u64, theta: u32, trunc: &Truncation) -> Result<NeighborDist> {
    trunc.validate()?;
    params.check_quality(theta, "theta")?;
    params.check_degree(k, "k")?;
    let beta = params.beta as u64;
    let width = params.quality.theta_max() as usize + 1;
    let phis: Vec<u32> = params.quality.support().collect();
    let mut kernels: Vec<NeighborKernel> = phis.iter().map(|&phi| NeighborKernel::new(params, k, theta, phi)).collect();
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); phis.len()];
    let mut stop = EllStop::new(trunc, beta, k + params.quality.theta_max() as u64 + 1);
    loop {
        let ell = kernels[0].next_ell();
        let mut row = 0.0;
        for (kernel, col) in kernels.iter_mut().zip(columns.iter_mut()) {
            let (_, v) = kernel.step();
            col.push(v);
            row += v;
        }
        if stop.done(ell, row) {
            break;
        }
    }
    let len = columns[0].len();
    let ell_max = beta + len as u64 - 1;
    let degree = k + theta as u64 + 1;
    if ell_max < TAIL_RELIABLE_FACTOR * degree && stop.run < 10 {
        log::warn!(
            "neighbor tail for k={k}, theta={theta} fitted below {TAIL_RELIABLE_FACTOR}(k+theta+1) = {}; raise ell_cap for an accurate tail",
            TAIL_RELIABLE_FACTOR * degree
        );
    }
    let mut probs = vec![0.0; len * width];
    let mut tail_mass = 0.0;
    let mut tail_first_moment = 0.0;
    for (&phi, col) in phis.iter().zip(&columns) {
        for (i, v) in col.iter().enumerate() {
            probs[i * width + phi as usize] = *v;
        }
        let model = TailModel {
            phi: phi as f64,
            degree: (k + theta as u64 + 1) as f64,
            a: k as f64 + theta as f64 + 3.0 + params.mu_over_beta,
            m: params.mu_over_beta,
        };
        let est = model.estimate(beta, col);
        tail_mass += est.mass;
        tail_first_moment += est.first_moment;
    }
    Ok(NeighborDist {
        kind: NeighborKind::JointGivenNode { k, theta },
        ell_min: beta,
        ell_max,
        quality_width: width,
        probs,
        tail_mass,
        tail_first_moment,
        mean: None,
        median: None,
    })
}

/// `E[1/k | θ]`. Terms are summed until the remainder is pinned down by
/// the closed form of `Σ_{k>K} P(k|θ)/(k+θ−1)`, which brackets it within a
/// factor `1 + (θ−1)/(K+1)`.
fn inverse_degree_mean(params: &ModelParams, theta: u32, trunc: &Truncation) -> Result<f64> {
    let beta = params.beta as u64;
    let c = params.tail_exponent_offset();
    let b = params.beta as f64;
    let t = theta as f64;
    let ln_norm = c.ln() + lgamma_ratio(b + t, c);
    let mut acc = CompensatedSum::default();
    let mut p = 0.0;
    for k in beta..=trunc.joint_k_cap {
        let offset = k - beta;
        if offset.is_multiple_of(512) {
            p = ln_degree_given_quality(params, k, theta).exp();
        } else {
            let prev = (k - 1) as f64;
            p *= (prev + t) / (prev + t + c + 1.0);
        }
        acc.add(p / k as f64);
        if offset >= 16 && offset.is_multiple_of(64) {
            let kk = k as f64;
            let shifted = (ln_norm - lgamma_ratio(kk + t, c + 1.0)).exp() / (c + 1.0);
            let spread = (t - 1.0) / (2.0 * (kk + 1.0));
            if shifted * spread.abs() <= 1e-3 * trunc.rel_tol * acc.value() {
                acc.add(shifted * (1.0 + spread));
                return Ok(acc.value());
            }
        }
    }
    Err(GfpError::NonConvergence { what: "inverse degree mean".into(), cap: trunc.joint_k_cap })
}

/// `P(φ | θ) = Σ_k P(k|θ) Σ_ℓ P(ℓ,φ|k,θ)`. The inner sum is closed-form,
/// which leaves `ρ(φ)[1 + β·E[1/k|θ]·(φ − μ)/(β + μ)]`.
pub fn neighbor_quality_dist(params: &ModelParams, theta: u32, trunc: &Truncation) -> Result<NeighborDist> {
    trunc.validate()?;
    if !params.quality.in_support(theta) {
        return Err(GfpError::UndefinedConditional(format!(
            "quality {theta} has zero probability; P(phi | theta) is undefined"
        )));
    }
    let b = params.beta as f64;
    let mu = params.mu();
    let tilt = b * inverse_degree_mean(params, theta, trunc)? / (b + mu);
    let probs: Vec<f64> = params
        .quality
        .probs()
        .iter()
        .enumerate()
        .map(|(phi, &rho)| (rho * (1.0 + tilt * (phi as f64 - mu))).max(0.0))
        .collect();
    let mean = probs.iter().enumerate().map(|(phi, p)| phi as f64 * p).sum();
    let median = median_index(probs.iter().copied()).map(|m| m as u64);
    Ok(NeighborDist {
        kind: NeighborKind::QualityGivenQuality { theta },
        ell_min: params.beta as u64,
        ell_max: params.beta as u64,
        quality_width: probs.len(),
        probs,
        tail_mass: 0.0,
        tail_first_moment: 0.0,
        mean: Some(mean),
        median,
    })
}

/// Mean of `P(φ | θ)` without materializing the distribution.
pub fn mean_neighbor_quality(params: &ModelParams, theta: u32, trunc: &Truncation) -> Result<f64> {
    Ok(neighbor_quality_dist(params, theta, trunc)?.mean.unwrap())
}

/// `E[ℓ | k] = Σ_θ P(θ|k) E[ℓ | k, θ]`.
pub fn mean_neighbor_degree_given_degree(joint: &JointTable, k: u64) -> Result<f64> {
    let weights = joint.quality_given_degree(k)?;
    let params = joint.params();
    Ok(weights.iter().map(|&(t, w)| w * mean_neighbor_degree(params, k, t)).sum())
}

/// One `(θ, φ)` stream of `P(ℓ | k)` with its mixing weight `P(θ|k)`.
struct Stream {
    weight: f64,
    kernel: NeighborKernel,
}

fn degree_streams(joint: &JointTable, k: u64, min_mass: f64) -> Result<Vec<Stream>> {
    let params = joint.params();
    let weights = joint.quality_given_degree(k)?;
    let phis: Vec<u32> = params.quality.support().collect();
    let mut streams = Vec::with_capacity(weights.len() * phis.len());
    for &(theta, w) in &weights {
        for &phi in &phis {
            if w * neighbor_quality_given_degree(params, k, phi) < min_mass {
                continue;
            }
            streams.push(Stream { weight: w, kernel: NeighborKernel::new(params, k, theta, phi) });
        }
    }
    Ok(streams)
}

/// `P(ℓ | k) = Σ_θ P(θ|k) Σ_φ P(ℓ,φ|k,θ)` enumerated over `ℓ ∈ [β, L]`,
/// with the mean taken from the exact first moment and the remainder mass
/// fitted from the enumerated range.
pub fn neighbor_degree_dist(joint: &JointTable, k: u64, trunc: &Truncation) -> Result<NeighborDist> {
    trunc.validate()?;
    let params = joint.params();
    params.check_degree(k, "k")?;
    if k > joint.k_max() {
        return Err(GfpError::domain(format!("k = {k} exceeds the table limit {}", joint.k_max())));
    }
    let beta = params.beta as u64;
    let mut streams = degree_streams(joint, k, 0.0)?;
    let mut probs = Vec::new();
    let mut stop = EllStop::new(trunc, beta, k + params.quality.theta_max() as u64 + 1);
    loop {
        let ell = streams[0].kernel.next_ell();
        let mut acc = CompensatedSum::default();
        for s in streams.iter_mut() {
            acc.add(s.weight * s.kernel.step().1);
        }
        let v = acc.value();
        probs.push(v);
        if stop.done(ell, v) {
            break;
        }
    }
    // Every stream shares the ℓ^-(2+μ/β) power law, so one basis family
    // describes the mixture's tail.
    let model =
        TailModel { phi: 0.0, degree: (k + 1) as f64, a: k as f64 + 3.0 + params.mu_over_beta, m: params.mu_over_beta };
    let est = model.estimate(beta, &probs);
    let median = cdf_median(beta, &probs);
    Ok(NeighborDist {
        kind: NeighborKind::DegreeGivenDegree { k },
        ell_min: beta,
        ell_max: beta + probs.len() as u64 - 1,
        quality_width: params.quality.theta_max() as usize + 1,
        probs,
        tail_mass: est.mass,
        tail_first_moment: est.first_moment,
        mean: Some(mean_neighbor_degree_given_degree(joint, k)?),
        median,
    })
}

fn cdf_median(first: u64, probs: &[f64]) -> Option<u64> {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if acc >= 0.5 - 1e-12 {
            return Some(first + i as u64);
        }
    }
    None
}

/// Median of `P(ℓ | k)`, enumerating only as far as the CDF needs to go.
/// `None` if the CDF has not reached one half by `ell_cap`.
pub fn median_neighbor_degree(joint: &JointTable, k: u64, trunc: &Truncation) -> Result<Option<u64>> {
    let params = joint.params();
    params.check_degree(k, "k")?;
    let mut streams = degree_streams(joint, k, NEGLIGIBLE_STREAM_MASS)?;
    let mut acc = 0.0;
    loop {
        let ell = streams[0].kernel.next_ell();
        for s in streams.iter_mut() {
            acc += s.weight * s.kernel.step().1;
        }
        if acc >= 0.5 - 1e-12 {
            return Ok(Some(ell));
        }
        if ell >= trunc.ell_cap {
            return Ok(None);
        }
    }
}

/// `|k·P(k,θ)·P(ℓ,φ|k,θ) − ℓ·P(ℓ,φ)·P(k,θ|ℓ,φ)|`: edges counted from either
/// end. Reported as a diagnostic only.
pub fn edge_balance_residual(params: &ModelParams, k: u64, theta: u32, ell: u64, phi: u32) -> Result<f64> {
    let forward = k as f64 * joint_probability(params, k, theta)? * nn_probability(params, k, theta, ell, phi)?;
    let backward = ell as f64 * joint_probability(params, ell, phi)? * nn_probability(params, ell, phi, k, theta)?;
    let residual = (forward - backward).abs();
    log::debug!(
        "edge balance (k={k},θ={theta}) ↔ (ℓ={ell},φ={phi}): {forward:e} vs {backward:e}, residual {residual:e}"
    );
    Ok(residual)
}

#[cfg(test)]
mod tests;
