//! Mean and median friendship/quality paradox measures.
//!
//! A critical value is the largest attribute value whose holder still sits
//! strictly below the mean (or median) of its neighbors' attribute. The
//! paradox fraction is the share of nodes at or below that value.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::{
    build_joint_table, mean_neighbor_degree_given_degree, median_neighbor_degree, neighbor_quality_dist, JointTable,
    ModelParams, Truncation,
};
use crate::error::{ErrorKind, GfpError, Result};
use crate::quality::QualityPmf;

/// Relative slack below which a value counts as tied with a real-valued
/// mean. Ties never qualify.
const TIE_SLACK: f64 = 1e-9;

pub const SWEEP_CSV_HEADER: &str = "family,x,beta,theta_max,crit_q_mean,crit_q_median,crit_k_mean,crit_k_median,\
crit_q_mean_u,crit_q_median_u,crit_k_mean_u,crit_k_median_u,frac_q_mean,frac_q_median,frac_k_mean,frac_k_median";

/// `value < stat`, with near-ties resolved as not less.
fn strictly_below(value: f64, stat: f64) -> bool {
    if stat == f64::INFINITY {
        return value.is_finite();
    }
    value < stat - TIE_SLACK * stat.abs().max(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    Qpa,
    Uncorrelated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Criticals {
    pub quality_mean: Option<u32>,
    pub quality_median: Option<u32>,
    pub degree_mean: Option<u64>,
    pub degree_median: Option<u64>,
    pub baseline: Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Fractions {
    pub quality_mean: f64,
    pub quality_median: f64,
    pub degree_mean: f64,
    pub degree_median: f64,
}

/// How far the degree scans look: at least `span_factor · ⟨k⟩`, then until
/// the inequality has failed `failure_run` times in a row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScanBounds {
    pub span_factor: f64,
    pub failure_run: u32,
}

impl Default for ScanBounds {
    fn default() -> Self {
        ScanBounds { span_factor: 4.0, failure_run: 25 }
    }
}

/// Largest `k ≥ β` accepted by `qualifies`, scanning per [`ScanBounds`] up
/// to the table limit.
fn scan_degrees(
    joint: &JointTable,
    bounds: &ScanBounds,
    what: &str,
    mut qualifies: impl FnMut(u64) -> Result<bool>,
) -> Result<Option<u64>> {
    let min_end = (bounds.span_factor * joint.mean_degree()).ceil() as u64;
    let mut best = None;
    let mut failures = 0u32;
    let mut k = joint.k_min();
    loop {
        if qualifies(k)? {
            best = Some(k);
            failures = 0;
        } else {
            failures += 1;
        }
        if failures >= bounds.failure_run && k >= min_end {
            return Ok(best);
        }
        if k >= joint.k_max() {
            if failures == 0 {
                log::warn!("{what} inequality still holds at the scan edge k = {k}");
            }
            return Ok(best);
        }
        k += 1;
    }
}

/// Paradox critical values of the quality-based attachment model.
pub fn critical_values(
    params: &ModelParams,
    joint: &JointTable,
    trunc: &Truncation,
    bounds: &ScanBounds,
) -> Result<Criticals> {
    let mut quality_mean = None;
    let mut quality_median = None;
    for theta in params.quality().support() {
        let dist = neighbor_quality_dist(params, theta, trunc)?;
        if strictly_below(theta as f64, dist.mean.unwrap()) {
            quality_mean = Some(theta);
        }
        if dist.median.is_some_and(|m| (theta as u64) < m) {
            quality_median = Some(theta);
        }
    }
    let degree_mean = scan_degrees(joint, bounds, "mean friendship paradox", |k| {
        Ok(strictly_below(k as f64, mean_neighbor_degree_given_degree(joint, k)?))
    })?;
    let degree_median = scan_degrees(joint, bounds, "median friendship paradox", |k| {
        // No median within the enumeration cap means it lies beyond it.
        Ok(match median_neighbor_degree(joint, k, trunc)? {
            Some(m) => k < m,
            None => k < trunc.ell_cap,
        })
    })?;
    Ok(Criticals { quality_mean, quality_median, degree_mean, degree_median, baseline: Baseline::Qpa })
}

/// Critical values when neighbors are drawn independently of the node:
/// the largest support value strictly below `μ`, `θ̂`, `⟨k⟩`, `k̂`.
pub fn uncorrelated_criticals(params: &ModelParams, joint: &JointTable) -> Criticals {
    let quality = params.quality();
    let mu = quality.mean();
    let median = quality.median();
    let below_mean = quality.support().filter(|&t| strictly_below(t as f64, mu)).last();
    let below_median = quality.support().filter(|&t| t < median).last();
    let kbar = joint.mean_degree();
    let degree_mean = (joint.k_min()..=joint.k_max()).take_while(|&k| strictly_below(k as f64, kbar)).last();
    let kmed = joint.median_degree();
    let degree_median = (kmed > joint.k_min()).then(|| kmed - 1);
    Criticals {
        quality_mean: below_mean,
        quality_median: below_median,
        degree_mean,
        degree_median,
        baseline: Baseline::Uncorrelated,
    }
}

/// Share of nodes at or below each critical value; zero when it is absent.
pub fn paradox_fractions(params: &ModelParams, crit: &Criticals, joint: &JointTable) -> Fractions {
    let q = |c: Option<u32>| c.map_or(0.0, |t| params.quality().cdf(t));
    let k = |c: Option<u64>| c.map_or(0.0, |k| joint.degree_cdf(k));
    Fractions {
        quality_mean: q(crit.quality_mean),
        quality_median: q(crit.quality_median),
        degree_mean: k(crit.degree_mean),
        degree_median: k(crit.degree_median),
    }
}

/// All eight critical values with the four fractions for the model.
#[derive(Debug, Clone, Serialize)]
pub struct ParadoxReport {
    pub qpa: Criticals,
    pub uncorrelated: Criticals,
    pub fractions: Fractions,
    pub mean_degree: f64,
    pub median_degree: u64,
}

pub fn paradox_report(params: &ModelParams, trunc: &Truncation, bounds: &ScanBounds) -> Result<ParadoxReport> {
    let joint = build_joint_table(params, trunc)?;
    let qpa = critical_values(params, &joint, trunc, bounds)?;
    let uncorrelated = uncorrelated_criticals(params, &joint);
    let fractions = paradox_fractions(params, &qpa, &joint);
    Ok(ParadoxReport {
        qpa,
        uncorrelated,
        fractions,
        mean_degree: joint.mean_degree(),
        median_degree: joint.median_degree(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Bernoulli,
    Exponential,
}

impl Family {
    pub fn build(self, x: f64, theta_max: u32) -> Result<QualityPmf> {
        match self {
            Family::Bernoulli => QualityPmf::bernoulli(x, theta_max),
            Family::Exponential => QualityPmf::exponential(x, theta_max),
        }
    }

    /// Name of the family parameter on the command line.
    pub fn param_name(self) -> &'static str {
        match self {
            Family::Bernoulli => "p",
            Family::Exponential => "q",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Bernoulli => "bernoulli",
            Family::Exponential => "exponential",
        })
    }
}

impl FromStr for Family {
    type Err = GfpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bernoulli" => Ok(Family::Bernoulli),
            "exponential" => Ok(Family::Exponential),
            other => Err(GfpError::Usage(format!("unknown family `{other}` (bernoulli|exponential)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepSpec {
    pub family: Family,
    pub x: Vec<f64>,
    pub beta: Vec<u32>,
    pub theta_max: Vec<u32>,
}

impl SweepSpec {
    /// Grid points in output order: by `x`, then `β`, then `θmax`.
    pub fn points(&self) -> Vec<(f64, u32, u32)> {
        let mut pts = Vec::with_capacity(self.x.len() * self.beta.len() * self.theta_max.len());
        for &x in &self.x {
            for &b in &self.beta {
                for &t in &self.theta_max {
                    pts.push((x, b, t));
                }
            }
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        pts
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub family: Family,
    pub x: f64,
    pub beta: u32,
    pub theta_max: u32,
    pub report: Option<ParadoxReport>,
    /// Set instead of `report` when this grid point failed.
    pub error: Option<PointError>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointError {
    pub kind: ErrorKind,
    pub message: String,
}

impl SweepRow {
    pub fn point_label(&self) -> String {
        format!(
            "{} {}={} beta={} theta_max={}",
            self.family,
            self.family.param_name(),
            self.x,
            self.beta,
            self.theta_max
        )
    }
}

/// Evaluates every grid point independently, in parallel on the current
/// rayon pool. A failing point records its error and does not stop the rest.
pub fn sweep(spec: &SweepSpec, trunc: &Truncation, bounds: &ScanBounds) -> Result<Vec<SweepRow>> {
    if spec.x.is_empty() || spec.beta.is_empty() || spec.theta_max.is_empty() {
        return Err(GfpError::Usage("sweep grids must be non-empty".into()));
    }
    for &x in &spec.x {
        spec.family.build(x, 1)?;
    }
    let rows = spec
        .points()
        .into_par_iter()
        .map(|(x, beta, theta_max)| {
            let result = spec
                .family
                .build(x, theta_max)
                .and_then(|pmf| ModelParams::new(beta, pmf))
                .and_then(|params| paradox_report(&params, trunc, bounds));
            let (report, error) = match result {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(PointError { kind: e.kind(), message: e.to_string() })),
            };
            SweepRow { family: spec.family, x, beta, theta_max, report, error }
        })
        .collect();
    Ok(rows)
}

fn opt<T: fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

/// Writes rows under [`SWEEP_CSV_HEADER`]. Rows that failed keep their grid
/// coordinates and leave every measure empty.
pub fn write_sweep_csv<W: Write + ?Sized>(rows: &[SweepRow], out: &mut W) -> io::Result<()> {
    writeln!(out, "{SWEEP_CSV_HEADER}")?;
    for row in rows {
        write!(out, "{},{},{},{}", row.family, row.x, row.beta, row.theta_max)?;
        match &row.report {
            Some(r) => {
                let (c, u, f) = (&r.qpa, &r.uncorrelated, &r.fractions);
                writeln!(
                    out,
                    ",{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{:.6}",
                    opt(c.quality_mean),
                    opt(c.quality_median),
                    opt(c.degree_mean),
                    opt(c.degree_median),
                    opt(u.quality_mean),
                    opt(u.quality_median),
                    opt(u.degree_mean),
                    opt(u.degree_median),
                    f.quality_mean,
                    f.quality_median,
                    f.degree_mean,
                    f.degree_median
                )?;
            }
            None => writeln!(out, "{}", ",".repeat(12))?,
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(beta: u32, pmf: QualityPmf) -> ModelParams {
        ModelParams::new(beta, pmf).unwrap()
    }

    fn report(p: &ModelParams) -> ParadoxReport {
        paradox_report(p, &Truncation::default(), &ScanBounds::default()).unwrap()
    }

    #[test]
    fn all_zero_quality_has_no_quality_paradox() {
        let p = params(2, QualityPmf::bernoulli(1.0, 8).unwrap());
        let r = report(&p);
        assert_eq!(r.qpa.quality_mean, None);
        assert_eq!(r.qpa.quality_median, None);
        assert_eq!(r.fractions.quality_mean, 0.0);
        // Barabási–Albert: every degree sits below the (divergent) mean.
        assert!(r.qpa.degree_mean.unwrap() >= 2);
        assert!(r.fractions.degree_mean > 0.99);
    }

    #[test]
    fn uncorrelated_examples() {
        let joint_for = |p: &ModelParams| build_joint_table(p, &Truncation::default()).unwrap();

        let p = params(2, QualityPmf::bernoulli(0.2, 10).unwrap());
        let u = uncorrelated_criticals(&p, &joint_for(&p));
        assert_eq!(u.quality_mean, Some(0));
        let f = paradox_fractions(&p, &u, &joint_for(&p));
        assert!((f.quality_mean - 0.2).abs() < 1e-15);

        let p = params(2, QualityPmf::bernoulli(0.6, 8).unwrap());
        assert_eq!(uncorrelated_criticals(&p, &joint_for(&p)).quality_median, None);

        let p = params(3, QualityPmf::exponential(1.0, 8).unwrap());
        let joint = joint_for(&p);
        let u = uncorrelated_criticals(&p, &joint);
        assert_eq!(u.quality_mean, Some(3));
        assert_eq!(u.quality_median, Some(3));
        // ⟨k⟩ = 2β exactly, so the largest degree below it is 2β − 1.
        assert_eq!(u.degree_mean, Some(5));
        assert_eq!(u.degree_median, Some(joint.median_degree() - 1));
    }

    #[test]
    fn qpa_quality_critical_at_least_uncorrelated() {
        let p = params(2, QualityPmf::exponential(0.5, 16).unwrap());
        let r = report(&p);
        assert!(r.qpa.quality_mean >= r.uncorrelated.quality_mean);
        assert!(r.fractions.degree_median <= r.fractions.degree_mean);
    }

    #[test]
    fn criticals_are_strict_and_maximal() {
        let p = params(2, QualityPmf::exponential(0.7, 8).unwrap());
        let trunc = Truncation::default();
        let joint = build_joint_table(&p, &trunc).unwrap();
        let c = critical_values(&p, &joint, &trunc, &ScanBounds::default()).unwrap();
        let tq = c.quality_mean.unwrap();
        for theta in 0..=8u32 {
            let mean = neighbor_quality_dist(&p, theta, &trunc).unwrap().mean.unwrap();
            assert_eq!(theta as f64 == tq as f64, theta == tq);
            if theta > tq {
                assert!(!strictly_below(theta as f64, mean));
            }
        }
        let kc = c.degree_mean.unwrap();
        assert!((kc as f64) < mean_neighbor_degree_given_degree(&joint, kc).unwrap());
        for k in kc + 1..kc + 60 {
            assert!((k as f64) >= mean_neighbor_degree_given_degree(&joint, k).unwrap());
        }
        let km = c.degree_median.unwrap();
        assert!(km < median_neighbor_degree(&joint, km, &trunc).unwrap().unwrap());
        for k in km + 1..km + 40 {
            assert!(k >= median_neighbor_degree(&joint, k, &trunc).unwrap().unwrap());
        }
    }

    #[test]
    fn fractions_are_direct_sums() {
        let p = params(4, QualityPmf::exponential(1.3, 8).unwrap());
        let trunc = Truncation::default();
        let joint = build_joint_table(&p, &trunc).unwrap();
        let c = critical_values(&p, &joint, &trunc, &ScanBounds::default()).unwrap();
        let f = paradox_fractions(&p, &c, &joint);
        let direct_q: f64 = (0..=c.quality_mean.unwrap()).map(|t| p.quality().prob(t)).sum();
        assert!((f.quality_mean - direct_q).abs() < 1e-12);
        let direct_k: f64 = (4..=c.degree_mean.unwrap()).map(|k| joint.degree_prob(k)).sum();
        assert!((f.degree_mean - direct_k).abs() < 1e-12);
    }

    #[test]
    fn sweep_orders_rows_and_writes_csv() {
        let spec = SweepSpec { family: Family::Bernoulli, x: vec![1.0, 0.5], beta: vec![3, 2], theta_max: vec![4] };
        let rows = sweep(&spec, &Truncation::default(), &ScanBounds::default()).unwrap();
        let keys: Vec<(f64, u32)> = rows.iter().map(|r| (r.x, r.beta)).collect();
        assert_eq!(keys, vec![(0.5, 2), (0.5, 3), (1.0, 2), (1.0, 3)]);
        let mut buf = Vec::new();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], SWEEP_CSV_HEADER);
        assert_eq!(lines.len(), 5);
        for line in &lines {
            assert_eq!(line.split(',').count(), 16);
        }
        // p = 1: no quality below the all-zero mean.
        assert!(lines[3].starts_with("bernoulli,1,2,4,,"));
    }

    #[test]
    fn sweep_rejects_bad_domain() {
        let spec = SweepSpec { family: Family::Exponential, x: vec![-1.0], beta: vec![2], theta_max: vec![4] };
        assert!(matches!(sweep(&spec, &Truncation::default(), &ScanBounds::default()), Err(GfpError::Domain(_))));
    }

    #[test]
    fn family_round_trip() {
        for f in [Family::Bernoulli, Family::Exponential] {
            assert_eq!(f.to_string().parse::<Family>().unwrap(), f);
        }
        assert!("gaussian".parse::<Family>().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(200))]

            #[test]
            fn uncorrelated_matches_max_scan(weights in proptest::collection::vec(0.0f64..1.0, 2..12), beta in 1u32..5) {
                prop_assume!(weights.iter().sum::<f64>() > 1e-6);
                let pmf = QualityPmf::from_weights(weights).unwrap();
                let p = params(beta, pmf.clone());
                let trunc = Truncation::with_rel_tol(1e-8);
                let joint = build_joint_table(&p, &trunc).unwrap();
                let u = uncorrelated_criticals(&p, &joint);
                let mu = pmf.mean();
                let scan_mean = (0..=pmf.theta_max())
                    .filter(|&t| pmf.prob(t) > 0.0 && strictly_below(t as f64, mu))
                    .max();
                let scan_median = (0..=pmf.theta_max())
                    .filter(|&t| pmf.prob(t) > 0.0 && t < pmf.median())
                    .max();
                prop_assert_eq!(u.quality_mean, scan_mean);
                prop_assert_eq!(u.quality_median, scan_median);
                prop_assert_eq!(u.degree_mean, Some(2 * beta as u64 - 1));
                let kmed = joint.median_degree();
                let scan_kmed = (beta as u64..=joint.k_max()).filter(|&k| k < kmed).max();
                prop_assert_eq!(u.degree_median, scan_kmed);
            }
        }
    }
}
