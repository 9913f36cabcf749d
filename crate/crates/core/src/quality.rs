//! Discrete quality distributions on `{0, ..., theta_max}`.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::Serialize;

use crate::error::{GfpError, Result};

/// Slack when comparing a cumulative probability against one half, so that
/// a CDF that is exactly 1/2 on paper is not pushed below it by rounding.
const HALF_SLACK: f64 = 1e-12;

/// Which family a pmf was built from, with its parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum QualityFamily {
    /// Quality 0 with probability `p`, `theta_max` otherwise.
    Bernoulli {
        p: f64,
    },
    /// Mass proportional to `q^θ`.
    Exponential {
        q: f64,
    },
    Custom,
}

impl QualityFamily {
    /// The sweep parameter `p` or `q`, if any.
    pub fn param(&self) -> Option<f64> {
        match *self {
            QualityFamily::Bernoulli { p } => Some(p),
            QualityFamily::Exponential { q } => Some(q),
            QualityFamily::Custom => None,
        }
    }
}

/// An immutable quality pmf with its cached mean, median and CDF.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QualityPmf {
    probs: Vec<f64>,
    cdf: Vec<f64>,
    family: QualityFamily,
    mean: f64,
    median: u32,
}

impl QualityPmf {
    pub fn bernoulli(p: f64, theta_max: u32) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(GfpError::domain(format!("Bernoulli p must lie in [0,1], got {p}")));
        }
        if theta_max < 1 {
            return Err(GfpError::domain("theta_max must be at least 1"));
        }
        let mut probs = vec![0.0; theta_max as usize + 1];
        probs[0] = p;
        probs[theta_max as usize] = 1.0 - p;
        Ok(Self::from_normalized(probs, QualityFamily::Bernoulli { p }))
    }

    pub fn exponential(q: f64, theta_max: u32) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(GfpError::domain(format!("exponential q must be > 0, got {q}")));
        }
        if theta_max < 1 {
            return Err(GfpError::domain("theta_max must be at least 1"));
        }
        // Normalize against the largest weight so q^θ cannot overflow.
        let n = theta_max as i32;
        let ln_q = q.ln();
        let top = if q > 1.0 { n as f64 * ln_q } else { 0.0 };
        let weights: Vec<f64> = (0..=n).map(|t| (t as f64 * ln_q - top).exp()).collect();
        let total: f64 = weights.iter().sum();
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::from_normalized(probs, QualityFamily::Exponential { q }))
    }

    /// Arbitrary non-negative weights indexed by quality; normalized here.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(GfpError::Usage("quality weights are empty".into()));
        }
        if let Some((t, w)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0) || !w.is_finite()) {
            return Err(GfpError::domain(format!("weight for quality {t} is {w}")));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(GfpError::domain("quality weights sum to zero"));
        }
        let probs = weights.into_iter().map(|w| w / total).collect();
        Ok(Self::from_normalized(probs, QualityFamily::Custom))
    }

    /// Reads `θ weight` pairs, one per line. `#` starts a comment; qualities
    /// not listed get weight zero.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let parse_err = |line: usize, msg: String| GfpError::Parse { path: path.to_path_buf(), line, msg };
        let mut weights: Vec<f64> = Vec::new();
        let mut seen = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let (Some(t), Some(w), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(parse_err(line_no, format!("expected `theta weight`, got `{line}`")));
            };
            let t: usize = t.parse().map_err(|_| parse_err(line_no, format!("bad quality `{t}`")))?;
            let w: f64 = w.parse().map_err(|_| parse_err(line_no, format!("bad weight `{w}`")))?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(parse_err(line_no, format!("weight must be non-negative, got {w}")));
            }
            if t >= weights.len() {
                weights.resize(t + 1, 0.0);
                seen.resize(t + 1, false);
            }
            if seen[t] {
                return Err(parse_err(line_no, format!("quality {t} listed twice")));
            }
            seen[t] = true;
            weights[t] = w;
        }
        if weights.is_empty() {
            return Err(parse_err(0, "no quality weights found".into()));
        }
        Self::from_weights(weights)
    }

    fn from_normalized(probs: Vec<f64>, family: QualityFamily) -> Self {
        let cdf: Vec<f64> = probs
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        let (mean, median) = pmf_stats(&probs);
        Self { probs, cdf, family, mean, median }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, theta: u32) -> f64 {
        self.probs.get(theta as usize).copied().unwrap_or(0.0)
    }

    pub fn cdf(&self, theta: u32) -> f64 {
        self.cdf.get(theta as usize).copied().unwrap_or_else(|| *self.cdf.last().unwrap())
    }

    pub fn theta_max(&self) -> u32 {
        (self.probs.len() - 1) as u32
    }

    pub fn family(&self) -> QualityFamily {
        self.family
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn median(&self) -> u32 {
        self.median
    }

    /// Qualities with non-zero probability, ascending.
    pub fn support(&self) -> impl Iterator<Item = u32> + '_ {
        self.probs.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(t, _)| t as u32)
    }

    pub fn in_support(&self, theta: u32) -> bool {
        self.prob(theta) > 0.0
    }

    /// Inverse-CDF draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u32 {
        let u: f64 = rng.gen::<f64>() * self.cdf[self.cdf.len() - 1];
        let idx = self.cdf.partition_point(|&c| c <= u);
        // Rounding can leave u at the very top; fall back to the last
        // supported value. Zero-mass entries are never selected because
        // their CDF equals the previous one.
        let idx = idx.min(self.probs.len() - 1);
        if self.probs[idx] > 0.0 {
            idx as u32
        } else {
            self.support().last().unwrap()
        }
    }
}

/// Mean and median of a pmf over `0..probs.len()`. The median is the
/// smallest value whose CDF reaches 1/2.
pub fn pmf_stats(probs: &[f64]) -> (f64, u32) {
    let mean = probs.iter().enumerate().map(|(t, p)| t as f64 * p).sum();
    (mean, median_index(probs.iter().copied()).unwrap_or(0) as u32)
}

/// Index of the first entry at which the running sum reaches half of
/// `total`, for a pmf given as an iterator. `None` on an empty or all-zero
/// input.
pub(crate) fn median_index(probs: impl Iterator<Item = f64>) -> Option<usize> {
    let probs: Vec<f64> = probs.collect();
    let total: f64 = probs.iter().sum();
    if !(total > 0.0) {
        return None;
    }
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if acc >= total * (0.5 - HALF_SLACK) {
            return Some(i);
        }
    }
    Some(probs.len() - 1)
}
