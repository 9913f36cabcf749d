//! Log-space special functions and series truncation.
//!
//! Everything the analytic formulas need is evaluated in log space: raw
//! gamma values overflow `f64` for arguments beyond ~171, while the degree
//! sums routinely reach 10^4 or more.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{GfpError, Result};

/// Lanczos coefficients (g = 671/128 - 1/2, 14 terms) giving close to full
/// double precision over the positive real axis.
const LANCZOS_G: f64 = 5.242_187_5;
const LANCZOS_C0: f64 = 0.999_999_999_999_997_1;
#[allow(clippy::excessive_precision)]
const LANCZOS_COF: [f64; 14] = [
    57.156_235_665_862_923_5,
    -59.597_960_355_475_491_2,
    14.136_097_974_741_747_1,
    -0.491_913_816_097_620_199,
    0.339_946_499_848_118_887e-4,
    0.465_236_289_270_485_756e-4,
    -0.983_744_753_048_795_646e-4,
    0.158_088_703_224_912_494e-3,
    -0.210_264_441_724_104_883e-3,
    0.217_439_618_115_212_643e-3,
    -0.164_318_106_536_763_890e-3,
    0.844_182_239_838_527_433e-4,
    -0.261_908_384_015_814_087e-4,
    0.368_991_826_595_316_234e-5,
];
const SQRT_2PI: f64 = 2.506_628_274_631_000_5;

/// Integer arguments below this bound are served from a lazily built table.
const INT_CACHE_LEN: usize = 1 << 16;

static INT_CACHE: OnceLock<Vec<f64>> = OnceLock::new();

fn lanczos_ln_gamma(x: f64) -> f64 {
    let mut y = x;
    let tmp = x + LANCZOS_G;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = LANCZOS_C0;
    for c in LANCZOS_COF {
        y += 1.0;
        ser += c / y;
    }
    tmp + (SQRT_2PI * ser / x).ln()
}

fn int_cache() -> &'static [f64] {
    INT_CACHE.get_or_init(|| {
        let mut table = Vec::with_capacity(INT_CACHE_LEN);
        table.push(f64::INFINITY); // ln Γ(0) is a pole
        table.extend((1..INT_CACHE_LEN).map(|n| match n {
            1 | 2 => 0.0,
            _ => lanczos_ln_gamma(n as f64),
        }));
        table
    })
}

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(GfpError::domain(format!("ln_gamma requires finite x > 0, got {x}")));
    }
    Ok(lgamma(x))
}

/// Unchecked `ln Γ(x)`; callers guarantee `x > 0`.
#[inline]
pub(crate) fn lgamma(x: f64) -> f64 {
    debug_assert!(x > 0.0, "lgamma({x})");
    if x.fract() == 0.0 && x < INT_CACHE_LEN as f64 {
        return int_cache()[x as usize];
    }
    lanczos_ln_gamma(x)
}

/// `ln Γ(x + d) − ln Γ(x)` without the cancellation of subtracting two
/// large log-gammas. Requires `x > 0` and `x + d > 0`.
pub(crate) fn lgamma_ratio(x: f64, d: f64) -> f64 {
    let y = x + d;
    debug_assert!(x > 0.0 && y > 0.0);
    if x.min(y) < STIRLING_FROM {
        return lgamma(y) - lgamma(x);
    }
    (x - 0.5) * (d / x).ln_1p() + d * y.ln() - d + stirling_correction(y) - stirling_correction(x)
}

const STIRLING_FROM: f64 = 30.0;

/// `ln Γ(y) − [(y − ½) ln y − y + ½ ln 2π]` for large `y`.
fn stirling_correction(y: f64) -> f64 {
    let r = 1.0 / y;
    let r2 = r * r;
    r * (1.0 / 12.0 - r2 * (1.0 / 360.0 - r2 * (1.0 / 1260.0 - r2 / 1680.0)))
}

/// `ln n!` via the integer cache.
#[inline]
pub(crate) fn ln_factorial(n: u64) -> f64 {
    lgamma(n as f64 + 1.0)
}

/// `ln C(n, k)`.
pub fn ln_binomial(n: i64, k: i64) -> Result<f64> {
    if n < 0 || k < 0 || k > n {
        return Err(GfpError::domain(format!("ln_binomial requires 0 <= k <= n, got n={n}, k={k}")));
    }
    Ok(lbinom(n as u64, k as u64))
}

#[inline]
pub(crate) fn lbinom(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    let k = k.min(n - k);
    if k == 0 {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Digamma function `ψ(x)` for `x > 0`.
pub fn digamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut x = x;
    let mut acc = 0.0;
    while x < 12.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Asymptotic series Σ B_2n / (2n x^2n), evaluated by Horner in 1/x².
    const COEFFS: [f64; 6] = [1.0 / 12.0, -1.0 / 120.0, 1.0 / 252.0, -1.0 / 240.0, 1.0 / 132.0, -691.0 / 32760.0];
    let series = inv2 * COEFFS.iter().rev().fold(0.0, |acc, c| acc * inv2 + c);
    acc + x.ln() - 0.5 * inv - series
}

/// `ln Σ exp(t)` without overflow. `-inf` entries are zero terms.
pub fn sum_log_terms(log_terms: &[f64]) -> Result<f64> {
    if log_terms.is_empty() {
        return Err(GfpError::Usage("sum_log_terms needs at least one term".into()));
    }
    Ok(log_sum_exp(log_terms))
}

pub(crate) fn log_sum_exp(log_terms: &[f64]) -> f64 {
    let max = log_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max.is_infinite() {
        return max;
    }
    let mut acc = CompensatedSum::default();
    for &t in log_terms {
        acc.add((t - max).exp());
    }
    max + acc.value().ln()
}

/// Neumaier compensated summation.
#[derive(Debug, Default, Clone, Copy)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Result of a truncated non-negative series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeriesResult {
    pub value: f64,
    /// Estimate of the mass of the omitted terms.
    pub tail_bound: f64,
    pub terms_used: u64,
}

pub const DEFAULT_SERIES_CAP: u64 = 1_000_000;

/// Number of consecutive negligible terms required before stopping.
const NEGLIGIBLE_RUN: usize = 10;

/// Sums `term(start) + term(start + 1) + ...` until ten consecutive terms
/// each contribute less than `rel_tol` times the running sum, then
/// extrapolates the tail geometrically from the decay over the last ten
/// terms.
pub fn adaptive_series<F>(term: F, start: u64, rel_tol: f64) -> Result<SeriesResult>
where
    F: FnMut(u64) -> f64,
{
    adaptive_series_capped(term, start, rel_tol, DEFAULT_SERIES_CAP)
}

pub fn adaptive_series_capped<F>(mut term: F, start: u64, rel_tol: f64, cap: u64) -> Result<SeriesResult>
where
    F: FnMut(u64) -> f64,
{
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(GfpError::domain(format!("rel_tol must lie in (0,1), got {rel_tol}")));
    }
    let mut acc = CompensatedSum::default();
    // Ring of the last NEGLIGIBLE_RUN + 1 terms for the decay estimate.
    let mut recent = [0.0f64; NEGLIGIBLE_RUN + 1];
    let mut run = 0usize;
    for n in 0..cap {
        let t = term(start + n);
        if !(t >= 0.0) {
            return Err(GfpError::domain(format!(
                "series term at index {} is {t}, expected a non-negative value",
                start + n
            )));
        }
        acc.add(t);
        recent[(n as usize) % recent.len()] = t;
        let sum = acc.value();
        if t <= rel_tol * sum {
            run += 1;
        } else {
            run = 0;
        }
        if run >= NEGLIGIBLE_RUN && n as usize >= NEGLIGIBLE_RUN {
            let old = recent[(n as usize + 1) % recent.len()];
            if t == 0.0 {
                return Ok(SeriesResult { value: sum, tail_bound: 0.0, terms_used: n + 1 });
            }
            let ratio = (t / old).powf(1.0 / NEGLIGIBLE_RUN as f64);
            if ratio < 1.0 {
                return Ok(SeriesResult { value: sum, tail_bound: t * ratio / (1.0 - ratio), terms_used: n + 1 });
            }
            // Negligible but not yet decaying: keep going.
        }
    }
    Err(GfpError::NonConvergence { what: "adaptive series".into(), cap })
}
