//! Tail estimates for truncated neighbor-degree sums.
//!
//! For fixed `(k, θ, φ)` the neighbor term is exactly
//! `Γ(ℓ+φ)/Γ(ℓ+φ+A) · poly(ℓ)` with `poly` of degree `D = k+θ+1` and
//! `A = D + 2 + μ/β`. Expanding `poly` in rising factorials of `ℓ+φ` turns
//! each term into `Γ(ℓ+φ+D−r)/Γ(ℓ+φ+A)`, whose sums beyond any cutoff are
//! closed-form. The leading few coefficients are fitted by least squares on
//! the last half of the computed range; the rest decay like `ℓ^-r` and are
//! dropped.

use nalgebra::{DMatrix, DVector};

use crate::numerics::lgamma;

const BASIS: usize = 10;
const SAMPLES: usize = 48;

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct TailEstimate {
    pub mass: f64,
    /// `Σ_{ℓ > L} ℓ·P(ℓ)`; infinite when the first moment diverges.
    pub first_moment: f64,
}

impl TailEstimate {
    pub(crate) const ZERO: TailEstimate = TailEstimate { mass: 0.0, first_moment: 0.0 };
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct TailModel {
    pub phi: f64,
    /// Polynomial degree `k + θ + 1`.
    pub degree: f64,
    /// `k + θ + 3 + μ/β`
    pub a: f64,
    /// `μ/β`
    pub m: f64,
}

impl TailModel {
    fn ln_basis(&self, ell: f64, r: usize) -> f64 {
        lgamma(ell + self.phi + self.degree - r as f64) - lgamma(ell + self.phi + self.a)
    }

    /// `values[i]` is the term at `ℓ = first_ell + i`; the tail starts after
    /// the last entry.
    pub(crate) fn estimate(&self, first_ell: u64, values: &[f64]) -> TailEstimate {
        let Some(&last) = values.last() else {
            return TailEstimate::ZERO;
        };
        if last <= 0.0 {
            return TailEstimate::ZERO;
        }
        let ell_max = first_ell + values.len() as u64 - 1;
        let lo = (first_ell + values.len() as u64 / 2).max(first_ell + 1);
        let span = ell_max.saturating_sub(lo);
        let points: Vec<u64> = if (span as usize) < SAMPLES {
            (lo..=ell_max).collect()
        } else {
            (0..SAMPLES).map(|i| lo + (span as f64 * i as f64 / (SAMPLES - 1) as f64).round() as u64).collect()
        };
        let points: Vec<u64> =
            points.into_iter().filter(|&l| values[(l - first_ell) as usize] > 0.0 && self.basis_defined(l)).collect();
        let basis = BASIS.min(points.len().saturating_sub(2)).max(1);
        let coeffs = if points.len() >= basis + 2 { self.fit(first_ell, values, &points, basis) } else { None };
        let coeffs = coeffs.unwrap_or_else(|| {
            // Single leading term matched at the last point.
            let l = ell_max as f64;
            vec![(last.ln() - self.ln_basis(l, 0)).exp()]
        });
        self.sum_beyond(ell_max, &coeffs)
    }

    fn basis_defined(&self, ell: u64) -> bool {
        ell as f64 + self.phi + self.degree - (BASIS as f64 - 1.0) > 0.0
    }

    fn fit(&self, first_ell: u64, values: &[f64], points: &[u64], basis: usize) -> Option<Vec<f64>> {
        let rows = points.len();
        // Relative residuals: divide each row by the observed value.
        let mut design = DMatrix::<f64>::zeros(rows, basis);
        for (i, &l) in points.iter().enumerate() {
            let ln_t = values[(l - first_ell) as usize].ln();
            for r in 0..basis {
                design[(i, r)] = (self.ln_basis(l as f64, r) - ln_t).exp();
            }
        }
        let mut norms = vec![0.0; basis];
        for (r, norm) in norms.iter_mut().enumerate() {
            *norm = design.column(r).amax();
            if !(*norm > 0.0) || !norm.is_finite() {
                return None;
            }
            design.column_mut(r).scale_mut(1.0 / *norm);
        }
        let rhs = DVector::<f64>::from_element(rows, 1.0);
        let svd = design.svd(true, true);
        let sol = svd.solve(&rhs, 1e-13).ok()?;
        let coeffs: Vec<f64> = sol.iter().zip(&norms).map(|(c, n)| c / n).collect();
        coeffs.iter().all(|c| c.is_finite()).then_some(coeffs)
    }

    fn sum_beyond(&self, ell_max: u64, coeffs: &[f64]) -> TailEstimate {
        let l = ell_max as f64;
        let ln_den = lgamma(l + self.phi + self.a);
        let mut mass = 0.0;
        let mut moment = 0.0;
        for (r, &c) in coeffs.iter().enumerate() {
            if c == 0.0 {
                continue;
            }
            let shift = self.phi + self.degree - r as f64;
            let d = 1.0 + self.m + r as f64;
            let h = (lgamma(l + 1.0 + shift) - ln_den).exp() / d;
            mass += c * h;
            let d1 = self.m + r as f64;
            let first = if d1 > 0.0 { (lgamma(l + 2.0 + shift) - ln_den).exp() / d1 } else { f64::INFINITY };
            moment += c * (first - shift * h);
        }
        TailEstimate { mass: mass.max(0.0), first_moment: moment.max(0.0) }
    }
}
