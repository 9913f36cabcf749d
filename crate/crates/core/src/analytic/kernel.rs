//! Sequential evaluation of `P(ℓ, φ | k, θ)` for `ℓ = β, β+1, ...`.
//!
//! The direct formula costs `O(k + ℓ)` log-gamma evaluations per `ℓ`. Here
//! the two bracketed sums are carried along as `ℓ` advances:
//!
//! * the first sum keeps one term per `j ∈ (β, k]`, each a fixed gamma
//!   ratio times `C(k−j+ℓ−β, ℓ−β)`, updated multiplicatively;
//! * the second sum is the convolution of the gamma ratio in `j` with
//!   `C(i+n, n)`, `n = k−β`, which equals `n+1` nested prefix sums.
//!
//! The nested levels differ by factors up to `C(ℓ+n, n)`, far beyond the
//! `f64` range, so each level carries its own log scale and adjacent
//! levels are linked by a cached ratio. The first sum has one shared scale
//! since its small terms are negligible next to its largest. The constant factor `Γ(β+2+φ+μ/β)` that
//! the formula multiplies outside and divides inside the first sum is
//! cancelled once up front.

use crate::numerics::{lgamma, lgamma_ratio};

use super::ModelParams;

/// Rescale the first sum once it exceeds this.
const RESCALE_AT: f64 = 1e250;
/// Renormalize a prefix level once it leaves `[1/LEVEL_BOUND, LEVEL_BOUND]`.
const LEVEL_BOUND: f64 = 1e100;

#[derive(Debug, Clone)]
pub(crate) struct NeighborKernel {
    beta: u64,
    k: u64,
    phi: f64,
    /// `k + θ + 3 + μ/β`
    a: f64,
    beta_theta: f64, // β + θ
    phi_shift: f64,  // φ + 2 + μ/β
    ln_prefactor: f64,
    ln_g2_const: f64,
    /// Terms of the first sum for `j = β+1 ..= k`, scaled by `exp(-scale)`.
    first: Vec<f64>,
    /// Nested prefix sums for the second sum; level `r` holds
    /// `prefix[r]·exp(level_scale[r])` and `prefix[n+1]` is the sum.
    /// Level 0 is the injected term itself and is not stored.
    prefix: Vec<f64>,
    level_scale: Vec<f64>,
    /// `link[r] = exp(level_scale[r−1] − level_scale[r])` for `r ≥ 2`.
    link: Vec<f64>,
    scale: f64,
    /// Next `ℓ` to be produced.
    ell: u64,
}

impl NeighborKernel {
    /// `theta` and `phi` must be in the support of ρ and `k >= β`.
    pub(crate) fn new(params: &ModelParams, k: u64, theta: u32, phi: u32) -> Self {
        let beta = params.beta() as u64;
        debug_assert!(k >= beta);
        let m = params.mu_over_beta();
        let th = theta as f64;
        let ph = phi as f64;
        let bf = beta as f64;
        let a = k as f64 + th + 3.0 + m;
        let b = bf + 2.0 + ph + m;
        let ln_rho_phi = params.quality().prob(phi).ln();
        let ln_prefactor = ln_rho_phi - (k as f64).ln() + lgamma(b);
        let theta_shift = th + 2.0 + m;
        let phi_shift = ph + 2.0 + m;

        // ln g1(j) = ln Γ(j+θ+2+m+β+φ) − ln Γ(j+θ+2+m) − ln Γ(b); at ℓ = β the
        // binomial factor is 1.
        let ln_g1: Vec<f64> = (beta + 1..=k)
            .map(|j| {
                let x = j as f64 + theta_shift;
                lgamma_ratio(x, bf + ph) - lgamma(b)
            })
            .collect();
        let scale = ln_g1.iter().copied().fold(0.0f64, f64::max);
        let first = ln_g1.iter().map(|l| (l - scale).exp()).collect();
        let n = (k - beta) as usize;
        NeighborKernel {
            beta,
            k,
            phi: ph,
            a,
            beta_theta: bf + th,
            phi_shift,
            ln_prefactor,
            ln_g2_const: -lgamma(bf + theta_shift),
            first,
            prefix: vec![0.0; n + 2],
            level_scale: vec![0.0; n + 2],
            link: vec![1.0; n + 2],
            scale,
            ell: beta,
        }
    }

    pub(crate) fn next_ell(&self) -> u64 {
        self.ell
    }

    /// Returns `(ℓ, P(ℓ, φ | k, θ))` and advances to `ℓ + 1`.
    pub(crate) fn step(&mut self) -> (u64, f64) {
        let ell = self.ell;
        let beta = self.beta;

        if ell > beta {
            // Advance the first-sum binomials from ℓ−1 to ℓ:
            // C(n'+i, i) = C(n'+i−1, i−1)·(n'+i)/i with n' = k−j, i = ℓ−β.
            let i = (ell - beta) as f64;
            for (idx, v) in self.first.iter_mut().enumerate() {
                let j = beta + 1 + idx as u64;
                let np = (self.k - j) as f64;
                *v *= (np + i) / i;
            }
            // Second sum: inject g2(ℓ) and cascade the prefix sums.
            // ln g2(ℓ) = ln Γ(ℓ+θ+2+m+β+φ) − ln Γ(ℓ+φ+2+m) − ln Γ(β+2+θ+m)
            let lf = ell as f64;
            let ln_g2 = lgamma_ratio(lf + self.phi_shift, self.beta_theta) + self.ln_g2_const;
            self.cascade(ln_g2);
        }

        let lf = ell as f64 + self.phi;
        let ln_base = self.ln_prefactor + lgamma_ratio(self.beta as f64 + self.phi, (ell - beta) as f64)
            - lgamma_ratio(self.a, lf);
        let first_sum: f64 = self.first.iter().sum();
        let mut value = 0.0;
        if first_sum > 0.0 {
            value += (ln_base + self.scale + first_sum.ln()).exp();
        }
        let last = self.prefix.len() - 1;
        if ell > beta && self.prefix[last] > 0.0 {
            value += (ln_base + self.level_scale[last] + self.prefix[last].ln()).exp();
        }

        if first_sum > RESCALE_AT {
            let shift = first_sum.ln();
            let factor = (-shift).exp();
            self.first.iter_mut().for_each(|v| *v *= factor);
            self.scale += shift;
        }

        self.ell += 1;
        (ell, value)
    }

    /// Adds `exp(ln_g2)` at level 0 and propagates it through every level.
    fn cascade(&mut self, ln_g2: f64) {
        if self.prefix[1] == 0.0 {
            self.level_scale[1] = ln_g2;
            self.prefix[1] = 1.0;
        } else {
            self.prefix[1] += (ln_g2 - self.level_scale[1]).exp();
        }
        self.renormalize(1);
        for r in 2..self.prefix.len() {
            if self.prefix[r] == 0.0 {
                self.level_scale[r] = self.level_scale[r - 1];
                self.link[r] = 1.0;
                self.prefix[r] = self.prefix[r - 1];
            } else {
                self.prefix[r] += self.prefix[r - 1] * self.link[r];
            }
            self.renormalize(r);
        }
    }

    fn renormalize(&mut self, r: usize) {
        let v = self.prefix[r];
        if v > 0.0 && !(1.0 / LEVEL_BOUND..=LEVEL_BOUND).contains(&v) {
            self.level_scale[r] += v.ln();
            self.prefix[r] = 1.0;
            if r >= 2 {
                self.link[r] = (self.level_scale[r - 1] - self.level_scale[r]).exp();
            }
            if r + 1 < self.prefix.len() && self.prefix[r + 1] > 0.0 {
                self.link[r + 1] = (self.level_scale[r] - self.level_scale[r + 1]).exp();
            }
        }
    }
}
