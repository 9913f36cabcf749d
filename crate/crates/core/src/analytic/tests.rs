#![allow(clippy::excessive_precision)]

use super::*;

fn expo_params() -> ModelParams {
    ModelParams::new(2, QualityPmf::exponential(0.5, 4).unwrap()).unwrap()
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

// 30-digit mpmath values of the closed forms for β = 2, ρ(θ) ∝ 2^{-θ}
// on 0..=4.
const JOINT_REF: [(u64, u32, f64); 4] = [
    (2, 0, 0.282_552_389_922_298_092_771_4),
    (5, 1, 0.017_238_329_865_935_661_028_06),
    (40, 3, 0.000_024_605_930_360_501_926_544_46),
    (1000, 4, 4.186_921_689_638_041_868_939e-10),
];

const NN_REF: [(u64, u32, u64, u32, f64); 4] = [
    (3, 0, 2, 1, 0.055_370_164_380_175_503_646_03),
    (5, 1, 7, 2, 0.006_275_039_213_527_280_535_85),
    (12, 4, 30, 0, 0.000_414_914_336_861_242_173_216_8),
    (2, 2, 9, 3, 0.005_550_852_364_341_865_721_443),
];

#[test]
fn joint_probability_reference() {
    let p = expo_params();
    for (k, t, want) in JOINT_REF {
        let got = joint_probability(&p, k, t).unwrap();
        assert!(rel_err(got, want) < 1e-11, "P({k},{t}) = {got}, want {want}");
    }
    assert_eq!(joint_probability(&p, 1, 0).unwrap(), 0.0);
    assert!(joint_probability(&p, 3, 5).is_err());
}

#[test]
fn nn_probability_reference() {
    let p = expo_params();
    for (k, t, l, f, want) in NN_REF {
        let got = nn_probability(&p, k, t, l, f).unwrap();
        assert!(rel_err(got, want) < 1e-11, "P({l},{f}|{k},{t}) = {got}, want {want}");
    }
    assert_eq!(nn_probability(&p, 2, 0, 2, 0).unwrap(), 0.0);
    assert!(nn_probability(&p, 1, 0, 3, 0).is_err());
    assert!(nn_probability(&p, 3, 0, 3, 9).is_err());
}

#[test]
fn barabasi_albert_reduction() {
    let beta = 3u32;
    let p = ModelParams::new(beta, QualityPmf::bernoulli(1.0, 4).unwrap()).unwrap();
    let b = beta as f64;
    for k in [3u64, 4, 10, 250, 9_999] {
        let kf = k as f64;
        let want = 2.0 * b * (b + 1.0) / (kf * (kf + 1.0) * (kf + 2.0));
        let got = joint_probability(&p, k, 0).unwrap();
        assert!(rel_err(got, want) < 1e-10, "k={k}: {got} vs {want}");
    }
    assert!(mean_neighbor_degree(&p, 5, 0).is_infinite());
}

#[test]
fn joint_table_normalized_with_mean_two_beta() {
    for (beta, q) in [(1u32, 0.3), (2, 0.5), (4, 1.7), (8, 0.1)] {
        let p = ModelParams::new(beta, QualityPmf::exponential(q, 8).unwrap()).unwrap();
        let t = build_joint_table(&p, &Truncation::default()).unwrap();
        assert!(t.tail_mass() < JOINT_TAIL_TARGET);
        assert!((t.total_mass() + t.tail_mass() - 1.0).abs() < 1e-12, "beta={beta}");
        assert!(rel_err(t.mean_degree(), 2.0 * beta as f64) < 1e-10, "mean {}", t.mean_degree());
        for k in [beta as u64, beta as u64 + 3, t.k_max()] {
            for th in 0..=8 {
                let direct = joint_probability(&p, k, th).unwrap();
                assert!(
                    rel_err(t.prob(k, th), direct) < 1e-10,
                    "k={k} θ={th} kmax={} err={:e}",
                    t.k_max(),
                    rel_err(t.prob(k, th), direct)
                );
            }
            let w: f64 = t.quality_given_degree(k).unwrap().iter().map(|x| x.1).sum();
            assert!((w - 1.0).abs() < 1e-14);
        }
    }
}

#[test]
fn joint_table_cap_reports_non_convergence() {
    let p = expo_params();
    let trunc = Truncation { joint_k_cap: 50, ..Default::default() };
    assert!(matches!(build_joint_table(&p, &trunc), Err(GfpError::NonConvergence { .. })));
}

#[test]
fn kernel_matches_direct_formula() {
    let p = expo_params();
    for (k, theta, phi) in [(2u64, 0u32, 0u32), (3, 4, 1), (7, 2, 4), (25, 1, 3)] {
        let mut kern = NeighborKernel::new(&p, k, theta, phi);
        for _ in 0..300 {
            let (ell, fast) = kern.step();
            let slow = nn_probability(&p, k, theta, ell, phi).unwrap();
            if slow == 0.0 {
                assert_eq!(fast, 0.0);
            } else {
                assert!(rel_err(fast, slow) < 1e-12, "k={k} θ={theta} φ={phi} ℓ={ell}: {fast} vs {slow}");
            }
        }
    }
}

#[test]
fn kernel_survives_large_degrees() {
    let p = ModelParams::new(8, QualityPmf::exponential(0.2, 24).unwrap()).unwrap();
    let mut kern = NeighborKernel::new(&p, 900, 24, 24);
    for _ in 0..2_000 {
        let (ell, v) = kern.step();
        assert!(v.is_finite() && v >= 0.0);
        if ell % 500 == 8 {
            let slow = nn_probability(&p, 900, 24, ell, 24).unwrap();
            assert!(rel_err(v, slow) < 1e-10, "ℓ={ell}: {v} vs {slow}");
        }
    }
}

#[test]
fn kernel_far_beyond_focal_degree() {
    // Nested sums spanning more than the f64 range across levels.
    let p = ModelParams::new(2, QualityPmf::bernoulli(0.1, 4).unwrap()).unwrap();
    let mut kern = NeighborKernel::new(&p, 1000, 0, 4);
    for _ in 0..8_000 {
        let (ell, v) = kern.step();
        if ell % 2000 == 0 {
            let slow = nn_probability(&p, 1000, 0, ell, 4).unwrap();
            assert!(rel_err(v, slow) < 1e-9, "ℓ={ell}: {v} vs {slow}");
        }
    }
}

#[test]
fn large_focal_degree_normalizes() {
    let p = ModelParams::new(4, QualityPmf::bernoulli(0.9, 16).unwrap()).unwrap();
    let d = nn_joint_dist(&p, 900, 0, &Truncation::default()).unwrap();
    assert!((d.total() - 1.0).abs() < 1e-6, "total {}", d.total());
}

#[test]
fn neighbor_quality_mass_closed_form() {
    let p = expo_params();
    for (k, theta) in [(2u64, 0u32), (3, 2), (10, 4), (40, 1)] {
        let dist = nn_joint_dist(&p, k, theta, &Truncation::default()).unwrap();
        assert!((dist.total() - 1.0).abs() < 1e-6, "k={k} θ={theta}: total {}", dist.total());
        for phi in 0..=4 {
            let summed: f64 = (dist.ell_min..=dist.ell_max).map(|l| dist.joint_prob(l, phi)).sum();
            let closed = neighbor_quality_given_degree(&p, k, phi);
            assert!(rel_err(summed, closed) < 1e-3, "φ={phi}: {summed} vs {closed}");
        }
    }
}

/// `Σ_k P(k|θ)·Σ_ℓ P(ℓ,φ|k,θ)` summed directly to two million, with the
/// remainder approximated by `ρ(φ)` times the exact leftover degree mass.
fn quality_conditional_brute(p: &ModelParams, theta: u32, phi: u32) -> f64 {
    const END: u64 = 2_000_000;
    let mut acc = CompensatedSum::default();
    for k in 2..=END {
        acc.add(degree_given_quality(p, k, theta) * neighbor_quality_given_degree(p, k, phi));
    }
    acc.add(p.quality().prob(phi) * conditional_degree_tail(p, END, theta).0);
    acc.value()
}

#[test]
fn quality_conditional_matches_series() {
    let p = expo_params();
    let trunc = Truncation::default();
    for theta in [0u32, 1, 4] {
        let dist = neighbor_quality_dist(&p, theta, &trunc).unwrap();
        assert!((dist.total() - 1.0).abs() < 1e-12);
        for phi in 0..=4u32 {
            let brute = quality_conditional_brute(&p, theta, phi);
            let got = dist.probs[phi as usize];
            assert!(rel_err(got, brute) < 1e-11, "θ={theta} φ={phi}: {got} vs {brute}");
        }
        // Neighbors are at least as good as the population on average.
        assert!(dist.mean.unwrap() >= p.mu() - 1e-12);
    }
}

#[test]
fn quality_conditional_undefined_off_support() {
    let p = ModelParams::new(2, QualityPmf::bernoulli(0.5, 6).unwrap()).unwrap();
    assert!(matches!(neighbor_quality_dist(&p, 3, &Truncation::default()), Err(GfpError::UndefinedConditional(_))));
}

#[test]
fn bernoulli_certain_zero_neighbors_all_zero() {
    let p = ModelParams::new(2, QualityPmf::bernoulli(1.0, 6).unwrap()).unwrap();
    let d = neighbor_quality_dist(&p, 0, &Truncation::default()).unwrap();
    assert_eq!(d.probs[0], 1.0);
    assert!(d.probs[1..].iter().all(|&x| x == 0.0));
}

#[test]
fn mean_neighbor_degree_closed_form_matches_sum() {
    let p = expo_params();
    for (k, theta) in [(2u64, 0u32), (4, 3), (15, 1)] {
        let dist = nn_joint_dist(&p, k, theta, &Truncation::default()).unwrap();
        let mut acc = CompensatedSum::default();
        for l in dist.ell_min..=dist.ell_max {
            for phi in 0..=4 {
                acc.add(l as f64 * dist.joint_prob(l, phi));
            }
        }
        acc.add(dist.tail_first_moment);
        let closed = mean_neighbor_degree(&p, k, theta);
        assert!(rel_err(acc.value(), closed) < 1e-4, "k={k}: {} vs {closed}", acc.value());
    }
}

#[test]
fn degree_conditional_consistent() {
    let p = ModelParams::new(2, QualityPmf::exponential(1.0, 8).unwrap()).unwrap();
    let trunc = Truncation::default();
    let joint = build_joint_table(&p, &trunc).unwrap();
    for k in [2u64, 3, 6, 20] {
        let d = neighbor_degree_dist(&joint, k, &trunc).unwrap();
        assert!((d.total() - 1.0).abs() < 1e-6, "k={k}: total {}", d.total());
        let mean = d.mean.unwrap();
        assert!(rel_err(d.truncated_mean(), mean) < 1e-3);
        assert_eq!(median_neighbor_degree(&joint, k, &trunc).unwrap(), d.median);
    }
}

#[test]
fn edge_balance_holds() {
    let p = expo_params();
    for (k, t, l, f) in [(3u64, 0u32, 5u64, 2u32), (10, 4, 2, 1), (6, 3, 6, 3)] {
        let r = edge_balance_residual(&p, k, t, l, f).unwrap();
        let scale = k as f64 * joint_probability(&p, k, t).unwrap() * nn_probability(&p, k, t, l, f).unwrap();
        assert!(r <= 1e-9 * scale.max(1e-300), "residual {r} vs {scale}");
    }
}

#[test]
fn nn_table_csv_layout() {
    let p = expo_params();
    let trunc = Truncation { ell_cap: 80, ..Default::default() };
    let d = nn_joint_dist(&p, 3, 1, &trunc).unwrap();
    let mut buf = Vec::new();
    d.write_nn_table(2, p.quality(), &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(&lines[..5], &["# beta=2", "# k=3", "# theta=1", lines[3], "ell,phi,prob"]);
    assert!(lines[3].starts_with("# tail_mass="));
    assert_eq!(lines.len(), 5 + 79 * 5);
    assert!(lines[5].starts_with("2,0,"));
    assert!(lines.last().unwrap().starts_with("80,4,"));
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn joint_mass_and_mean(beta in 1u32..6, q in 0.05f64..2.5, tm in 1u32..10) {
            let p = ModelParams::new(beta, QualityPmf::exponential(q, tm).unwrap()).unwrap();
            let t = build_joint_table(&p, &Truncation::default()).unwrap();
            prop_assert!((t.total_mass() + t.tail_mass() - 1.0).abs() < 1e-10);
            prop_assert!(rel_err(t.mean_degree(), 2.0 * beta as f64) < 1e-8);
        }

        #[test]
        fn neighbor_quality_normalized_and_dominant(beta in 1u32..6, p1 in 0.0f64..1.0, tm in 1u32..10, th in 0u32..10) {
            let p = ModelParams::new(beta, QualityPmf::bernoulli(p1, tm).unwrap()).unwrap();
            prop_assume!(p.quality().in_support(th));
            let d = neighbor_quality_dist(&p, th, &Truncation::default()).unwrap();
            prop_assert!((d.total() - 1.0).abs() < 1e-12);
            let mut cdf = 0.0;
            for (phi, x) in d.probs.iter().enumerate() {
                prop_assert!(*x >= 0.0);
                cdf += x;
                prop_assert!(cdf <= p.quality().cdf(phi as u32) + 1e-12);
            }
        }

        #[test]
        fn kernel_against_direct(k in 2u64..30, th in 0u32..5, ph in 0u32..5, steps in 1usize..60) {
            let p = expo_params();
            let mut kern = NeighborKernel::new(&p, k, th, ph);
            for _ in 0..steps {
                let (ell, v) = kern.step();
                let d = nn_probability(&p, k, th, ell, ph).unwrap();
                let ok = if d == 0.0 { v == 0.0 } else { rel_err(v, d) < 1e-12 };
                prop_assert!(ok, "ℓ={} {} vs {}", ell, v, d);
            }
        }
    }
}
