//! Grown networks against the analytic distributions.

use gfp_core::analytic::{build_joint_table, nn_probability, ModelParams, Truncation};
use gfp_core::quality::QualityPmf;
use gfp_core::simulate::{
    empirical_report, grow, grow_qpa, joint_histogram, neighbor_counts, quality_class_neighbor_means, replica_reports,
    total_variation, EmpiricalReport, GrowthMode,
};

fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (var / n).sqrt())
}

#[test]
fn pooled_histogram_matches_joint_distribution() {
    let params = ModelParams::new(2, QualityPmf::exponential(0.5, 4).unwrap()).unwrap();
    let seeds: Vec<u64> = (0..10).collect();
    let reports = replica_reports(200_000, &params, GrowthMode::Qpa, &seeds).unwrap();
    let pooled = EmpiricalReport::pool(&reports);
    assert_eq!(pooled.histogram.total(), 2_000_000);
    let joint = build_joint_table(&params, &Truncation::default()).unwrap();
    let tv = total_variation(&pooled.histogram, &joint, 20);
    assert!(tv < 0.02, "total variation {tv}");
}

#[test]
fn ba_minimum_degree_share() {
    let params = ModelParams::new(2, QualityPmf::bernoulli(1.0, 4).unwrap()).unwrap();
    let shares: Vec<f64> =
        (0..10).map(|s| joint_histogram(&grow_qpa(200_000, &params, 500 + s).unwrap()).prob(2, 0)).collect();
    let (m, _) = mean_se(&shares);
    assert!((m - 0.5).abs() < 0.01, "P(2,0) = {m}");
}

#[test]
fn neighbor_frequencies_follow_formula() {
    let params = ModelParams::new(2, QualityPmf::exponential(0.5, 2).unwrap()).unwrap();
    let cases = [(4u64, 1u32, 3u64, 0u32), (2, 0, 2, 0), (3, 2, 5, 1)];
    let nets: Vec<_> = (0..20).map(|s| grow_qpa(100_000, &params, 900 + s).unwrap()).collect();
    for (k, theta, ell, phi) in cases {
        let analytic = nn_probability(&params, k, theta, ell, phi).unwrap();
        let freqs: Vec<f64> = nets.iter().map(|n| neighbor_counts(n, k, theta).frequency(ell, phi)).collect();
        let (m, se) = mean_se(&freqs);
        assert!((m - analytic).abs() < 4.0 * se + 1e-3, "P({ell},{phi}|{k},{theta}): {analytic} vs {m} +- {se}");
    }
}

fn class_zero_neighbor_quality(mode: GrowthMode) -> (f64, f64) {
    let params = ModelParams::new(2, QualityPmf::bernoulli(0.5, 8).unwrap()).unwrap();
    let means: Vec<f64> = (0..10)
        .map(|s| {
            let net = grow(100_000, &params, 40 + s, mode).unwrap();
            quality_class_neighbor_means(&net).into_iter().find(|c| c.theta == 0).unwrap().mean
        })
        .collect();
    mean_se(&means)
}

#[test]
fn quality_correlations_present_only_under_qpa() {
    let mu = 4.0;
    let (qm, qse) = class_zero_neighbor_quality(GrowthMode::Qpa);
    assert!((qm - mu).abs() > 3.0 * qse, "QPA {qm} +- {qse}");
    let (um, use_) = class_zero_neighbor_quality(GrowthMode::Uniform);
    assert!((um - mu).abs() <= 3.0 * use_, "uniform {um} +- {use_}");
}

#[test]
fn equal_qualities_give_no_quality_paradox() {
    let params = ModelParams::new(3, QualityPmf::bernoulli(1.0, 5).unwrap()).unwrap();
    let r = empirical_report(&grow_qpa(5_000, &params, 1).unwrap());
    assert_eq!(r.flagged.quality_mean, 0);
    assert_eq!(r.flagged.quality_median, 0);
    let h = joint_histogram(&grow_qpa(5_000, &params, 1).unwrap());
    let total: f64 = h.entries().map(|(_, p)| p).sum();
    assert!((total - 1.0).abs() < 1e-12);
}
