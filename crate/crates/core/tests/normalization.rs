use gfp_core::analytic::{build_joint_table, neighbor_degree_dist, nn_joint_dist, Truncation};
use gfp_core::validate::{neighbor_probes, normalization_grid};

#[test]
fn joint_tables_normalize_across_grid() {
    let trunc = Truncation::default();
    for params in normalization_grid() {
        let t = build_joint_table(&params, &trunc).unwrap();
        let total = t.total_mass() + t.tail_mass();
        assert!((total - 1.0).abs() < 1e-6, "beta={} total={total}", params.beta());
        assert!((t.mean_degree() - 2.0 * params.beta() as f64).abs() < 1e-6);
    }
}

#[test]
fn neighbor_distributions_normalize_at_probes() {
    let trunc = Truncation::default();
    for params in normalization_grid() {
        let probes = neighbor_probes(&params);
        assert_eq!(probes.len(), 9);
        for (k, theta) in probes {
            let d = nn_joint_dist(&params, k, theta, &trunc).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-6, "k={k} theta={theta}: {}", d.total());
            assert!(d.probs.iter().all(|&p| p >= 0.0));
        }
    }
}

#[test]
fn degree_conditionals_normalize() {
    let trunc = Truncation::default();
    for params in normalization_grid().into_iter().step_by(5) {
        let joint = build_joint_table(&params, &trunc).unwrap();
        let b = params.beta() as u64;
        for k in [b, 3 * b] {
            let d = neighbor_degree_dist(&joint, k, &trunc).unwrap();
            assert!((d.total() - 1.0).abs() < 1e-6, "k={k}: {}", d.total());
        }
    }
}
