//! Cross-module consistency: the l1 lemma identities on exactly-feasible
//! corpora and on solver outputs, the misclassification bound along full
//! pipeline runs, and debiasing behaviour on equal-trace instances.

mod common;

use common::{random_feasible, random_symmetric};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relaxed_kmeans::debias::estimate_gamma;
use relaxed_kmeans::generators::{sample_gmm, MixtureModel, NoiseFamily};
use relaxed_kmeans::rounding::{cluster_gmm, Debias};
use relaxed_kmeans::solver::{solve, SdpProblem, SolverConfig};
use relaxed_kmeans::{
    block_l1_discrepancy, lemma9_bound, misclassification_error, Partition,
};

fn l1(a: &Array2<f64>, b: &Array2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn lemma1_identities_on_exactly_feasible_corpus() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.gen_range(8..30);
        let k = rng.gen_range(2..=4.min(n));
        let truth = Partition::random(n, k, &mut rng).unwrap();
        let b_star = truth.partition_matrix();
        let b = random_feasible(n, k, 5, &mut rng);

        let d = block_l1_discrepancy(&b_star, &b.view()).unwrap();
        // |B* - B* B|_1 = 2 sum_{j != k} |B_{G_j G_k}|_1
        assert!((d.d1 - d.offdiag).abs() < 1e-9, "d1 {} offdiag {}", d.d1, d.offdiag);
        // |B* - B|_1 <= (2n/m) |B* - B* B|_1
        let m = truth.min_group_size() as f64;
        assert!(d.d2 <= 2.0 * n as f64 / m * d.d1 + 1e-9);
        // |B* - B* B B*|_1 = |B* - B* B|_1, computed with plain matrix products.
        let bs = b_star.entries();
        let bsb = bs.dot(&b);
        let bsbbs = bsb.dot(bs);
        assert!((l1(bs, &bsbbs) - l1(bs, &bsb)).abs() < 1e-9);
    }
}

#[test]
fn lemma1_inequalities_on_solver_outputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for trial in 0..5 {
        let n = 16;
        let k = 2;
        let m = random_symmetric(n, 1.0, &mut rng);
        let problem = SdpProblem::new(m, k, 1.0).unwrap();
        let sol = solve(&problem, &SolverConfig::default()).unwrap();
        assert!(sol.converged);
        let truth = Partition::random(n, k, &mut rng).unwrap();
        let b_star = truth.partition_matrix();
        let d = block_l1_discrepancy(&b_star, &sol.b_hat.view()).unwrap();
        // Solver outputs are 1e-6-feasible, so the identities hold at that scale.
        let slack = 1e-6 * (n * n) as f64;
        assert!((d.d1 - d.offdiag).abs() < slack, "trial {trial}: {} vs {}", d.d1, d.offdiag);
        let mg = truth.min_group_size() as f64;
        assert!(d.d2 <= 2.0 * n as f64 / mg * d.d1 + slack);
    }
}

#[test]
fn lemma9_bound_dominates_pipeline_error() {
    // Across SNR levels, observed misclassification stays below the bound.
    for (delta, seed) in [(1.0, 1_u64), (2.5, 2), (5.0, 3), (9.0, 4)] {
        let model = MixtureModel::spherical(
            2,
            8,
            delta,
            &[1.0, 1.0],
            vec![12, 12],
            NoiseFamily::Gaussian,
            1.0,
        )
        .unwrap();
        let sample = sample_gmm(&model, seed).unwrap();
        let out = cluster_gmm(&sample.data.view(), 2, Debias::None, &SolverConfig::default(), seed)
            .unwrap();
        let err = misclassification_error(&out.partition, &sample.truth).unwrap();
        let b_star = sample.truth.partition_matrix();
        let bound = lemma9_bound(&b_star, &out.solution.b_hat.view(), sample.truth.min_group_size())
            .unwrap();
        assert!(err <= bound + 1e-9, "delta {delta}: err {err} vs bound {bound}");
    }
}

#[test]
fn lemma9_bound_dominates_on_random_feasible_points() {
    use relaxed_kmeans::rounding::kmedoids_rows;
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for trial in 0..10 {
        let n = rng.gen_range(8..20);
        let k = rng.gen_range(2..=3);
        let truth = Partition::random(n, k, &mut rng).unwrap();
        let b_star = truth.partition_matrix();
        let b_hat = random_feasible(n, k, 4, &mut rng);
        let rounded = kmedoids_rows(&b_hat.view(), k, trial).unwrap();
        let err = misclassification_error(&rounded.assignment, &truth).unwrap();
        let bound = lemma9_bound(&b_star, &b_hat.view(), truth.min_group_size()).unwrap();
        assert!(err <= bound + 1e-9, "err {err} vs bound {bound}");
    }
}

#[test]
fn equal_trace_instances_are_debias_insensitive() {
    // On well-separated equal-trace data the corrected and uncorrected
    // pipelines agree.
    let model = MixtureModel::spherical(
        2,
        10,
        10.0,
        &[1.0, 1.0],
        vec![12, 12],
        NoiseFamily::Gaussian,
        1.0,
    )
    .unwrap();
    for seed in 0..3 {
        let sample = sample_gmm(&model, seed).unwrap();
        let plain =
            cluster_gmm(&sample.data.view(), 2, Debias::None, &SolverConfig::default(), 7).unwrap();
        let corrected =
            cluster_gmm(&sample.data.view(), 2, Debias::Pecok, &SolverConfig::default(), 7)
                .unwrap();
        assert_eq!(
            misclassification_error(&plain.partition, &corrected.partition).unwrap(),
            0.0
        );
    }
}

#[test]
fn gamma_estimate_tracks_true_traces() {
    // Two spherical groups with unequal traces; the estimator error stays
    // within the sigma^2 log n + sigma gamma sqrt(log n) scale.
    let p = 30;
    let m_k = 50;
    let model = MixtureModel::spherical(
        2,
        p,
        20.0,
        &[1.0, 4.0],
        vec![m_k, m_k],
        NoiseFamily::Gaussian,
        1.0,
    )
    .unwrap();
    let n = 2 * m_k;
    let sigma2 = 4.0_f64;
    let gamma_max = (4.0 * p as f64).sqrt();
    let log_n = (n as f64).ln();
    let tolerance = 10.0 * (sigma2 * log_n + sigma2.sqrt() * gamma_max * log_n.sqrt());
    for seed in 0..5 {
        let sample = sample_gmm(&model, 100 + seed).unwrap();
        let est = estimate_gamma(&sample.data.view()).unwrap();
        let worst = est
            .diagonal
            .iter()
            .zip(&sample.gamma)
            .map(|(hat, truth)| (hat - truth).abs())
            .fold(0.0_f64, f64::max);
        assert!(worst <= tolerance, "seed {seed}: error {worst} vs tolerance {tolerance}");
    }
}

#[test]
fn relaxed_objective_dominates_brute_force_optimum() {
    use relaxed_kmeans::analysis::brute_force_kmeans;
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..5 {
        let n = rng.gen_range(6..=10);
        let k = rng.gen_range(2..=3);
        let data = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-2.0..2.0));
        let gram = data.dot(&data.t());
        let norm: f64 = gram.iter().map(|v| v * v).sum::<f64>().sqrt();
        let problem = SdpProblem::new(gram.clone(), k, 1.0).unwrap();
        let sol = solve(&problem, &SolverConfig::default()).unwrap();
        let oracle = brute_force_kmeans(&data.view(), k).unwrap();
        let b_g = oracle.partition.partition_matrix();
        let at_oracle: f64 = gram.iter().zip(b_g.entries().iter()).map(|(a, b)| a * b).sum();
        assert!(sol.objective >= at_oracle - 1e-5 * norm);

        // The rounded pipeline can never beat the exhaustive optimum.
        let out = cluster_gmm(&data.view(), k, Debias::None, &SolverConfig::default(), 3).unwrap();
        let rounded_crit =
            relaxed_kmeans::analysis::kmeans_criterion(&data.view(), &out.partition).unwrap();
        assert!(oracle.criterion <= rounded_crit + 1e-9);
    }
}
