//! Oracles and reference numerics: brute-force K-means over set
//! partitions, the signal identity on feasible points, the CH-divergence,
//! the supervised Bayes misclassification Monte Carlo, and the exponential
//! decay fit used by the sweep harness.

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{block_l1_discrepancy, Partition};
use crate::seeding::{self, stream};

/// Enumeration cap for the brute-force K-means oracle.
pub const ENUMERATION_CAP: usize = 14;

/// Visits every partition of `{0, .., n-1}` into exactly `k` non-empty
/// blocks, encoded as restricted-growth label vectors (block labels ordered
/// by first occurrence). The visitor sees each partition exactly once.
pub fn for_each_partition<F: FnMut(&[usize])>(n: usize, k: usize, mut visit: F) -> Result<()> {
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    let mut labels = vec![0_usize; n];
    fn rec<F: FnMut(&[usize])>(labels: &mut Vec<usize>, i: usize, used: usize, n: usize, k: usize, visit: &mut F) {
        if used + (n - i) < k {
            return;
        }
        if i == n {
            if used == k {
                visit(labels);
            }
            return;
        }
        for g in 0..used.min(k) {
            labels[i] = g;
            rec(labels, i + 1, used, n, k, visit);
        }
        if used < k {
            labels[i] = used;
            rec(labels, i + 1, used + 1, n, k, visit);
        }
    }
    rec(&mut labels, 0, 0, n, k, &mut visit);
    Ok(())
}

/// Within-group dispersion of a partition of the data rows
/// (the K-means objective).
pub fn kmeans_criterion(data: &ArrayView2<f64>, partition: &Partition) -> Result<f64> {
    let n = data.nrows();
    if partition.n() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("partition over {n} rows"),
            got: format!("{}", partition.n()),
        });
    }
    let p = data.ncols();
    let k = partition.k();
    let mut sums = Array2::<f64>::zeros((k, p));
    let counts = partition.group_sizes();
    for (a, &g) in partition.assignments().iter().enumerate() {
        for j in 0..p {
            sums[[g, j]] += data[[a, j]];
        }
    }
    let total_sq: f64 = data.iter().map(|v| v * v).sum();
    let mut explained = 0.0;
    for g in 0..k {
        let norm_sq: f64 = (0..p).map(|j| sums[[g, j]] * sums[[g, j]]).sum();
        explained += norm_sq / counts[g] as f64;
    }
    Ok(total_sq - explained)
}

/// Exact K-means minimizer found by enumerating all partitions into
/// exactly `k` blocks. Refuses `n > 14`.
#[derive(Debug, Clone)]
pub struct KmeansOracle {
    pub partition: Partition,
    pub criterion: f64,
}

pub fn brute_force_kmeans(data: &ArrayView2<f64>, k: usize) -> Result<KmeansOracle> {
    let n = data.nrows();
    if n > ENUMERATION_CAP {
        return Err(Error::EnumerationTooLarge { n, max: ENUMERATION_CAP });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    let p = data.ncols();
    let total_sq: f64 = data.iter().map(|v| v * v).sum();

    // Incremental state: per-block sums, counts, and sum of |S_g|^2 / c_g.
    struct State<'a> {
        data: ArrayView2<'a, f64>,
        sums: Vec<Vec<f64>>,
        counts: Vec<usize>,
        explained: f64,
        best: f64,
        best_labels: Vec<usize>,
        labels: Vec<usize>,
    }
    impl State<'_> {
        fn push(&mut self, i: usize, g: usize) {
            let p = self.data.ncols();
            let c = self.counts[g];
            if c > 0 {
                let norm: f64 = self.sums[g].iter().map(|v| v * v).sum();
                self.explained -= norm / c as f64;
            }
            for j in 0..p {
                self.sums[g][j] += self.data[[i, j]];
            }
            self.counts[g] = c + 1;
            let norm: f64 = self.sums[g].iter().map(|v| v * v).sum();
            self.explained += norm / (c + 1) as f64;
            self.labels[i] = g;
        }
        fn pop(&mut self, i: usize, g: usize) {
            let p = self.data.ncols();
            let c = self.counts[g];
            let norm: f64 = self.sums[g].iter().map(|v| v * v).sum();
            self.explained -= norm / c as f64;
            for j in 0..p {
                self.sums[g][j] -= self.data[[i, j]];
            }
            self.counts[g] = c - 1;
            if c > 1 {
                let norm: f64 = self.sums[g].iter().map(|v| v * v).sum();
                self.explained += norm / (c - 1) as f64;
            }
        }
    }
    fn rec(state: &mut State, i: usize, used: usize, n: usize, k: usize, total_sq: f64) {
        if used + (n - i) < k {
            return;
        }
        if i == n {
            if used == k {
                let crit = total_sq - state.explained;
                if crit < state.best {
                    state.best = crit;
                    state.best_labels = state.labels.clone();
                }
            }
            return;
        }
        for g in 0..used.min(k) {
            state.push(i, g);
            rec(state, i + 1, used, n, k, total_sq);
            state.pop(i, g);
        }
        if used < k {
            state.push(i, used);
            rec(state, i + 1, used + 1, n, k, total_sq);
            state.pop(i, used);
        }
    }

    let mut state = State {
        data: data.reborrow(),
        sums: vec![vec![0.0; p]; k],
        counts: vec![0; k],
        explained: 0.0,
        best: f64::INFINITY,
        best_labels: vec![0; n],
        labels: vec![0; n],
    };
    rec(&mut state, 0, 0, n, k, total_sq);
    let partition = Partition::new(state.best_labels, k)?;
    // Recompute the winning criterion non-incrementally.
    let criterion = kmeans_criterion(data, &partition)?;
    Ok(KmeansOracle { partition, criterion })
}

/// Both sides of the signal identity
/// `<S, B* - B> = 0.5 sum_{j != k} Delta_jk^2 |B_{G_k G_j}|_1`
/// where `S_ab = -0.5 |mu_{g(a)} - mu_{g(b)}|^2`, plus the lower bound
/// `(Delta^2 / 4) |B* - B* B|_1`.
#[derive(Debug, Clone, Copy)]
pub struct SignalIdentity {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub lower_bound: f64,
}

pub fn signal_identity_check(
    means: &ArrayView2<f64>,
    sizes: &[usize],
    b: &ArrayView2<f64>,
) -> Result<SignalIdentity> {
    let k = sizes.len();
    if means.nrows() != k {
        return Err(Error::DimensionMismatch {
            expected: format!("{k} mean rows"),
            got: format!("{}", means.nrows()),
        });
    }
    let truth = Partition::from_sizes(sizes)?;
    let n = truth.n();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    check_feasible(b, k, 1e-6)?;

    let p = means.ncols();
    let mut delta_sq = Array2::zeros((k, k));
    let mut min_delta_sq = f64::INFINITY;
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let d: f64 = (0..p).map(|c| (means[[i, c]] - means[[j, c]]).powi(2)).sum();
            delta_sq[[i, j]] = d;
            min_delta_sq = min_delta_sq.min(d);
        }
    }
    if k == 1 {
        min_delta_sq = 0.0;
    }

    let labels = truth.assignments();
    let b_star = truth.partition_matrix();
    let mut lhs = 0.0;
    for a in 0..n {
        for c in 0..n {
            let s = -0.5 * delta_sq[[labels[a], labels[c]]];
            lhs += s * (b_star.entries()[[a, c]] - b[[a, c]]);
        }
    }
    let mut rhs = 0.0;
    for a in 0..n {
        for c in 0..n {
            if labels[a] != labels[c] {
                rhs += 0.5 * delta_sq[[labels[a], labels[c]]] * b[[a, c]].abs();
            }
        }
    }
    let d = block_l1_discrepancy(&b_star, b)?;
    Ok(SignalIdentity {
        lhs,
        rhs,
        gap: (lhs - rhs).abs(),
        lower_bound: 0.25 * min_delta_sq * d.d1,
    })
}

fn check_feasible(b: &ArrayView2<f64>, k: usize, tol: f64) -> Result<()> {
    let n = b.nrows();
    let mut asym = 0.0_f64;
    let mut min_entry = f64::INFINITY;
    let mut trace = 0.0;
    let mut max_row = 0.0_f64;
    for i in 0..n {
        trace += b[[i, i]];
        let mut row = 0.0;
        for j in 0..n {
            asym = asym.max((b[[i, j]] - b[[j, i]]).abs());
            min_entry = min_entry.min(b[[i, j]]);
            row += b[[i, j]];
        }
        max_row = max_row.max((row - 1.0).abs());
    }
    if asym > 1e-8 {
        return Err(Error::NotSymmetric(asym));
    }
    if min_entry < -100.0 * tol || max_row > tol || (trace - k as f64).abs() > tol * k as f64 {
        return Err(Error::InvalidParameter(format!(
            "matrix is not feasible within tolerance: min entry {min_entry:.3e}, row-sum error {max_row:.3e}, trace error {:.3e}",
            (trace - k as f64).abs()
        )));
    }
    let sym = (b.to_owned() + b.t()) / 2.0;
    let min_eig = linalg::min_eigenvalue(&sym.view())?;
    if min_eig < -tol {
        return Err(Error::InvalidParameter(format!(
            "matrix is not feasible within tolerance: min eigenvalue {min_eig:.3e}"
        )));
    }
    Ok(())
}

/// Divergence input: `p` strictly positive, `q` non-negative, same length.
#[derive(Debug, Clone)]
pub struct DivergenceInput {
    p: Vec<f64>,
    q: Vec<f64>,
}

impl DivergenceInput {
    pub fn new(q: Vec<f64>, p: Vec<f64>) -> Result<Self> {
        if p.is_empty() || p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                expected: "two non-empty vectors of equal length".into(),
                got: format!("|q| = {}, |p| = {}", q.len(), p.len()),
            });
        }
        if p.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter("all entries of p must be positive".into()));
        }
        if q.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter("all entries of q must be >= 0".into()));
        }
        Ok(Self { p, q })
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }
}

fn ch_objective(input: &DivergenceInput, t: f64) -> f64 {
    // sum_x p_x (1 - t + t q/p - (q/p)^t), written as t(u - 1) + (1 - u^t)
    // so that u = 1 contributes exactly zero.
    input
        .p
        .iter()
        .zip(&input.q)
        .map(|(&p, &q)| {
            let u = q / p;
            p * (t * (u - 1.0) + (1.0 - u.powf(t)))
        })
        .sum()
}

/// `D_+(q || p) = max_{t in [0,1]} sum_x p_x (1 - t + t q_x/p_x - (q_x/p_x)^t)`.
///
/// Dense 1001-point grid plus golden-section refinement to 1e-10 in t. The
/// endpoints contribute zero analytically, so the divergence is always
/// non-negative and exactly zero at `q = p`.
pub fn ch_divergence(input: &DivergenceInput) -> f64 {
    const GRID: usize = 1000;
    let mut best_t = 0.0;
    let mut best = 0.0; // value at the endpoints
    for i in 0..=GRID {
        let t = i as f64 / GRID as f64;
        let v = ch_objective(input, t);
        if v > best {
            best = v;
            best_t = t;
        }
    }
    // Golden-section around the best grid point.
    let phi = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut lo = (best_t - 1.0 / GRID as f64).max(0.0);
    let mut hi = (best_t + 1.0 / GRID as f64).min(1.0);
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let mut f1 = ch_objective(input, x1);
    let mut f2 = ch_objective(input, x2);
    while hi - lo > 1e-10 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = ch_objective(input, x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = ch_objective(input, x1);
        }
    }
    best.max(f1).max(f2).max(0.0)
}

/// Configuration of the supervised-classification Bayes experiment.
#[derive(Debug, Clone, Copy)]
pub struct BayesExperiment {
    /// Distance between the two (opposite) class means.
    pub delta: f64,
    pub sigma: f64,
    /// Labeled sample size.
    pub n: usize,
    /// Ambient dimension.
    pub p: usize,
    pub replicates: usize,
    pub seed: u64,
}

/// Monte-Carlo estimates of the Bayes misclassification probability through
/// two independent constructions: the rotation-reduced inner-product form
/// and the full labeled-sample simulation.
#[derive(Debug, Clone, Copy)]
pub struct BayesEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub full_estimate: f64,
    pub full_std_error: f64,
}

pub fn bayes_misclassification(exp: &BayesExperiment) -> Result<BayesEstimate> {
    if exp.delta < 0.0 || !(exp.sigma > 0.0) || exp.n == 0 || exp.p == 0 || exp.replicates == 0 {
        return Err(Error::InvalidParameter(
            "bayes experiment needs delta >= 0, sigma > 0, n, p, replicates >= 1".into(),
        ));
    }
    let r = exp.replicates;

    // Reduced form: P[< mu + (sigma/sqrt n) eps, mu + sigma eps' > < 0]
    // with mu = (delta/2, 0, ..., 0).
    let c1 = exp.sigma / (exp.n as f64).sqrt();
    let c2 = exp.sigma;
    let half = exp.delta / 2.0;
    let errors: usize = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeding::derive_seed(exp.seed, stream::BAYES_REDUCED, rep as u64));
            let mut dot = 0.0;
            for j in 0..exp.p {
                let e1: f64 = StandardNormal.sample(&mut rng);
                let e2: f64 = StandardNormal.sample(&mut rng);
                let mu_j = if j == 0 { half } else { 0.0 };
                dot += (mu_j + c1 * e1) * (mu_j + c2 * e2);
            }
            usize::from(dot < 0.0)
        })
        .sum();
    let estimate = errors as f64 / r as f64;

    // Full labeled-sample construction.
    let full_errors: usize = (0..r)
        .into_par_iter()
        .map(|rep| {
            let mut rng =
                ChaCha8Rng::seed_from_u64(seeding::derive_seed(exp.seed, stream::BAYES_FULL, rep as u64));
            let normal = Normal::new(0.0, exp.sigma).unwrap();
            // mu uniform on the sphere of radius delta/2.
            let mut mu = vec![0.0_f64; exp.p];
            loop {
                let mut norm_sq = 0.0;
                for m in mu.iter_mut() {
                    *m = StandardNormal.sample(&mut rng);
                    norm_sq += *m * *m;
                }
                if norm_sq > 1e-24 {
                    let scale = half / norm_sq.sqrt();
                    for m in mu.iter_mut() {
                        *m *= scale;
                    }
                    break;
                }
            }
            // W = (1/n) sum_a Z_a X_a accumulated streaming.
            let mut w = vec![0.0_f64; exp.p];
            for _ in 0..exp.n {
                let z: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
                for (j, wj) in w.iter_mut().enumerate() {
                    let x = z * mu[j] + normal.sample(&mut rng);
                    *wj += z * x;
                }
            }
            let inv_n = 1.0 / exp.n as f64;
            // Fresh labeled point; error when the sign classifier disagrees.
            let z_new: f64 = if rng.gen::<bool>() { 1.0 } else { -1.0 };
            let mut dot = 0.0;
            for (j, wj) in w.iter().enumerate() {
                let x = z_new * mu[j] + normal.sample(&mut rng);
                dot += wj * inv_n * x;
            }
            usize::from(z_new * dot < 0.0)
        })
        .sum();
    let full_estimate = full_errors as f64 / r as f64;

    let se = |p_hat: f64| (p_hat * (1.0 - p_hat) / r as f64).sqrt();
    Ok(BayesEstimate {
        estimate,
        std_error: se(estimate),
        full_estimate,
        full_std_error: se(full_estimate),
    })
}

/// Least-squares fit of `log(err)` against `s^2`.
#[derive(Debug, Clone, Copy)]
pub struct DecayFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Points excluded from the fit: zero errors (log undefined, perfect
    /// recovery saturates the bound) and non-finite SNR values.
    pub censored: usize,
}

pub fn fit_exponential_decay(points: &[(f64, f64)]) -> Result<DecayFit> {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|(s2, err)| err.is_finite() && *err > 0.0 && s2.is_finite())
        .map(|&(s2, err)| (s2, err.ln()))
        .collect();
    let censored = points.len() - usable.len();
    if usable.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "need at least 3 points with err > 0, got {}",
            usable.len()
        )));
    }
    let n = usable.len() as f64;
    let mean_x: f64 = usable.iter().map(|(x, _)| x).sum::<f64>() / n;
    let mean_y: f64 = usable.iter().map(|(_, y)| y).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for &(x, y) in &usable {
        sxx += (x - mean_x) * (x - mean_x);
        sxy += (x - mean_x) * (y - mean_y);
        syy += (y - mean_y) * (y - mean_y);
    }
    if sxx == 0.0 {
        return Err(Error::InvalidParameter("all SNR values coincide; slope undefined".into()));
    }
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let ss_res: f64 = usable
        .iter()
        .map(|&(x, y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r2 = if syy > 0.0 { 1.0 - ss_res / syy } else { 1.0 };
    Ok(DecayFit { slope, intercept, r2, censored })
}

/// Spearman rank correlation with average ranks on ties.
pub fn spearman_rank_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidParameter(
            "rank correlation needs two equal-length samples of size >= 2".into(),
        ));
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::InvalidParameter("rank correlation undefined for constant input".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].partial_cmp(&v[b]).unwrap());
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &id in &idx[i..=j] {
            out[id] = avg;
        }
        i = j + 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn partition_enumeration_counts_match_stirling_numbers() {
        // S(5,2) = 15, S(5,3) = 25, S(6,3) = 90.
        for (n, k, expected) in [(5, 2, 15), (5, 3, 25), (6, 3, 90), (4, 4, 1), (4, 1, 1)] {
            let mut count = 0;
            for_each_partition(n, k, |_| count += 1).unwrap();
            assert_eq!(count, expected, "n={n} k={k}");
        }
    }

    #[test]
    fn brute_force_finds_coincident_clusters_exactly() {
        let data = arr2(&[
            [1.0, 1.0],
            [1.0, 1.0],
            [5.0, -2.0],
            [5.0, -2.0],
        ]);
        let oracle = brute_force_kmeans(&data.view(), 2).unwrap();
        assert_eq!(oracle.criterion, 0.0);
        let truth = Partition::new(vec![0, 0, 1, 1], 2).unwrap();
        assert_eq!(
            crate::model::misclassification_error(&oracle.partition, &truth).unwrap(),
            0.0
        );
    }

    #[test]
    fn singletons_have_zero_criterion_and_cap_is_enforced() {
        let data = Array2::from_shape_fn((6, 2), |(i, j)| (i * 2 + j) as f64);
        let oracle = brute_force_kmeans(&data.view(), 6).unwrap();
        assert!(oracle.criterion.abs() < 1e-12);
        let big = Array2::<f64>::zeros((15, 2));
        assert!(matches!(
            brute_force_kmeans(&big.view(), 2),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn criterion_matches_gram_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = rng.gen_range(3..10);
            let k = rng.gen_range(1..=n.min(3));
            let data = Array2::from_shape_fn((n, 3), |_| rng.gen_range(-2.0..2.0));
            let part = Partition::random(n, k, &mut rng).unwrap();
            let crit = kmeans_criterion(&data.view(), &part).unwrap();
            let gram = data.dot(&data.t());
            let b = part.partition_matrix();
            let inner: f64 = gram.iter().zip(b.entries().iter()).map(|(g, w)| g * w).sum();
            let total_sq: f64 = data.iter().map(|v| v * v).sum();
            assert!((crit - (total_sq - inner)).abs() < 1e-9);
        }
    }

    #[test]
    fn brute_force_dominates_every_enumerated_partition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((7, 2), |_| rng.gen_range(-1.0..1.0));
        let oracle = brute_force_kmeans(&data.view(), 3).unwrap();
        for_each_partition(7, 3, |labels| {
            let p = Partition::new(labels.to_vec(), 3).unwrap();
            let c = kmeans_criterion(&data.view(), &p).unwrap();
            assert!(oracle.criterion <= c + 1e-9);
        })
        .unwrap();
    }

    #[test]
    fn signal_identity_holds_on_mixtures_of_partition_matrices() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let sizes = [4_usize, 5, 3];
        let n: usize = sizes.iter().sum();
        let k = sizes.len();
        let means = Array2::from_shape_fn((k, 4), |_| rng.gen_range(-3.0..3.0));
        for _ in 0..25 {
            // Random convex combination of partition matrices is feasible.
            let mut b = Array2::<f64>::zeros((n, n));
            let mut weights = [0.0; 4];
            let mut total = 0.0;
            for w in weights.iter_mut() {
                *w = rng.gen_range(0.01..1.0);
                total += *w;
            }
            for w in weights.iter_mut() {
                *w /= total;
            }
            for &w in &weights {
                let p = Partition::random(n, k, &mut rng).unwrap();
                b += &(p.partition_matrix().entries() * w);
            }
            let id = signal_identity_check(&means.view(), &sizes, &b.view()).unwrap();
            assert!(id.gap < 1e-9, "gap {}", id.gap);
            assert!(id.lhs >= id.lower_bound - 1e-9);
        }
    }

    #[test]
    fn signal_identity_is_zero_at_truth_and_tight_for_equal_distances() {
        let sizes = [3_usize, 3, 3];
        let truth = Partition::from_sizes(&sizes).unwrap();
        // Simplex means: all pairwise distances equal.
        let mut means = Array2::zeros((3, 3));
        for g in 0..3 {
            means[[g, g]] = 2.0;
        }
        let b_star = truth.partition_matrix();
        let id = signal_identity_check(&means.view(), &sizes, &b_star.entries().view()).unwrap();
        assert_eq!(id.lhs, 0.0);
        assert_eq!(id.rhs, 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mut b = b_star.entries() * 0.5;
            let other = Partition::random(9, 3, &mut rng).unwrap();
            b += &(other.partition_matrix().entries() * 0.5);
            let id = signal_identity_check(&means.view(), &sizes, &b.view()).unwrap();
            // Equal pairwise distances: the identity collapses to the bound.
            assert!((id.lhs - id.lower_bound).abs() < 1e-9);
        }
    }

    #[test]
    fn signal_identity_rejects_infeasible_matrices() {
        let sizes = [2_usize, 2];
        let means = Array2::zeros((2, 2));
        let bad = Array2::from_elem((4, 4), 0.3);
        assert!(signal_identity_check(&means.view(), &sizes, &bad.view()).is_err());
    }

    #[test]
    fn ch_divergence_zero_iff_equal_and_positive_otherwise() {
        let p = vec![0.25, 0.75];
        let input = DivergenceInput::new(p.clone(), p.clone()).unwrap();
        assert_eq!(ch_divergence(&input), 0.0);

        let input = DivergenceInput::new(vec![0.5, 0.5], vec![0.25, 0.75]).unwrap();
        let v = ch_divergence(&input);
        assert!(v > 1e-4, "divergence {v}");
    }

    #[test]
    fn ch_divergence_matches_fine_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let len = rng.gen_range(2..6);
            let p: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
            let q: Vec<f64> = (0..len).map(|_| rng.gen_range(0.0..1.0)).collect();
            let input = DivergenceInput::new(q, p).unwrap();
            let v = ch_divergence(&input);
            // Denser independent grid can only be epsilon-better.
            let mut grid_best = 0.0_f64;
            for i in 0..=20_000 {
                let t = i as f64 / 20_000.0;
                grid_best = grid_best.max(ch_objective(&input, t));
            }
            assert!(v >= grid_best - 1e-8);
            assert!(v <= grid_best + 1e-6);
        }
    }

    #[test]
    fn ch_divergence_satisfies_chi_square_upper_bound() {
        // Lemma-style bound: D_+(q||p) <= (1/4 rho) sum (p-q)^2 / p.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let len = rng.gen_range(2..7);
            let p: Vec<f64> = (0..len).map(|_| rng.gen_range(0.05..1.0)).collect();
            let ratio: Vec<f64> = (0..len).map(|_| rng.gen_range(0.1..3.0)).collect();
            let q: Vec<f64> = p.iter().zip(&ratio).map(|(a, r)| a * r).collect();
            let rho = ratio.iter().cloned().fold(f64::INFINITY, f64::min);
            let input = DivergenceInput::new(q.clone(), p.clone()).unwrap();
            let d = ch_divergence(&input);
            let chi: f64 = p.iter().zip(&q).map(|(a, b)| (a - b) * (a - b) / a).sum();
            assert!(d <= chi / (4.0 * rho) + 1e-9, "d = {d}, bound = {}", chi / (4.0 * rho));
        }
    }

    #[test]
    fn divergence_input_validation() {
        assert!(DivergenceInput::new(vec![0.1], vec![0.0]).is_err());
        assert!(DivergenceInput::new(vec![-0.1], vec![0.5]).is_err());
        assert!(DivergenceInput::new(vec![0.1, 0.2], vec![0.5]).is_err());
    }

    #[test]
    fn bayes_estimate_is_half_at_zero_separation() {
        let exp = BayesExperiment { delta: 0.0, sigma: 1.0, n: 10, p: 20, replicates: 4000, seed: 1 };
        let est = bayes_misclassification(&exp).unwrap();
        assert!((est.estimate - 0.5).abs() <= 3.0 * est.std_error + 1e-12);
        assert!((est.full_estimate - 0.5).abs() <= 3.0 * est.full_std_error + 1e-12);
    }

    #[test]
    fn bayes_estimators_agree_within_three_sigma() {
        let exp = BayesExperiment { delta: 3.0, sigma: 1.0, n: 20, p: 50, replicates: 6000, seed: 2 };
        let est = bayes_misclassification(&exp).unwrap();
        let combined = (est.std_error.powi(2) + est.full_std_error.powi(2)).sqrt();
        assert!(
            (est.estimate - est.full_estimate).abs() <= 3.0 * combined,
            "{} vs {}",
            est.estimate,
            est.full_estimate
        );
    }

    #[test]
    fn decay_fit_recovers_exact_exponential() {
        let pts: Vec<(f64, f64)> = (1..=8).map(|i| {
            let s2 = i as f64;
            (s2, (-0.3 * s2).exp())
        })
        .collect();
        let fit = fit_exponential_decay(&pts).unwrap();
        assert!((fit.slope + 0.3).abs() < 1e-9);
        assert!((fit.r2 - 1.0).abs() < 1e-9);
        assert_eq!(fit.censored, 0);
    }

    #[test]
    fn decay_fit_handles_constant_and_censored_input() {
        let pts = vec![(1.0, 0.25), (2.0, 0.25), (3.0, 0.25)];
        let fit = fit_exponential_decay(&pts).unwrap();
        assert_eq!(fit.slope, 0.0);

        let pts = vec![(1.0, 0.5), (2.0, 0.0), (3.0, 0.1), (4.0, 0.05), (5.0, 0.0)];
        let fit = fit_exponential_decay(&pts).unwrap();
        assert_eq!(fit.censored, 2);
        assert!(fit.slope < 0.0);

        let too_few = vec![(1.0, 0.5), (2.0, 0.0), (3.0, 0.0)];
        assert!(fit_exponential_decay(&too_few).is_err());
    }

    #[test]
    fn spearman_detects_monotone_relations() {
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let y = vec![2.0, 4.0, 9.0, 16.0, 30.0];
        assert!((spearman_rank_correlation(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        let y_rev: Vec<f64> = y.iter().rev().cloned().collect();
        assert!((spearman_rank_correlation(&x, &y_rev).unwrap() + 1.0).abs() < 1e-12);
    }
}
