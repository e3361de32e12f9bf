//! Rounding a relaxed solution into a partition, and the end-to-end
//! clustering pipelines.
//!
//! The rounding step runs K-medoids on the rows of the solver output under
//! the l1 distance: multi-restart greedy seeding followed by single-swap
//! local search. Medoid rows must be distinct indices (equal values are
//! allowed), every medoid belongs to its own cluster, and the reported cost
//! is exactly `sum_a |B_hat[a,:] - B_hat[medoid(cluster(a)),:]|_1`.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::debias::{estimate_gamma, GammaEstimate};
use crate::error::{Error, Result};
use crate::model::Partition;
use crate::seeding::{self, stream};
use crate::solver::{solve, SdpProblem, SdpSolution, SolverConfig};

/// Default number of seeded restarts of the local search.
pub const DEFAULT_RESTARTS: usize = 10;

/// A rounded solution: the partition, the medoid row indices, the exact l1
/// reconstruction cost and the number of restarts consumed.
#[derive(Debug, Clone)]
pub struct MedoidSolution {
    pub assignment: Partition,
    pub medoid_rows: Vec<usize>,
    pub cost: f64,
    pub restarts_used: usize,
}

/// K-medoids on the rows of `b_hat` under l1 distance with the default
/// restart count.
pub fn kmedoids_rows(b_hat: &ArrayView2<f64>, k: usize, seed: u64) -> Result<MedoidSolution> {
    kmedoids_rows_with_restarts(b_hat, k, seed, DEFAULT_RESTARTS)
}

/// As [`kmedoids_rows`] with an explicit restart count. Restarts run in
/// parallel; the winner is the lexicographic minimum of (cost, restart
/// index), so the result does not depend on scheduling.
pub fn kmedoids_rows_with_restarts(
    b_hat: &ArrayView2<f64>,
    k: usize,
    seed: u64,
    restarts: usize,
) -> Result<MedoidSolution> {
    let n = b_hat.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    if b_hat.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("rounding input".into()));
    }

    let dist = l1_row_distances(b_hat);
    let runs: Vec<(f64, usize, Vec<usize>)> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let rseed = seeding::derive_seed(seed, stream::KMEDOIDS_RESTART, r as u64);
            let medoids = single_run(&dist, k, rseed);
            let labels = assign(&dist, &medoids);
            (exact_cost(&dist, &medoids, &labels), r, medoids)
        })
        .collect();
    let (_, best_run, medoids) = runs
        .into_iter()
        .min_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).unwrap())
        .unwrap();

    let labels = assign(&dist, &medoids);
    let cost = exact_cost(&dist, &medoids, &labels);
    Ok(MedoidSolution {
        assignment: Partition::new(labels, k)?,
        medoid_rows: medoids,
        cost,
        restarts_used: best_run + 1,
    })
}

/// Exhaustive minimum of the medoid cost over all medoid index sets, used
/// as the oracle for the rho-approximation contract. Refuses when
/// `C(n, k) > 100_000`.
pub fn optimal_medoid_cost(b_hat: &ArrayView2<f64>, k: usize) -> Result<f64> {
    let n = b_hat.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    let mut combos: f64 = 1.0;
    for i in 0..k {
        combos = combos * (n - i) as f64 / (i + 1) as f64;
    }
    if combos > 1e5 {
        return Err(Error::EnumerationTooLarge { n, max: 100_000 });
    }
    let dist = l1_row_distances(b_hat);
    let mut chosen = vec![0_usize; k];
    let mut best = f64::INFINITY;
    fn rec(dist: &Array2<f64>, chosen: &mut Vec<usize>, depth: usize, start: usize, k: usize, best: &mut f64) {
        let n = dist.nrows();
        if depth == k {
            let mut cost = 0.0;
            for a in 0..n {
                let mut d = f64::INFINITY;
                for &m in chosen.iter() {
                    d = d.min(dist[[a, m]]);
                }
                cost += d;
            }
            if cost < *best {
                *best = cost;
            }
            return;
        }
        for c in start..=(n - (k - depth)) {
            chosen[depth] = c;
            rec(dist, chosen, depth + 1, c + 1, k, best);
        }
    }
    rec(&dist, &mut chosen, 0, 0, k, &mut best);
    Ok(best)
}

fn l1_row_distances(rows: &ArrayView2<f64>) -> Array2<f64> {
    let n = rows.nrows();
    let mut dist = Array2::zeros((n, n));
    for a in 0..n {
        let ra = rows.row(a);
        for b in (a + 1)..n {
            let rb = rows.row(b);
            let d: f64 = ra.iter().zip(rb.iter()).map(|(x, y)| (x - y).abs()).sum();
            dist[[a, b]] = d;
            dist[[b, a]] = d;
        }
    }
    dist
}

/// Greedy l1 seeding (k-means++-style weights) followed by steepest
/// single-swap descent. Returns the medoid indices.
fn single_run(dist: &Array2<f64>, k: usize, seed: u64) -> Vec<usize> {
    use rand::{Rng, SeedableRng};
    let n = dist.nrows();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);

    // Seeding: first medoid uniform, then weight by distance to the chosen.
    let mut medoids = Vec::with_capacity(k);
    medoids.push(rng.gen_range(0..n));
    let mut weight: Vec<f64> = (0..n).map(|a| dist[[a, medoids[0]]]).collect();
    while medoids.len() < k {
        let total: f64 = weight.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = None;
            for (a, &w) in weight.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                target -= w;
                if target <= 0.0 {
                    pick = Some(a);
                    break;
                }
            }
            pick.unwrap_or_else(|| {
                (0..n).rev().find(|a| weight[*a] > 0.0).expect("positive total weight")
            })
        } else {
            // All remaining rows coincide with a medoid: take the smallest
            // free index so duplicated rows may still serve as medoids.
            (0..n).find(|a| !medoids.contains(a)).expect("k <= n leaves a free row")
        };
        medoids.push(next);
        for a in 0..n {
            weight[a] = weight[a].min(dist[[a, next]]);
        }
    }

    // Steepest-descent single swaps with (nearest, second) caches.
    let mut passes = 0;
    loop {
        passes += 1;
        let (near_slot, near_d, seco_d) = caches(dist, &medoids);
        let mut best: Option<(f64, usize, usize)> = None;
        for slot in 0..k {
            for cand in 0..n {
                if medoids.contains(&cand) {
                    continue;
                }
                let mut delta = 0.0;
                for a in 0..n {
                    let d_new = if near_slot[a] == slot {
                        dist[[a, cand]].min(seco_d[a])
                    } else {
                        dist[[a, cand]].min(near_d[a])
                    };
                    delta += d_new - near_d[a];
                }
                if best.map_or(true, |(bd, _, _)| delta < bd) {
                    best = Some((delta, slot, cand));
                }
            }
        }
        match best {
            Some((delta, slot, cand)) if delta < -1e-12 && passes <= 200 => {
                medoids[slot] = cand;
            }
            _ => break,
        }
    }
    medoids
}

/// Nearest slot (medoids own themselves), nearest distance and
/// second-nearest distance per row.
fn caches(dist: &Array2<f64>, medoids: &[usize]) -> (Vec<usize>, Vec<f64>, Vec<f64>) {
    let n = dist.nrows();
    let k = medoids.len();
    let mut near_slot = vec![0_usize; n];
    let mut near_d = vec![f64::INFINITY; n];
    let mut seco_d = vec![f64::INFINITY; n];
    for a in 0..n {
        let owner = medoids.iter().position(|&m| m == a);
        let mut n_slot = usize::MAX;
        let mut n_d = f64::INFINITY;
        let mut s_d = f64::INFINITY;
        for slot in 0..k {
            let d = dist[[a, medoids[slot]]];
            if d < n_d {
                s_d = n_d;
                n_d = d;
                n_slot = slot;
            } else if d < s_d {
                s_d = d;
            }
        }
        if let Some(slot) = owner {
            // The medoid belongs to its own cluster; cost is unaffected
            // (its distance is zero) but the invariant keeps clusters
            // non-empty even with duplicated rows.
            if n_slot != slot {
                s_d = n_d.min(s_d);
                n_d = 0.0;
                n_slot = slot;
            }
        }
        near_slot[a] = n_slot;
        near_d[a] = n_d;
        seco_d[a] = s_d;
    }
    (near_slot, near_d, seco_d)
}

fn assign(dist: &Array2<f64>, medoids: &[usize]) -> Vec<usize> {
    let (near_slot, _, _) = caches(dist, medoids);
    near_slot
}

fn exact_cost(dist: &Array2<f64>, medoids: &[usize], labels: &[usize]) -> f64 {
    labels.iter().enumerate().map(|(a, &g)| dist[[a, medoids[g]]]).sum()
}

/// Debiasing mode of the mixture pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Debias {
    /// `M = X X^T` (equal covariance traces).
    None,
    /// `M = X X^T - diag(Gamma_hat)`.
    Pecok,
}

/// Result of the mixture pipeline.
#[derive(Debug)]
pub struct GmmClustering {
    pub partition: Partition,
    pub medoids: MedoidSolution,
    pub solution: SdpSolution,
    pub gamma: Option<GammaEstimate>,
}

/// Full mixture pipeline: Gram objective (optionally debiased), relaxed
/// K-means solve with `alpha = 1`, then K-medoids rounding.
pub fn cluster_gmm(
    data: &ArrayView2<f64>,
    k: usize,
    debias: Debias,
    config: &SolverConfig,
    seed: u64,
) -> Result<GmmClustering> {
    let n = data.nrows();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data matrix".into()));
    }
    let mut objective = data.dot(&data.t());
    let gamma = match debias {
        Debias::None => None,
        Debias::Pecok => {
            let estimate = estimate_gamma(data)?;
            for (i, g) in estimate.diagonal.iter().enumerate() {
                objective[[i, i]] -= g;
            }
            Some(estimate)
        }
    };
    let problem = SdpProblem::new(objective, k, 1.0)?;
    let solution = solve(&problem, config)?;
    let medoids = kmedoids_rows(&solution.b_hat.view(), k, seed)?;
    Ok(GmmClustering { partition: medoids.assignment.clone(), medoids, solution, gamma })
}

/// Cap selection for the block-model pipeline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaChoice {
    /// Data-driven `alpha_hat = (K^3/n) exp(2 n d_X) ^ 1` where `d_X` is the
    /// edge density and `^` the minimum.
    Auto,
    Fixed(f64),
}

/// Result of the block-model pipeline.
#[derive(Debug)]
pub struct SbmClustering {
    pub partition: Partition,
    pub medoids: MedoidSolution,
    pub solution: SdpSolution,
    pub alpha_used: f64,
}

/// Full block-model pipeline on a symmetric 0/1 adjacency matrix with zero
/// diagonal: `M = X X^T` over the capped feasible set, then rounding.
pub fn cluster_sbm(
    adjacency: &ArrayView2<f64>,
    k: usize,
    alpha: AlphaChoice,
    config: &SolverConfig,
    seed: u64,
) -> Result<SbmClustering> {
    let n = adjacency.nrows();
    if adjacency.ncols() != n || n == 0 {
        return Err(Error::DimensionMismatch {
            expected: "non-empty square adjacency".into(),
            got: format!("{}x{}", adjacency.nrows(), adjacency.ncols()),
        });
    }
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must be in [1, {n}]")));
    }
    for i in 0..n {
        if adjacency[[i, i]] != 0.0 {
            return Err(Error::InvalidModel(format!("adjacency diagonal entry {i} is non-zero")));
        }
        for j in 0..n {
            let v = adjacency[[i, j]];
            if v != 0.0 && v != 1.0 {
                return Err(Error::InvalidModel(format!("adjacency entry ({i},{j}) = {v} is not 0/1")));
            }
            if adjacency[[j, i]] != v {
                return Err(Error::InvalidModel(format!("adjacency is not symmetric at ({i},{j})")));
            }
        }
    }
    let alpha_used = match alpha {
        AlphaChoice::Fixed(a) => a,
        AlphaChoice::Auto => {
            if n == 1 {
                1.0
            } else {
                let density: f64 =
                    adjacency.iter().sum::<f64>() / (n as f64 * (n as f64 - 1.0));
                let k3 = (k * k * k) as f64;
                ((k3 / n as f64) * (2.0 * n as f64 * density).exp()).min(1.0)
            }
        }
    };
    let objective = adjacency.dot(&adjacency.t());
    let problem = SdpProblem::new(objective, k, alpha_used)?;
    let solution = solve(&problem, config)?;
    let medoids = kmedoids_rows(&solution.b_hat.view(), k, seed)?;
    Ok(SbmClustering { partition: medoids.assignment.clone(), medoids, solution, alpha_used })
}
