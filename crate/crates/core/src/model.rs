//! Partitions, partition matrices and the misclassification metric.
//!
//! A clustering of n items into K non-empty groups is stored as an
//! assignment vector. Its normalized block matrix B (entries 1/|G_k| inside
//! group k, zero across groups) is an idempotent projection; the solver
//! relaxes exactly that structure, and the l1 functionals implemented here
//! quantify how far a relaxed solution sits from a genuine partition.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::assignment::min_cost_assignment;
use crate::error::{Error, Result};

/// A partition of `{0, .., n-1}` into `k` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    assignments: Vec<usize>,
    k: usize,
}

impl Partition {
    /// Builds a partition from group indices in `[0, k)`. Every group must
    /// be non-empty and `n >= k >= 1`.
    pub fn new(assignments: Vec<usize>, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPartition("k must be at least 1".into()));
        }
        if assignments.len() < k {
            return Err(Error::InvalidPartition(format!(
                "n = {} is smaller than k = {k}",
                assignments.len()
            )));
        }
        let mut seen = vec![false; k];
        for (i, &g) in assignments.iter().enumerate() {
            if g >= k {
                return Err(Error::InvalidPartition(format!(
                    "item {i} assigned to group {g}, but k = {k}"
                )));
            }
            seen[g] = true;
        }
        if let Some(empty) = seen.iter().position(|s| !s) {
            return Err(Error::InvalidPartition(format!("group {empty} is empty")));
        }
        Ok(Self { assignments, k })
    }

    /// Contiguous partition with the given group sizes.
    pub fn from_sizes(sizes: &[usize]) -> Result<Self> {
        if sizes.is_empty() || sizes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidPartition(
                "sizes must be non-empty and positive".into(),
            ));
        }
        let mut assignments = Vec::with_capacity(sizes.iter().sum());
        for (g, &m) in sizes.iter().enumerate() {
            assignments.extend(std::iter::repeat(g).take(m));
        }
        Ok(Self { assignments, k: sizes.len() })
    }

    /// Uniformly random assignment with all `k` groups non-empty.
    pub fn random<R: Rng>(n: usize, k: usize, rng: &mut R) -> Result<Self> {
        if n < k || k == 0 {
            return Err(Error::InvalidPartition(format!("need n >= k >= 1, got n = {n}, k = {k}")));
        }
        loop {
            let assignments: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
            if let Ok(p) = Self::new(assignments, k) {
                return Ok(p);
            }
        }
    }

    pub fn n(&self) -> usize {
        self.assignments.len()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0_usize; self.k];
        for &g in &self.assignments {
            sizes[g] += 1;
        }
        sizes
    }

    /// Size of the smallest group (the paper's m).
    pub fn min_group_size(&self) -> usize {
        self.group_sizes().into_iter().min().unwrap()
    }

    /// Groups as index lists, a derived view of the assignment vector.
    pub fn groups(&self) -> Vec<Vec<usize>> {
        let mut groups = vec![Vec::new(); self.k];
        for (i, &g) in self.assignments.iter().enumerate() {
            groups[g].push(i);
        }
        groups
    }

    /// The n x n normalized block matrix of the partition.
    pub fn partition_matrix(&self) -> PartitionMatrix {
        let n = self.n();
        let sizes = self.group_sizes();
        let mut entries = Array2::zeros((n, n));
        for a in 0..n {
            let g = self.assignments[a];
            let w = 1.0 / sizes[g] as f64;
            for b in 0..n {
                if self.assignments[b] == g {
                    entries[[a, b]] = w;
                }
            }
        }
        PartitionMatrix { entries, partition: self.clone() }
    }

    /// The n x K binary membership matrix (one 1 per row).
    pub fn membership_matrix(&self) -> Array2<f64> {
        let mut a = Array2::zeros((self.n(), self.k));
        for (i, &g) in self.assignments.iter().enumerate() {
            a[[i, g]] = 1.0;
        }
        a
    }

    /// Recovers the partition from a partition matrix, validating the block
    /// structure within `tol` on each entry.
    pub fn from_partition_matrix(b: &ArrayView2<f64>, tol: f64) -> Result<Self> {
        let n = b.nrows();
        if n == 0 || b.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: "non-empty square matrix".into(),
                got: format!("{}x{}", b.nrows(), b.ncols()),
            });
        }
        let thresh = 0.5 / n as f64;
        let mut labels = vec![usize::MAX; n];
        let mut k = 0;
        for a in 0..n {
            let mut found = None;
            for b_idx in 0..a {
                if b[[a, b_idx]] > thresh {
                    found = Some(labels[b_idx]);
                    break;
                }
            }
            labels[a] = match found {
                Some(l) => l,
                None => {
                    k += 1;
                    k - 1
                }
            };
        }
        let partition = Self::new(labels, k)?;
        let expected = partition.partition_matrix();
        let mut max_dev = 0.0_f64;
        for (x, y) in b.iter().zip(expected.entries().iter()) {
            max_dev = max_dev.max((x - y).abs());
        }
        if max_dev > tol {
            return Err(Error::InvalidPartition(format!(
                "matrix is not a partition matrix: max deviation {max_dev:.3e} exceeds {tol:.1e}"
            )));
        }
        Ok(partition)
    }
}

/// Partitions serialize as a bare JSON array of group indices.
impl Serialize for Partition {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.assignments.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Partition {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let assignments = Vec::<usize>::deserialize(deserializer)?;
        let k = assignments.iter().copied().max().map_or(0, |m| m + 1);
        Partition::new(assignments, k).map_err(D::Error::custom)
    }
}

/// The normalized block matrix B of a partition together with the partition
/// that generated it.
#[derive(Debug, Clone)]
pub struct PartitionMatrix {
    entries: Array2<f64>,
    partition: Partition,
}

impl PartitionMatrix {
    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    /// `B* M` without forming the n x n product: row a of the result is the
    /// average of the rows of `M` over a's group.
    fn left_multiply(&self, m: &ArrayView2<f64>) -> Array2<f64> {
        let n = self.partition.n();
        let k = self.partition.k();
        let sizes = self.partition.group_sizes();
        let cols = m.ncols();
        let mut group_sums = Array2::<f64>::zeros((k, cols));
        for a in 0..n {
            let g = self.partition.assignments()[a];
            for j in 0..cols {
                group_sums[[g, j]] += m[[a, j]];
            }
        }
        let mut out = Array2::zeros((n, cols));
        for a in 0..n {
            let g = self.partition.assignments()[a];
            let w = 1.0 / sizes[g] as f64;
            for j in 0..cols {
                out[[a, j]] = group_sums[[g, j]] * w;
            }
        }
        out
    }
}

/// Proportion of non-matching points between two partitions over the same
/// items with the same group count: the minimum over label permutations of
/// half the normalized symmetric-difference count.
///
/// Computed exactly as a maximum-weight matching on the K x K overlap
/// counts, which equals the exhaustive minimum over all K! permutations.
pub fn misclassification_error(estimated: &Partition, truth: &Partition) -> Result<f64> {
    if estimated.n() != truth.n() {
        return Err(Error::IncomparablePartitions(format!(
            "n = {} vs n = {}",
            estimated.n(),
            truth.n()
        )));
    }
    if estimated.k() != truth.k() {
        return Err(Error::IncomparablePartitions(format!(
            "k = {} vs k = {}",
            estimated.k(),
            truth.k()
        )));
    }
    let n = truth.n();
    let k = truth.k();
    let mut overlap = Array2::<f64>::zeros((k, k));
    for i in 0..n {
        overlap[[truth.assignments()[i], estimated.assignments()[i]]] += 1.0;
    }
    // Max-weight assignment == min-cost on negated overlaps.
    let neg = overlap.mapv(|v| -v);
    let perm = min_cost_assignment(&neg.view());
    let matched: f64 = perm.iter().enumerate().map(|(i, &j)| overlap[[i, j]]).sum();
    // err = (2n - 2*matched) / (2n); single division keeps the value exact
    // relative to the symmetric-difference formulation.
    Ok((2.0 * n as f64 - 2.0 * matched) / (2.0 * n as f64))
}

/// The three l1 functionals comparing a matrix to a partition matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct L1Discrepancy {
    /// `|B* - B* B|_1`
    pub d1: f64,
    /// `|B* - B|_1`
    pub d2: f64,
    /// `2 sum_{j != k} |B_{G_j G_k}|_1` over ordered pairs of distinct groups
    pub offdiag: f64,
}

/// Evaluates the block l1 functionals. For any `b` in the relaxed feasible
/// set, `d1 == offdiag` and `d2 <= (2n/m) d1`.
pub fn block_l1_discrepancy(b_star: &PartitionMatrix, b: &ArrayView2<f64>) -> Result<L1Discrepancy> {
    let n = b_star.partition().n();
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", b.nrows(), b.ncols()),
        });
    }
    let bstar_b = b_star.left_multiply(b);
    let bs = b_star.entries();
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    let mut offdiag = 0.0;
    let labels = b_star.partition().assignments();
    for a in 0..n {
        for c in 0..n {
            d1 += (bs[[a, c]] - bstar_b[[a, c]]).abs();
            d2 += (bs[[a, c]] - b[[a, c]]).abs();
            if labels[a] != labels[c] {
                offdiag += b[[a, c]].abs();
            }
        }
    }
    Ok(L1Discrepancy { d1, d2, offdiag: 2.0 * offdiag })
}

/// Upper bound on the misclassification proportion of any rounded partition
/// in terms of `|B* B_hat - B*|_1`: `60 (n/m)^2 |B* B_hat - B*|_1 / n`.
pub fn lemma9_bound(b_star: &PartitionMatrix, b_hat: &ArrayView2<f64>, m: usize) -> Result<f64> {
    let n = b_star.partition().n();
    if b_hat.nrows() != n || b_hat.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", b_hat.nrows(), b_hat.ncols()),
        });
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let prod = b_star.left_multiply(b_hat);
    let mut l1 = 0.0;
    for (p, s) in prod.iter().zip(b_star.entries().iter()) {
        l1 += (p - s).abs();
    }
    let ratio = n as f64 / m as f64;
    Ok(60.0 * ratio * ratio * l1 / n as f64)
}
