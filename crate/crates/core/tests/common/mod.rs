//! Shared helpers for integration tests: exactly-feasible random points,
//! random symmetric matrices, and a small dense linear solver for
//! independent KKT oracles.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use relaxed_kmeans::Partition;

pub fn random_symmetric(n: usize, scale: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut m = Array2::zeros((n, n));
    for i in 0..n {
        for j in i..n {
            let v: f64 = rng.gen_range(-scale..scale);
            m[[i, j]] = v;
            m[[j, i]] = v;
        }
    }
    m
}

/// Exactly feasible point of the relaxed set: a random convex combination
/// of partition matrices (feasibility holds to machine precision).
pub fn random_feasible(n: usize, k: usize, components: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let mut weights: Vec<f64> = (0..components).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let mut b = Array2::<f64>::zeros((n, n));
    for &w in &weights {
        let p = Partition::random(n, k, rng).unwrap();
        b += &(p.partition_matrix().entries() * w);
    }
    b
}

/// Gaussian elimination with partial pivoting; panics on singular systems.
/// Deliberately independent of any linear algebra crate.
pub fn solve_dense(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        assert!(a[pivot][col].abs() > 1e-12, "singular KKT system");
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in (col + 1)..n {
            let f = a[row][col] / a[col][col];
            if f == 0.0 {
                continue;
            }
            for c in col..n {
                a[row][c] -= f * a[col][c];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for c in (row + 1)..n {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    x
}
