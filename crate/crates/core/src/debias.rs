//! Trace debiasing for mixtures with unequal covariance traces.
//!
//! K-means pulls toward groups of equal width; subtracting an estimate of
//! the diagonal noise-trace matrix from the Gram objective removes that
//! bias. The estimator picks, for every point, the two most similar other
//! points under the dissimilarity V and reads the trace off the resulting
//! inner product.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Estimated diagonal correction plus the neighbor pair chosen per point.
#[derive(Debug, Clone)]
pub struct GammaEstimate {
    /// `Gamma_hat[a] = <X_a - X_b1, X_a - X_b2>` for the selected neighbors.
    pub diagonal: Vec<f64>,
    /// `(b1, b2)` per point; `b1 != a`, `b2 not in {a, b1}`.
    pub neighbor_indices: Vec<[usize; 2]>,
}

/// `V(a,b) = max_{c,d not in {a,b}, c != d} |<X_a - X_b, (X_c - X_d)/|X_c - X_d|>|`.
///
/// All inner products go through the Gram identity
/// `<X_a - X_b, X_c - X_d> = G_ac - G_ad - G_bc + G_bd` from one precomputed
/// Gram matrix. Pairs with `X_c = X_d` are skipped; if no direction vector
/// remains for any pair the data is degenerate.
pub fn estimate_gamma(data: &ArrayView2<f64>) -> Result<GammaEstimate> {
    let n = data.nrows();
    if n < 4 {
        return Err(Error::InsufficientData(format!(
            "gamma estimation needs at least 4 points, got {n}"
        )));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("data matrix".into()));
    }

    let gram = data.dot(&data.t());

    // Inverse norms of all candidate directions; 0 marks a skipped pair.
    let mut inv_norm = Array2::<f64>::zeros((n, n));
    for c in 0..n {
        for d in (c + 1)..n {
            let sq = gram[[c, c]] + gram[[d, d]] - 2.0 * gram[[c, d]];
            let scale = (gram[[c, c]] + gram[[d, d]]).abs().max(1.0);
            if sq > scale * 1e-24 {
                let v = 1.0 / sq.sqrt();
                inv_norm[[c, d]] = v;
                inv_norm[[d, c]] = v;
            }
        }
    }

    // V(a,b) for a < b; rows computed independently, then mirrored.
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut row = vec![f64::INFINITY; n];
            for b in (a + 1)..n {
                let mut best = f64::NEG_INFINITY;
                for c in 0..n {
                    if c == a || c == b {
                        continue;
                    }
                    for d in (c + 1)..n {
                        if d == a || d == b {
                            continue;
                        }
                        let w = inv_norm[[c, d]];
                        if w == 0.0 {
                            continue;
                        }
                        let num = gram[[a, c]] - gram[[a, d]] - gram[[b, c]] + gram[[b, d]];
                        let val = num.abs() * w;
                        if val > best {
                            best = val;
                        }
                    }
                }
                row[b] = if best == f64::NEG_INFINITY { f64::INFINITY } else { best };
            }
            row
        })
        .collect();
    let mut v = Array2::from_elem((n, n), f64::INFINITY);
    for a in 0..n {
        for b in (a + 1)..n {
            v[[a, b]] = rows[a][b];
            v[[b, a]] = rows[a][b];
        }
    }

    let mut diagonal = Vec::with_capacity(n);
    let mut neighbor_indices = Vec::with_capacity(n);
    for a in 0..n {
        let b1 = argmin_excluding(&v, a, &[a]);
        let b1 = match b1 {
            Some(b) => b,
            None => {
                return Err(Error::DegenerateData(
                    "V(a, b) is undefined for every pair: all candidate directions are zero".into(),
                ))
            }
        };
        let b2 = argmin_excluding(&v, a, &[a, b1]).ok_or_else(|| {
            Error::DegenerateData("no second neighbor with a defined dissimilarity".into())
        })?;
        let g = gram[[a, a]] - gram[[a, b1]] - gram[[a, b2]] + gram[[b1, b2]];
        diagonal.push(g);
        neighbor_indices.push([b1, b2]);
    }
    Ok(GammaEstimate { diagonal, neighbor_indices })
}

/// Smallest-index argmin of `v[a, ..]` outside `excluded`, ignoring
/// undefined (infinite) entries.
fn argmin_excluding(v: &Array2<f64>, a: usize, excluded: &[usize]) -> Option<usize> {
    let n = v.nrows();
    let mut best: Option<(f64, usize)> = None;
    for b in 0..n {
        if excluded.contains(&b) {
            continue;
        }
        let val = v[[a, b]];
        if !val.is_finite() {
            continue;
        }
        match best {
            Some((bv, _)) if bv <= val => {}
            _ => best = Some((val, b)),
        }
    }
    best.map(|(_, b)| b)
}

/// Outcome of the debiasing-accuracy condition
/// `Delta^2 >= 64 |Gamma - Gamma_hat|_V / m`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaCondition {
    /// `max_a (Gamma - Gamma_hat)_a - min_a (Gamma - Gamma_hat)_a`.
    pub v_norm: f64,
    pub satisfied: bool,
}

/// Checks the theorem condition on the debiasing error. Constant shifts of
/// the estimate are free: the `|.|_V` pseudo-norm only sees the spread.
pub fn gamma_condition_check(
    gamma_true: &[f64],
    gamma_hat: &[f64],
    delta: f64,
    m: usize,
) -> Result<GammaCondition> {
    if gamma_true.len() != gamma_hat.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} entries", gamma_true.len()),
            got: format!("{}", gamma_hat.len()),
        });
    }
    if gamma_true.is_empty() {
        return Err(Error::InsufficientData("empty gamma vectors".into()));
    }
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    if delta < 0.0 {
        return Err(Error::InvalidParameter("delta must be >= 0".into()));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (t, h) in gamma_true.iter().zip(gamma_hat) {
        let d = t - h;
        lo = lo.min(d);
        hi = hi.max(d);
    }
    let v_norm = hi - lo;
    Ok(GammaCondition { v_norm, satisfied: delta * delta >= 64.0 * v_norm / m as f64 })
}
