//! Samplers for sub-Gaussian mixtures and stochastic block models, plus the
//! signal-to-noise functionals attached to each model.
//!
//! Both samplers are pure functions of `(model, seed)` and emit rows/nodes
//! grouped contiguously by the ground-truth partition. Harnesses that want
//! to avoid order artifacts apply a seeded permutation afterwards.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::Partition;

/// Coordinate distribution of the noise vector before covariance coloring.
/// Each family at scale `L` is sub-Gaussian with parameter `L^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseFamily {
    /// N(0, L^2) coordinates.
    Gaussian,
    /// +-L coin flips.
    RademacherScaled,
    /// Uniform on [-L, L].
    UniformScaled,
}

impl NoiseFamily {
    /// Variance of one coordinate at scale `l`.
    pub fn coordinate_variance(&self, l: f64) -> f64 {
        match self {
            NoiseFamily::Gaussian | NoiseFamily::RademacherScaled => l * l,
            NoiseFamily::UniformScaled => l * l / 3.0,
        }
    }

    fn draw<R: Rng>(&self, rng: &mut R, l: f64) -> f64 {
        match self {
            NoiseFamily::Gaussian => {
                // std dev l; l = 0 degenerates to the constant 0.
                Normal::new(0.0, l).unwrap().sample(rng)
            }
            NoiseFamily::RademacherScaled => {
                if rng.gen::<bool>() {
                    l
                } else {
                    -l
                }
            }
            NoiseFamily::UniformScaled => {
                if l == 0.0 {
                    0.0
                } else {
                    rng.gen_range(-l..=l)
                }
            }
        }
    }
}

/// Mixture model: K component means, K covariances, group sizes, and the
/// sub-Gaussian noise family at scale L.
#[derive(Debug, Clone)]
pub struct MixtureModel {
    means: Array2<f64>,
    covariances: Vec<Array2<f64>>,
    sizes: Vec<usize>,
    noise_family: NoiseFamily,
    subgaussian_scale: f64,
}

impl MixtureModel {
    pub fn new(
        means: Array2<f64>,
        covariances: Vec<Array2<f64>>,
        sizes: Vec<usize>,
        noise_family: NoiseFamily,
        subgaussian_scale: f64,
    ) -> Result<Self> {
        let k = means.nrows();
        let p = means.ncols();
        if k == 0 || p == 0 {
            return Err(Error::InvalidModel("means matrix must be non-empty".into()));
        }
        if covariances.len() != k || sizes.len() != k {
            return Err(Error::InvalidModel(format!(
                "means have {k} rows but {} covariances and {} sizes",
                covariances.len(),
                sizes.len()
            )));
        }
        if sizes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidModel("every group size must be positive".into()));
        }
        if !subgaussian_scale.is_finite() || subgaussian_scale < 0.0 {
            return Err(Error::InvalidModel("subgaussian scale must be finite and >= 0".into()));
        }
        if means.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("means must be finite".into()));
        }
        for (idx, cov) in covariances.iter().enumerate() {
            if cov.nrows() != p || cov.ncols() != p {
                return Err(Error::InvalidModel(format!(
                    "covariance {idx} is {}x{}, expected {p}x{p}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            let mut asym = 0.0_f64;
            for i in 0..p {
                for j in 0..p {
                    if !cov[[i, j]].is_finite() {
                        return Err(Error::InvalidModel(format!("covariance {idx} has non-finite entries")));
                    }
                    asym = asym.max((cov[[i, j]] - cov[[j, i]]).abs());
                }
            }
            if asym > 1e-8 {
                return Err(Error::NotSymmetric(asym));
            }
        }
        Ok(Self { means, covariances, sizes, noise_family, subgaussian_scale })
    }

    /// Spherical shortcut: `mu_k = (delta / sqrt(2)) e_k`, identity
    /// covariances scaled by `cov_scales[k]`, so all pairwise mean distances
    /// equal `delta`. Requires `p >= k`.
    pub fn spherical(
        k: usize,
        p: usize,
        delta: f64,
        cov_scales: &[f64],
        sizes: Vec<usize>,
        noise_family: NoiseFamily,
        subgaussian_scale: f64,
    ) -> Result<Self> {
        if p < k {
            return Err(Error::InvalidModel(format!("need p >= k for basis means, got p = {p}, k = {k}")));
        }
        if cov_scales.len() != k {
            return Err(Error::InvalidModel("one covariance scale per group required".into()));
        }
        let mut means = Array2::zeros((k, p));
        for g in 0..k {
            means[[g, g]] = delta / std::f64::consts::SQRT_2;
        }
        let covariances = cov_scales.iter().map(|&s| Array2::eye(p) * s).collect();
        Self::new(means, covariances, sizes, noise_family, subgaussian_scale)
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn p(&self) -> usize {
        self.means.ncols()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn means(&self) -> &Array2<f64> {
        &self.means
    }

    pub fn covariances(&self) -> &[Array2<f64>] {
        &self.covariances
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn noise_family(&self) -> NoiseFamily {
        self.noise_family
    }

    pub fn subgaussian_scale(&self) -> f64 {
        self.subgaussian_scale
    }

    /// Trace of the actual noise covariance of group `g`, i.e. the diagonal
    /// value of the debiasing target for points in that group.
    pub fn noise_trace(&self, g: usize) -> f64 {
        let tr: f64 = (0..self.p()).map(|i| self.covariances[g][[i, i]]).sum();
        self.noise_family.coordinate_variance(self.subgaussian_scale) * tr
    }
}

/// One sampled mixture dataset: rows grouped contiguously by `truth`, and
/// the per-row noise covariance traces (the diagonal of the debiasing target).
#[derive(Debug, Clone)]
pub struct GmmSample {
    pub data: Array2<f64>,
    pub truth: Partition,
    pub gamma: Vec<f64>,
}

/// Draws one dataset: `X_a = mu_k + Sigma_k^{1/2} eps` with iid coordinates
/// of `eps` from the noise family at scale L. Deterministic in `seed`.
pub fn sample_gmm(model: &MixtureModel, seed: u64) -> Result<GmmSample> {
    let k = model.k();
    let p = model.p();
    let n = model.n();
    let l = model.subgaussian_scale;

    let mut roots = Vec::with_capacity(k);
    for (idx, cov) in model.covariances.iter().enumerate() {
        let sym = (cov + &cov.t()) / 2.0;
        let eig = linalg::sym_eigen(&sym.view())?;
        if eig.values[0] < -1e-10 {
            return Err(Error::InvalidModel(format!(
                "covariance {idx} is not PSD: min eigenvalue {:.3e}",
                eig.values[0]
            )));
        }
        let keep: Vec<usize> = (0..p).collect();
        let weights: Vec<f64> = eig.values.iter().map(|&v| v.max(0.0).sqrt()).collect();
        roots.push(linalg::reconstruct_selected(&eig, &keep, &weights));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((n, p));
    let mut gamma = Vec::with_capacity(n);
    let mut row = 0;
    let mut eps = Array1::zeros(p);
    for g in 0..k {
        let trace = model.noise_trace(g);
        for _ in 0..model.sizes[g] {
            for e in eps.iter_mut() {
                *e = model.noise_family.draw(&mut rng, l);
            }
            let colored = roots[g].dot(&eps);
            for j in 0..p {
                data[[row, j]] = model.means[[g, j]] + colored[j];
            }
            gamma.push(trace);
            row += 1;
        }
    }
    let truth = Partition::from_sizes(&model.sizes)?;
    Ok(GmmSample { data, truth, gamma })
}

/// Stochastic block model: symmetric connection matrix P in [0,1]^{KxK} and
/// group sizes.
#[derive(Debug, Clone)]
pub struct BlockModel {
    connectivity: Array2<f64>,
    sizes: Vec<usize>,
}

impl BlockModel {
    pub fn new(connectivity: Array2<f64>, sizes: Vec<usize>) -> Result<Self> {
        let k = sizes.len();
        if k == 0 || sizes.iter().any(|&m| m == 0) {
            return Err(Error::InvalidModel("sizes must be non-empty and positive".into()));
        }
        if connectivity.nrows() != k || connectivity.ncols() != k {
            return Err(Error::InvalidModel(format!(
                "connectivity is {}x{}, expected {k}x{k}",
                connectivity.nrows(),
                connectivity.ncols()
            )));
        }
        let mut asym = 0.0_f64;
        for i in 0..k {
            for j in 0..k {
                let v = connectivity[[i, j]];
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::InvalidModel(format!("P[{i},{j}] = {v} is outside [0, 1]")));
                }
                asym = asym.max((connectivity[[i, j]] - connectivity[[j, i]]).abs());
            }
        }
        if asym > 1e-9 {
            return Err(Error::NotSymmetric(asym));
        }
        Ok(Self { connectivity, sizes })
    }

    /// Assortative shortcut: within-group probability `p_in` on the
    /// diagonal, `p_out` elsewhere.
    pub fn two_level(k: usize, p_in: f64, p_out: f64, sizes: Vec<usize>) -> Result<Self> {
        let mut p = Array2::from_elem((k, k), p_out);
        for i in 0..k {
            p[[i, i]] = p_in;
        }
        Self::new(p, sizes)
    }

    pub fn k(&self) -> usize {
        self.sizes.len()
    }

    pub fn n(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn connectivity(&self) -> &Array2<f64> {
        &self.connectivity
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// `|P|_inf`, the tightest admissible sub-Gaussian bound L.
    pub fn max_connectivity(&self) -> f64 {
        self.connectivity.iter().fold(0.0_f64, |acc, &v| acc.max(v))
    }
}

/// One sampled graph: symmetric 0/1 adjacency with zero diagonal.
#[derive(Debug, Clone)]
pub struct SbmSample {
    pub adjacency: Array2<f64>,
    pub truth: Partition,
}

/// Independent Bernoulli edges below the diagonal, mirrored above.
pub fn sample_sbm(model: &BlockModel, seed: u64) -> Result<SbmSample> {
    let n = model.n();
    let truth = Partition::from_sizes(&model.sizes)?;
    let labels = truth.assignments().to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency = Array2::zeros((n, n));
    for a in 0..n {
        for b in (a + 1)..n {
            let p = model.connectivity[[labels[a], labels[b]]];
            let edge = if rng.gen::<f64>() < p { 1.0 } else { 0.0 };
            adjacency[[a, b]] = edge;
            adjacency[[b, a]] = edge;
        }
    }
    Ok(SbmSample { adjacency, truth })
}

fn serialize_matrix<S: serde::Serializer>(
    m: &Array2<f64>,
    serializer: S,
) -> std::result::Result<S::Ok, S::Error> {
    let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
    serde::Serialize::serialize(&rows, serializer)
}

/// Signal and noise functionals of a model instance.
#[derive(Debug, Clone, Serialize)]
pub struct SnrReport {
    /// Minimal signal distance between two distinct groups.
    pub delta: f64,
    /// Pairwise signal distances (zero diagonal).
    #[serde(serialize_with = "serialize_matrix")]
    pub delta_pairs: Array2<f64>,
    /// `L^2 max_k |Sigma_k|_op` (mixtures only).
    pub sigma2: Option<f64>,
    /// `L^2 max_k |Sigma_k|_F` (mixtures only).
    pub nu2: Option<f64>,
    /// Smallest group size.
    pub m: usize,
    /// Signal-to-noise ratio driving the exponential error decay.
    pub s2: f64,
    /// Effective rank `nu^4 / sigma^4` (mixtures only).
    pub effective_rank: Option<f64>,
    /// Sub-Gaussian bound L used (block models only).
    pub bound_l: Option<f64>,
}

fn safe_ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// SNR of a mixture model: `s^2 = (Delta^2 / sigma^2) ^ (m Delta^4 / nu^4)`
/// where `^` is the minimum.
pub fn snr_gmm(model: &MixtureModel) -> Result<SnrReport> {
    let k = model.k();
    if k < 2 {
        return Err(Error::InvalidParameter(
            "signal distance is undefined for a single-component mixture".into(),
        ));
    }
    let l2 = model.subgaussian_scale * model.subgaussian_scale;
    let mut max_op = 0.0_f64;
    let mut max_frob = 0.0_f64;
    for cov in &model.covariances {
        let sym = (cov + &cov.t()) / 2.0;
        let eig = linalg::sym_eigen(&sym.view())?;
        let op = eig.values.iter().fold(0.0_f64, |acc, &v| acc.max(v.abs()));
        let frob = cov.iter().map(|v| v * v).sum::<f64>().sqrt();
        max_op = max_op.max(op);
        max_frob = max_frob.max(frob);
    }
    let sigma2 = l2 * max_op;
    let nu2 = l2 * max_frob;

    let mut delta_pairs = Array2::zeros((k, k));
    let mut delta = f64::INFINITY;
    for j in 0..k {
        for i in 0..k {
            if i == j {
                continue;
            }
            let d: f64 = (0..model.p())
                .map(|c| {
                    let diff = model.means[[i, c]] - model.means[[j, c]];
                    diff * diff
                })
                .sum::<f64>()
                .sqrt();
            delta_pairs[[i, j]] = d;
            delta = delta.min(d);
        }
    }
    let m = *model.sizes.iter().min().unwrap();
    let d2 = delta * delta;
    let s2 = safe_ratio(d2, sigma2).min(safe_ratio(m as f64 * d2 * d2, nu2 * nu2));
    let effective_rank = if sigma2 > 0.0 { Some((nu2 * nu2) / (sigma2 * sigma2)) } else { None };
    Ok(SnrReport {
        delta,
        delta_pairs,
        sigma2: Some(sigma2),
        nu2: Some(nu2),
        m,
        s2,
        effective_rank,
        bound_l: None,
    })
}

/// SNR of a block model under the bound `L >= |P|_inf`:
/// `Delta_jk^2 = sum_l m_l (P_kl - P_jl)^2` and `s^2 = Delta^2 / L`.
pub fn snr_sbm(model: &BlockModel, l: f64) -> Result<SnrReport> {
    let k = model.k();
    if k < 2 {
        return Err(Error::InvalidParameter(
            "signal distance is undefined for a single-block model".into(),
        ));
    }
    let p_inf = model.max_connectivity();
    if l < p_inf - 1e-12 {
        return Err(Error::InvalidParameter(format!(
            "bound L = {l} is below |P|_inf = {p_inf}"
        )));
    }
    let mut delta_pairs = Array2::zeros((k, k));
    let mut delta2 = f64::INFINITY;
    for j in 0..k {
        for i in 0..k {
            if i == j {
                continue;
            }
            let d2: f64 = (0..k)
                .map(|c| {
                    let diff = model.connectivity[[i, c]] - model.connectivity[[j, c]];
                    model.sizes[c] as f64 * diff * diff
                })
                .sum();
            delta_pairs[[i, j]] = d2.sqrt();
            delta2 = delta2.min(d2);
        }
    }
    let m = *model.sizes.iter().min().unwrap();
    Ok(SnrReport {
        delta: delta2.sqrt(),
        delta_pairs,
        sigma2: None,
        nu2: None,
        m,
        s2: safe_ratio(delta2, l),
        effective_rank: None,
        bound_l: Some(l),
    })
}

/// Uniformly random permutation of `{0, .., n-1}`, deterministic in `seed`.
pub fn seeded_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.gen_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

/// Applies a row permutation to a mixture sample: row `i` of the result is
/// row `perm[i]` of the input; labels and traces move with their rows.
pub fn permute_gmm(sample: &GmmSample, perm: &[usize]) -> Result<GmmSample> {
    let n = sample.data.nrows();
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("permutation of length {n}"),
            got: format!("{}", perm.len()),
        });
    }
    let mut data = Array2::zeros(sample.data.raw_dim());
    let mut labels = vec![0_usize; n];
    let mut gamma = vec![0.0; n];
    for (i, &src) in perm.iter().enumerate() {
        for j in 0..sample.data.ncols() {
            data[[i, j]] = sample.data[[src, j]];
        }
        labels[i] = sample.truth.assignments()[src];
        gamma[i] = sample.gamma[src];
    }
    Ok(GmmSample { data, truth: Partition::new(labels, sample.truth.k())?, gamma })
}

/// Applies a node permutation to an SBM sample (rows and columns together).
pub fn permute_sbm(sample: &SbmSample, perm: &[usize]) -> Result<SbmSample> {
    let n = sample.adjacency.nrows();
    if perm.len() != n {
        return Err(Error::DimensionMismatch {
            expected: format!("permutation of length {n}"),
            got: format!("{}", perm.len()),
        });
    }
    let mut adjacency = Array2::zeros((n, n));
    let mut labels = vec![0_usize; n];
    for i in 0..n {
        labels[i] = sample.truth.assignments()[perm[i]];
        for j in 0..n {
            adjacency[[i, j]] = sample.adjacency[[perm[i], perm[j]]];
        }
    }
    Ok(SbmSample { adjacency, truth: Partition::new(labels, sample.truth.k())? })
}
