//! JSON-configurable model templates and sweep settings. A single config
//! document drives generation and sweeps; command-line flags override the
//! file values.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use relaxed_kmeans::generators::{BlockModel, MixtureModel, NoiseFamily};
use relaxed_kmeans::rounding::{AlphaChoice, Debias};
use relaxed_kmeans::solver::SolverConfig;
use serde::{Deserialize, Serialize};

/// Mean specification: either the full K x p matrix or scaled basis
/// vectors `mu_k = (delta / sqrt 2) e_k` (all pairwise distances `delta`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeansSpec {
    ScaledBasis(f64),
    Full(Vec<Vec<f64>>),
}

/// Covariance specification per group.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceSpec {
    #[default]
    Identity,
    /// One scale per group: `Sigma_k = scale_k I`.
    ScaledIdentity(Vec<f64>),
    Full(Vec<Vec<Vec<f64>>>),
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GmmConfig {
    /// Ambient dimension; required with `scaled_basis` means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    pub means: MeansSpec,
    #[serde(default)]
    pub covariances: CovarianceSpec,
    pub sizes: Vec<usize>,
    #[serde(default = "GmmConfig::default_family")]
    pub noise_family: NoiseFamily,
    #[serde(default = "default_scale")]
    pub subgaussian_scale: f64,
}

impl GmmConfig {
    fn default_family() -> NoiseFamily {
        NoiseFamily::Gaussian
    }

    pub fn build(&self) -> Result<MixtureModel> {
        let k = self.sizes.len();
        let means = match &self.means {
            MeansSpec::ScaledBasis(delta) => {
                let p = self
                    .dimension
                    .context("`dimension` is required with scaled_basis means")?;
                if p < k {
                    bail!("dimension {p} is smaller than the group count {k}");
                }
                let mut m = Array2::zeros((k, p));
                for g in 0..k {
                    m[[g, g]] = delta / std::f64::consts::SQRT_2;
                }
                m
            }
            MeansSpec::Full(rows) => {
                if rows.len() != k {
                    bail!("means have {} rows but there are {k} sizes", rows.len());
                }
                let p = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|r| r.len() != p) {
                    bail!("means rows have inconsistent lengths");
                }
                if let Some(dim) = self.dimension {
                    if dim != p {
                        bail!("`dimension` = {dim} conflicts with means width {p}");
                    }
                }
                Array2::from_shape_fn((k, p), |(i, j)| rows[i][j])
            }
        };
        let p = means.ncols();
        let covariances: Vec<Array2<f64>> = match &self.covariances {
            CovarianceSpec::Identity => (0..k).map(|_| Array2::eye(p)).collect(),
            CovarianceSpec::ScaledIdentity(scales) => {
                if scales.len() != k {
                    bail!("{} covariance scales for {k} groups", scales.len());
                }
                scales.iter().map(|&s| Array2::eye(p) * s).collect()
            }
            CovarianceSpec::Full(mats) => {
                if mats.len() != k {
                    bail!("{} covariance matrices for {k} groups", mats.len());
                }
                mats.iter()
                    .map(|m| {
                        if m.len() != p || m.iter().any(|r| r.len() != p) {
                            bail!("covariance matrices must be {p}x{p}");
                        }
                        Ok(Array2::from_shape_fn((p, p), |(i, j)| m[i][j]))
                    })
                    .collect::<Result<_>>()?
            }
        };
        MixtureModel::new(
            means,
            covariances,
            self.sizes.clone(),
            self.noise_family,
            self.subgaussian_scale,
        )
        .map_err(Into::into)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmConfig {
    pub connectivity: Vec<Vec<f64>>,
    pub sizes: Vec<usize>,
}

impl SbmConfig {
    pub fn build(&self) -> Result<BlockModel> {
        let k = self.sizes.len();
        if self.connectivity.len() != k || self.connectivity.iter().any(|r| r.len() != k) {
            bail!("connectivity must be {k}x{k}");
        }
        let p = Array2::from_shape_fn((k, k), |(i, j)| self.connectivity[i][j]);
        BlockModel::new(p, self.sizes.clone()).map_err(Into::into)
    }
}

/// A generative model template.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelConfig {
    Gmm(GmmConfig),
    Sbm(SbmConfig),
}

/// A concrete model instance produced from a template.
pub enum ModelInstance {
    Gmm(MixtureModel),
    Sbm(BlockModel),
}

/// Which template parameter the sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Multiply all means by the value (mixtures).
    DeltaScale,
    /// Rebuild an assortative connectivity with the template's within-group
    /// probability and `q = p - value` (block models).
    PMinusQ,
    /// Rescale group sizes proportionally to the target total.
    N,
    /// Keep the leading `value` groups of the template.
    K,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(untagged, rename_all = "snake_case")]
pub enum AlphaConfig {
    Named(AlphaName),
    Value(f64),
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaName {
    Auto,
}

impl Default for AlphaConfig {
    fn default() -> Self {
        AlphaConfig::Named(AlphaName::Auto)
    }
}

impl AlphaConfig {
    pub fn choice(&self) -> AlphaChoice {
        match self {
            AlphaConfig::Named(AlphaName::Auto) => AlphaChoice::Auto,
            AlphaConfig::Value(v) => AlphaChoice::Fixed(*v),
        }
    }
}

/// Solver overrides; anything omitted keeps the library default.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iterations: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
}

impl SolverSettings {
    pub fn build(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(m) = self.max_iterations {
            c.max_iterations = m;
        }
        if let Some(t) = self.tolerance {
            c.tolerance = t;
        }
        if let Some(r) = self.rho {
            c.rho = r;
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Csv,
    Json,
}

fn default_debias() -> Debias {
    Debias::None
}

fn default_true() -> bool {
    true
}

/// Full sweep description. Flags override `seed`, `replicates`, `jobs`,
/// `output` and `format`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub model: ModelConfig,
    pub sweep_variable: SweepVariable,
    pub sweep_values: Vec<f64>,
    pub replicates: usize,
    pub seed: u64,
    #[serde(default = "default_debias")]
    pub debias: Debias,
    #[serde(default)]
    pub alpha: AlphaConfig,
    #[serde(default)]
    pub solver: SolverSettings,
    /// Apply a seeded row/node permutation to every sample (avoids
    /// contiguous-order artifacts in the solver). Defaults to true.
    #[serde(default = "default_true")]
    pub permute: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sweep_values.is_empty() {
            bail!("sweep_values must be non-empty");
        }
        if self.replicates == 0 {
            bail!("replicates must be >= 1");
        }
        // Instantiating every value surfaces template errors before any
        // work is scheduled.
        for &v in &self.sweep_values {
            instantiate(&self.model, self.sweep_variable, v)?;
        }
        Ok(())
    }
}

/// Applies a sweep value to the template.
pub fn instantiate(model: &ModelConfig, var: SweepVariable, value: f64) -> Result<ModelInstance> {
    match (model, var) {
        (ModelConfig::Gmm(g), SweepVariable::DeltaScale) => {
            let mut scaled = g.clone();
            scaled.means = match &g.means {
                MeansSpec::ScaledBasis(d) => MeansSpec::ScaledBasis(d * value),
                MeansSpec::Full(rows) => MeansSpec::Full(
                    rows.iter().map(|r| r.iter().map(|x| x * value).collect()).collect(),
                ),
            };
            Ok(ModelInstance::Gmm(scaled.build()?))
        }
        (ModelConfig::Sbm(_), SweepVariable::DeltaScale) => {
            bail!("delta_scale sweeps apply to mixture templates only")
        }
        (ModelConfig::Sbm(s), SweepVariable::PMinusQ) => {
            let p_in = s.connectivity[0][0];
            let q = p_in - value;
            if !(0.0..=1.0).contains(&q) {
                bail!("p - q = {value} drives the off-diagonal probability to {q}, outside [0, 1]");
            }
            let k = s.sizes.len();
            let connectivity =
                (0..k).map(|i| (0..k).map(|j| if i == j { p_in } else { q }).collect()).collect();
            Ok(ModelInstance::Sbm(SbmConfig { connectivity, sizes: s.sizes.clone() }.build()?))
        }
        (ModelConfig::Gmm(_), SweepVariable::PMinusQ) => {
            bail!("p_minus_q sweeps apply to block-model templates only")
        }
        (model, SweepVariable::N) => {
            let target = value.round();
            if target < 1.0 || !value.is_finite() {
                bail!("n sweep value {value} is not a positive size");
            }
            let sizes = match model {
                ModelConfig::Gmm(g) => &g.sizes,
                ModelConfig::Sbm(s) => &s.sizes,
            };
            let rescaled = rescale_sizes(sizes, target as usize)?;
            match model {
                ModelConfig::Gmm(g) => {
                    let mut out = g.clone();
                    out.sizes = rescaled;
                    Ok(ModelInstance::Gmm(out.build()?))
                }
                ModelConfig::Sbm(s) => {
                    let mut out = s.clone();
                    out.sizes = rescaled;
                    Ok(ModelInstance::Sbm(out.build()?))
                }
            }
        }
        (model, SweepVariable::K) => {
            let k = value.round();
            if k < 1.0 || !value.is_finite() {
                bail!("k sweep value {value} is not a positive count");
            }
            let k = k as usize;
            match model {
                ModelConfig::Gmm(g) => {
                    if k > g.sizes.len() {
                        bail!("k = {k} exceeds the template's {} groups", g.sizes.len());
                    }
                    let mut out = g.clone();
                    out.sizes = g.sizes[..k].to_vec();
                    out.means = match &g.means {
                        MeansSpec::ScaledBasis(d) => MeansSpec::ScaledBasis(*d),
                        MeansSpec::Full(rows) => MeansSpec::Full(rows[..k].to_vec()),
                    };
                    out.covariances = match &g.covariances {
                        CovarianceSpec::Identity => CovarianceSpec::Identity,
                        CovarianceSpec::ScaledIdentity(s) => {
                            CovarianceSpec::ScaledIdentity(s[..k].to_vec())
                        }
                        CovarianceSpec::Full(m) => CovarianceSpec::Full(m[..k].to_vec()),
                    };
                    Ok(ModelInstance::Gmm(out.build()?))
                }
                ModelConfig::Sbm(s) => {
                    if k > s.sizes.len() {
                        bail!("k = {k} exceeds the template's {} groups", s.sizes.len());
                    }
                    let connectivity =
                        (0..k).map(|i| s.connectivity[i][..k].to_vec()).collect();
                    Ok(ModelInstance::Sbm(
                        SbmConfig { connectivity, sizes: s.sizes[..k].to_vec() }.build()?,
                    ))
                }
            }
        }
    }
}

/// Proportional rescale with largest-remainder rounding; every group keeps
/// at least one member and the total hits `target` exactly.
fn rescale_sizes(sizes: &[usize], target: usize) -> Result<Vec<usize>> {
    let k = sizes.len();
    if target < k {
        bail!("target n = {target} is smaller than the number of groups {k}");
    }
    let total: usize = sizes.iter().sum();
    let mut out: Vec<usize> = Vec::with_capacity(k);
    let mut remainders: Vec<(f64, usize)> = Vec::with_capacity(k);
    let mut allocated = 0_usize;
    for (g, &m) in sizes.iter().enumerate() {
        let exact = target as f64 * m as f64 / total as f64;
        let base = (exact.floor() as usize).max(1);
        out.push(base);
        allocated += base;
        remainders.push((exact - base as f64, g));
    }
    // Distribute the leftover by largest remainder (stable on ties).
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = target as i64 - allocated as i64;
    let mut idx = 0;
    while left > 0 {
        out[remainders[idx % k].1] += 1;
        left -= 1;
        idx += 1;
    }
    while left < 0 {
        // Over-allocation can only come from the max(1) floor; shrink the
        // largest groups.
        let g = (0..k).max_by_key(|&g| out[g]).unwrap();
        if out[g] <= 1 {
            bail!("cannot rescale sizes to n = {target}");
        }
        out[g] -= 1;
        left += 1;
    }
    Ok(out)
}

pub fn load_model(path: &std::path::Path) -> Result<ModelConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading model config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing model config {}", path.display()))
}

pub fn load_sweep(path: &std::path::Path) -> Result<SweepConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading sweep config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing sweep config {}", path.display()))
}
