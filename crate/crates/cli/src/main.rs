//! `rkmeans`: relaxed K-means clustering toolkit.
//!
//! Subcommands cover dataset generation (gen-gmm, gen-sbm), the debiasing
//! estimator (gamma), the SDP solver (solve), the end-to-end pipelines
//! (cluster-gmm, cluster-sbm), replicate sweeps (sweep), reference oracles
//! (oracle) and the Bayes misclassification Monte Carlo (bayes).
//!
//! Exit codes: 0 full success, 1 configuration/input errors, 2 when a
//! sweep completed with failed rows.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use relaxed_kmeans::analysis::{
    bayes_misclassification, brute_force_kmeans, ch_divergence, BayesExperiment, DivergenceInput,
};
use relaxed_kmeans::debias::estimate_gamma;
use relaxed_kmeans::generators::{
    permute_gmm, permute_sbm, sample_gmm, sample_sbm, seeded_permutation,
};
use relaxed_kmeans::io as rio;
use relaxed_kmeans::rounding::{cluster_gmm, cluster_sbm, AlphaChoice, Debias};
use relaxed_kmeans::seeding::{derive_seed, stream};
use relaxed_kmeans::solver::{solve, FeasibilityReport, SdpProblem, SdpSolution, SolverConfig};
use rkmeans_harness::config::{load_model, load_sweep, ModelConfig, ReportFormat};
use rkmeans_harness::sweep::{emit_report, has_failures, run_sweep};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "rkmeans", version, about = "Relaxed K-means clustering toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SolverFlags {
    /// Solver tolerance on residuals and feasibility.
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Initial ADMM penalty.
    #[arg(long)]
    rho: Option<f64>,
}

impl SolverFlags {
    fn build(&self) -> SolverConfig {
        let mut c = SolverConfig::default();
        if let Some(t) = self.tol {
            c.tolerance = t;
        }
        if let Some(m) = self.max_iter {
            c.max_iterations = m;
        }
        if let Some(r) = self.rho {
            c.rho = r;
        }
        c
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a mixture dataset from a model config.
    GenGmm {
        /// Model config JSON (a {"gmm": …} document).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV for the n x p data matrix.
        #[arg(long)]
        data: PathBuf,
        /// Output JSON for the ground-truth partition.
        #[arg(long)]
        truth: PathBuf,
        /// Optional CSV for the per-row noise covariance traces.
        #[arg(long)]
        gamma: Option<PathBuf>,
        /// Keep rows in contiguous group order instead of permuting.
        #[arg(long)]
        no_permute: bool,
    },
    /// Sample a block-model graph from a model config.
    GenSbm {
        /// Model config JSON (an {"sbm": …} document).
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV for the adjacency matrix.
        #[arg(long)]
        adjacency: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        no_permute: bool,
    },
    /// Estimate the debiasing diagonal from a data matrix.
    Gamma {
        #[arg(long)]
        data: PathBuf,
        /// Output CSV (one value per row).
        #[arg(long)]
        output: PathBuf,
        /// Optional JSON with the selected neighbor pairs.
        #[arg(long)]
        neighbors: Option<PathBuf>,
    },
    /// Solve max <M, B> over the relaxed feasible set.
    Solve {
        /// Objective matrix CSV.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        k: usize,
        /// Entrywise cap in (0, 1]; 1 removes the cap.
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Output CSV for the solution matrix.
        #[arg(long)]
        output: PathBuf,
        /// Optional JSON diagnostics (objective, residuals, feasibility).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Full mixture pipeline: Gram objective, solve, round.
    ClusterGmm {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long, value_enum, default_value_t = DebiasArg::None)]
        debias: DebiasArg,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output JSON partition.
        #[arg(long)]
        output: PathBuf,
        /// Optional CSV for the solver matrix.
        #[arg(long)]
        b_hat: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Full block-model pipeline over the capped feasible set.
    ClusterSbm {
        #[arg(long)]
        adjacency: PathBuf,
        #[arg(long)]
        k: usize,
        /// "auto" for the data-driven cap, or a value in (0, 1].
        #[arg(long, default_value = "auto")]
        alpha: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        b_hat: Option<PathBuf>,
        #[arg(long)]
        diagnostics: Option<PathBuf>,
        #[command(flatten)]
        solver: SolverFlags,
    },
    /// Run a replicate sweep from a JSON config.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output path; "-" writes to stdout. Overrides the config.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<FormatArg>,
        /// Worker threads (default: logical cores).
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Reference oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Bayes misclassification Monte Carlo for supervised two-class
    /// Gaussian classification.
    Bayes {
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Labeled sample size.
        #[arg(long)]
        n: usize,
        /// Ambient dimension.
        #[arg(long)]
        p: usize,
        #[arg(long, default_value_t = 100_000)]
        replicates: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Exhaustive K-means over all partitions into exactly k blocks (n <= 14).
    Kmeans {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// CH-divergence D_+(q || p).
    ChDivergence {
        /// Comma-separated non-negative entries of q.
        #[arg(long)]
        q: String,
        /// Comma-separated positive entries of p.
        #[arg(long)]
        p: String,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum DebiasArg {
    None,
    Pecok,
}

impl From<DebiasArg> for Debias {
    fn from(d: DebiasArg) -> Self {
        match d {
            DebiasArg::None => Debias::None,
            DebiasArg::Pecok => Debias::Pecok,
        }
    }
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Serialize)]
struct SolveDiagnostics<'a> {
    objective: f64,
    iterations: usize,
    converged: bool,
    primal_residual: f64,
    dual_residual: f64,
    feasibility: &'a FeasibilityReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha_used: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rounding_cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    medoid_rows: Option<Vec<usize>>,
}

impl<'a> SolveDiagnostics<'a> {
    fn from_solution(sol: &'a SdpSolution) -> Self {
        Self {
            objective: sol.objective,
            iterations: sol.iterations,
            converged: sol.converged,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            feasibility: &sol.feasibility,
            alpha_used: None,
            rounding_cost: None,
            medoid_rows: None,
        }
    }
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) if p != Path::new("-") => {
            std::fs::write(p, text.as_bytes()).with_context(|| format!("writing {}", p.display()))?
        }
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|tok| tok.trim().parse::<f64>().map_err(|e| anyhow::anyhow!("bad entry {tok:?}: {e}")))
        .collect()
}

/// Runs one command; Ok(true) means a sweep finished with failed rows.
fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenGmm { model, seed, data, truth, gamma, no_permute } => {
            let cfg = load_model(&model)?;
            let ModelConfig::Gmm(g) = cfg else {
                bail!("gen-gmm expects a {{\"gmm\": …}} model config");
            };
            let m = g.build()?;
            let mut sample = sample_gmm(&m, seed)?;
            if !no_permute {
                let perm = seeded_permutation(m.n(), derive_seed(seed, stream::PERMUTATION, 0));
                sample = permute_gmm(&sample, &perm)?;
            }
            rio::write_matrix_csv(&data, &sample.data.view())?;
            rio::write_partition_json(&truth, &sample.truth)?;
            if let Some(path) = gamma {
                rio::write_vector_csv(&path, &sample.gamma)?;
            }
            Ok(false)
        }
        Command::GenSbm { model, seed, adjacency, truth, no_permute } => {
            let cfg = load_model(&model)?;
            let ModelConfig::Sbm(s) = cfg else {
                bail!("gen-sbm expects an {{\"sbm\": …}} model config");
            };
            let m = s.build()?;
            let mut sample = sample_sbm(&m, seed)?;
            if !no_permute {
                let perm = seeded_permutation(m.n(), derive_seed(seed, stream::PERMUTATION, 0));
                sample = permute_sbm(&sample, &perm)?;
            }
            rio::write_matrix_csv(&adjacency, &sample.adjacency.view())?;
            rio::write_partition_json(&truth, &sample.truth)?;
            Ok(false)
        }
        Command::Gamma { data, output, neighbors } => {
            let x = rio::read_matrix_csv(&data)?;
            let est = estimate_gamma(&x.view())?;
            rio::write_vector_csv(&output, &est.diagonal)?;
            if let Some(path) = neighbors {
                write_json(Some(&path), &est.neighbor_indices)?;
            }
            Ok(false)
        }
        Command::Solve { matrix, k, alpha, output, diagnostics, solver } => {
            let m = rio::read_matrix_csv(&matrix)?;
            let problem = SdpProblem::new(m, k, alpha)?;
            let sol = solve(&problem, &solver.build())?;
            rio::write_matrix_csv(&output, &sol.b_hat.view())?;
            if let Some(path) = diagnostics {
                write_json(Some(&path), &SolveDiagnostics::from_solution(&sol))?;
            }
            Ok(false)
        }
        Command::ClusterGmm { data, k, debias, seed, output, b_hat, diagnostics, solver } => {
            let x = rio::read_matrix_csv(&data)?;
            let out = cluster_gmm(&x.view(), k, debias.into(), &solver.build(), seed)?;
            rio::write_partition_json(&output, &out.partition)?;
            if let Some(path) = b_hat {
                rio::write_matrix_csv(&path, &out.solution.b_hat.view())?;
            }
            if let Some(path) = diagnostics {
                let mut d = SolveDiagnostics::from_solution(&out.solution);
                d.rounding_cost = Some(out.medoids.cost);
                d.medoid_rows = Some(out.medoids.medoid_rows.clone());
                write_json(Some(&path), &d)?;
            }
            Ok(false)
        }
        Command::ClusterSbm { adjacency, k, alpha, seed, output, b_hat, diagnostics, solver } => {
            let x = rio::read_matrix_csv(&adjacency)?;
            let choice = if alpha == "auto" {
                AlphaChoice::Auto
            } else {
                AlphaChoice::Fixed(alpha.parse().context("--alpha must be \"auto\" or a number")?)
            };
            let out = cluster_sbm(&x.view(), k, choice, &solver.build(), seed)?;
            rio::write_partition_json(&output, &out.partition)?;
            if let Some(path) = b_hat {
                rio::write_matrix_csv(&path, &out.solution.b_hat.view())?;
            }
            if let Some(path) = diagnostics {
                let mut d = SolveDiagnostics::from_solution(&out.solution);
                d.alpha_used = Some(out.alpha_used);
                d.rounding_cost = Some(out.medoids.cost);
                d.medoid_rows = Some(out.medoids.medoid_rows.clone());
                write_json(Some(&path), &d)?;
            }
            Ok(false)
        }
        Command::Sweep { config, output, format, jobs, seed, replicates } => {
            let mut cfg = load_sweep(&config)?;
            // Flags win over the config file.
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if let Some(j) = jobs {
                cfg.jobs = Some(j);
            }
            if let Some(f) = format {
                cfg.format = f.into();
            }
            if let Some(o) = output {
                cfg.output = Some(o);
            }
            let rows = run_sweep(&cfg)?;
            match cfg.output.as_deref() {
                Some(p) if p != Path::new("-") => {
                    let file = std::fs::File::create(p)
                        .with_context(|| format!("creating {}", p.display()))?;
                    emit_report(&rows, cfg.format, std::io::BufWriter::new(file))?;
                }
                _ => emit_report(&rows, cfg.format, std::io::stdout().lock())?,
            }
            Ok(has_failures(&rows))
        }
        Command::Oracle(cmd) => {
            match cmd {
                OracleCommand::Kmeans { data, k, output } => {
                    let x = rio::read_matrix_csv(&data)?;
                    let oracle = brute_force_kmeans(&x.view(), k)?;
                    #[derive(Serialize)]
                    struct Out<'a> {
                        partition: &'a relaxed_kmeans::Partition,
                        criterion: f64,
                    }
                    write_json(
                        output.as_deref(),
                        &Out { partition: &oracle.partition, criterion: oracle.criterion },
                    )?;
                }
                OracleCommand::ChDivergence { q, p, output } => {
                    let input = DivergenceInput::new(parse_list(&q)?, parse_list(&p)?)?;
                    #[derive(Serialize)]
                    struct Out {
                        value: f64,
                    }
                    write_json(output.as_deref(), &Out { value: ch_divergence(&input) })?;
                }
            }
            Ok(false)
        }
        Command::Bayes { delta, sigma, n, p, replicates, seed, output } => {
            let est = bayes_misclassification(&BayesExperiment {
                delta,
                sigma,
                n,
                p,
                replicates,
                seed,
            })?;
            #[derive(Serialize)]
            struct Out {
                estimate: f64,
                std_error: f64,
                full_estimate: f64,
                full_std_error: f64,
            }
            write_json(
                output.as_deref(),
                &Out {
                    estimate: est.estimate,
                    std_error: est.std_error,
                    full_estimate: est.full_estimate,
                    full_std_error: est.full_std_error,
                },
            )?;
            Ok(false)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help/version are not errors; everything else is a config error.
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
