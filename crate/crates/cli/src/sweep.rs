//! Replicate-parallel sweep execution and report emission.
//!
//! A sweep is a measurement campaign: component failures are recorded in
//! the row's status column instead of aborting the run. Rows are emitted
//! in deterministic (value, replicate) order and all randomness flows from
//! per-cell derived seeds, so reruns reproduce every field except the
//! measured wall time.

use std::io::Write;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use relaxed_kmeans::generators::{
    permute_gmm, permute_sbm, sample_gmm, sample_sbm, seeded_permutation, snr_gmm, snr_sbm,
    SnrReport,
};
use relaxed_kmeans::model::{lemma9_bound, misclassification_error};
use relaxed_kmeans::rounding::{cluster_gmm, cluster_sbm, Debias};
use relaxed_kmeans::seeding::{derive_seed, derive_seed2, stream};
use serde::{Deserialize, Serialize};

use crate::config::{instantiate, ModelInstance, ReportFormat, SweepConfig};

/// Fixed CSV schema of a sweep report.
pub const CSV_HEADER: &str =
    "sweep_value,replicate,s2,err,iters,converged,wall_ms,lemma9_bound,gamma_cond,status";

/// Optional floats that may be infinite (noiseless cells have infinite
/// SNR): JSON carries non-finite values as strings, numbers otherwise.
mod opt_f64 {
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_some(x),
            Some(x) => s.serialize_some(&format!("{x}")),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Str(String),
        }
        match Option::<Raw>::deserialize(d)? {
            None => Ok(None),
            Some(Raw::Num(x)) => Ok(Some(x)),
            Some(Raw::Str(s)) => s.parse().map(Some).map_err(D::Error::custom),
        }
    }
}

/// One pipeline run. Failed rows carry the error in `status` and empty
/// measurement fields.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub replicate: usize,
    #[serde(with = "opt_f64")]
    pub s2: Option<f64>,
    #[serde(with = "opt_f64")]
    pub err: Option<f64>,
    pub iters: Option<usize>,
    pub converged: Option<bool>,
    /// Measured wall time; excluded from the determinism contract.
    pub wall_ms: f64,
    #[serde(with = "opt_f64")]
    pub lemma9_bound: Option<f64>,
    /// Whether the debiasing-accuracy condition held (mixtures only).
    pub gamma_cond: Option<bool>,
    pub status: String,
}

struct CellOutcome {
    s2: f64,
    err: f64,
    iters: usize,
    converged: bool,
    lemma9: f64,
    gamma_cond: Option<bool>,
}

fn run_cell(config: &SweepConfig, value: f64, cell_seed: u64) -> Result<CellOutcome> {
    let instance = instantiate(&config.model, config.sweep_variable, value)?;
    let solver = config.solver.build();
    match instance {
        ModelInstance::Gmm(model) => {
            let mut sample = sample_gmm(&model, derive_seed(cell_seed, stream::GMM_SAMPLE, 0))?;
            if config.permute {
                let perm = seeded_permutation(
                    model.n(),
                    derive_seed(cell_seed, stream::PERMUTATION, 0),
                );
                sample = permute_gmm(&sample, &perm)?;
            }
            let snr: SnrReport = snr_gmm(&model)?;
            let out =
                cluster_gmm(&sample.data.view(), model.k(), config.debias, &solver, cell_seed)?;
            let err = misclassification_error(&out.partition, &sample.truth)?;
            let b_star = sample.truth.partition_matrix();
            let m = sample.truth.min_group_size();
            let lemma9 = lemma9_bound(&b_star, &out.solution.b_hat.view(), m)?;
            let zeros;
            let gamma_hat: &[f64] = match (&config.debias, &out.gamma) {
                (Debias::Pecok, Some(g)) => &g.diagonal,
                _ => {
                    zeros = vec![0.0; sample.gamma.len()];
                    &zeros
                }
            };
            let cond = relaxed_kmeans::debias::gamma_condition_check(
                &sample.gamma,
                gamma_hat,
                snr.delta,
                m,
            )?;
            Ok(CellOutcome {
                s2: snr.s2,
                err,
                iters: out.solution.iterations,
                converged: out.solution.converged,
                lemma9,
                gamma_cond: Some(cond.satisfied),
            })
        }
        ModelInstance::Sbm(model) => {
            let mut sample = sample_sbm(&model, derive_seed(cell_seed, stream::SBM_SAMPLE, 0))?;
            if config.permute {
                let perm = seeded_permutation(
                    model.n(),
                    derive_seed(cell_seed, stream::PERMUTATION, 0),
                );
                sample = permute_sbm(&sample, &perm)?;
            }
            let snr = snr_sbm(&model, model.max_connectivity())?;
            let out = cluster_sbm(
                &sample.adjacency.view(),
                model.k(),
                config.alpha.choice(),
                &solver,
                cell_seed,
            )?;
            let err = misclassification_error(&out.partition, &sample.truth)?;
            let b_star: relaxed_kmeans::model::PartitionMatrix = sample.truth.partition_matrix();
            let m = sample.truth.min_group_size();
            let lemma9 = lemma9_bound(&b_star, &out.solution.b_hat.view(), m)?;
            Ok(CellOutcome {
                s2: snr.s2,
                err,
                iters: out.solution.iterations,
                converged: out.solution.converged,
                lemma9,
                gamma_cond: None,
            })
        }
    }
}

/// Runs the full sweep. Rows come back in (value index, replicate) order,
/// one per cell, with failures isolated per row.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    config.validate()?;
    let cells: Vec<(usize, usize)> = (0..config.sweep_values.len())
        .flat_map(|vi| (0..config.replicates).map(move |ri| (vi, ri)))
        .collect();

    let execute = || {
        cells
            .par_iter()
            .map(|&(vi, ri)| {
                let value = config.sweep_values[vi];
                let cell_seed = derive_seed2(config.seed, stream::SWEEP_CELL, vi as u64, ri as u64);
                let start = Instant::now();
                let outcome = run_cell(config, value, cell_seed);
                let wall_ms = start.elapsed().as_secs_f64() * 1e3;
                match outcome {
                    Ok(c) => SweepRow {
                        sweep_value: value,
                        replicate: ri,
                        s2: Some(c.s2),
                        err: Some(c.err),
                        iters: Some(c.iters),
                        converged: Some(c.converged),
                        wall_ms,
                        lemma9_bound: Some(c.lemma9),
                        gamma_cond: c.gamma_cond,
                        status: "ok".into(),
                    },
                    Err(e) => SweepRow {
                        sweep_value: value,
                        replicate: ri,
                        s2: None,
                        err: None,
                        iters: None,
                        converged: None,
                        wall_ms,
                        lemma9_bound: None,
                        gamma_cond: None,
                        status: format!("{e:#}").replace('\n', " "),
                    },
                }
            })
            .collect::<Vec<SweepRow>>()
    };

    let rows = match config.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .context("building sweep worker pool")?
            .install(execute),
        None => execute(),
    };
    Ok(rows)
}

fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(String::new, |x| format!("{x}"))
}

/// Writes the report. CSV uses the fixed header and RFC-4180 quoting;
/// JSON is an array of row objects. Empty reports are refused.
pub fn emit_report<W: Write>(rows: &[SweepRow], format: ReportFormat, writer: W) -> Result<()> {
    if rows.is_empty() {
        bail!("refusing to emit an empty report");
    }
    match format {
        ReportFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
            w.write_record(CSV_HEADER.split(','))?;
            for r in rows {
                w.write_record(&[
                    format!("{}", r.sweep_value),
                    format!("{}", r.replicate),
                    opt(&r.s2),
                    opt(&r.err),
                    opt(&r.iters),
                    opt(&r.converged),
                    format!("{}", r.wall_ms),
                    opt(&r.lemma9_bound),
                    opt(&r.gamma_cond),
                    r.status.clone(),
                ])?;
            }
            w.flush()?;
        }
        ReportFormat::Json => {
            serde_json::to_writer_pretty(writer, rows)?;
        }
    }
    Ok(())
}

/// Parses a CSV report back into rows (inverse of [`emit_report`]).
pub fn parse_report<R: std::io::Read>(reader: R) -> Result<Vec<SweepRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = r.headers()?;
        let expected: Vec<&str> = CSV_HEADER.split(',').collect();
        if headers.iter().collect::<Vec<_>>() != expected {
            bail!("unexpected report header: {headers:?}");
        }
    }
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            Ok(Some(s.parse()?))
        }
    };
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        rows.push(SweepRow {
            sweep_value: record[0].parse()?,
            replicate: record[1].parse()?,
            s2: parse_opt(&record[2])?,
            err: parse_opt(&record[3])?,
            iters: if record[4].is_empty() { None } else { Some(record[4].parse()?) },
            converged: if record[5].is_empty() { None } else { Some(record[5].parse()?) },
            wall_ms: record[6].parse()?,
            lemma9_bound: parse_opt(&record[7])?,
            gamma_cond: if record[8].is_empty() { None } else { Some(record[8].parse()?) },
            status: record[9].to_string(),
        });
    }
    Ok(rows)
}

/// True when any row failed (exit code 2 at the CLI).
pub fn has_failures(rows: &[SweepRow]) -> bool {
    rows.iter().any(|r| r.status != "ok")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{
        AlphaConfig, CovarianceSpec, GmmConfig, MeansSpec, ModelConfig, SolverSettings,
        SweepVariable,
    };
    use relaxed_kmeans::generators::NoiseFamily;

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            model: ModelConfig::Gmm(GmmConfig {
                dimension: Some(4),
                means: MeansSpec::ScaledBasis(8.0),
                covariances: CovarianceSpec::Identity,
                sizes: vec![6, 6],
                noise_family: NoiseFamily::Gaussian,
                subgaussian_scale: 1.0,
            }),
            sweep_variable: SweepVariable::DeltaScale,
            sweep_values: vec![0.5, 1.0],
            replicates: 2,
            seed: 9,
            debias: Debias::None,
            alpha: AlphaConfig::default(),
            solver: SolverSettings::default(),
            permute: true,
            jobs: Some(2),
            output: None,
            format: ReportFormat::Csv,
        }
    }

    #[test]
    fn sweep_produces_one_row_per_cell_in_order() {
        let rows = run_sweep(&tiny_config()).unwrap();
        assert_eq!(rows.len(), 4);
        let keys: Vec<(f64, usize)> = rows.iter().map(|r| (r.sweep_value, r.replicate)).collect();
        assert_eq!(keys, vec![(0.5, 0), (0.5, 1), (1.0, 0), (1.0, 1)]);
        assert!(rows.iter().all(|r| r.status == "ok"));
        assert!(rows.iter().all(|r| r.err.unwrap() >= 0.0 && r.err.unwrap() <= 1.0));
        assert!(rows.iter().all(|r| r.gamma_cond.is_some()));
    }

    #[test]
    fn sweep_rows_are_reproducible_across_thread_counts() {
        let mut one = tiny_config();
        one.jobs = Some(1);
        let rows_serial = run_sweep(&one).unwrap();
        let mut four = tiny_config();
        four.jobs = Some(4);
        let rows_parallel = run_sweep(&four).unwrap();
        for (a, b) in rows_serial.iter().zip(&rows_parallel) {
            assert_eq!(a.s2, b.s2);
            assert_eq!(a.err, b.err);
            assert_eq!(a.iters, b.iters);
            assert_eq!(a.status, b.status);
        }
    }

    #[test]
    fn noiseless_sweep_has_zero_error() {
        let mut cfg = tiny_config();
        if let ModelConfig::Gmm(g) = &mut cfg.model {
            g.subgaussian_scale = 0.0;
        }
        cfg.sweep_values = vec![1.0];
        cfg.replicates = 1;
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].err, Some(0.0));
        assert_eq!(rows[0].s2, Some(f64::INFINITY));
    }

    #[test]
    fn failed_cells_are_isolated_per_row() {
        // Noiseless coincident means + debiasing: the gamma estimator hits
        // degenerate data at runtime on the first value; the second value
        // is fine. The healthy rows must survive.
        let mut cfg = tiny_config();
        if let ModelConfig::Gmm(g) = &mut cfg.model {
            g.subgaussian_scale = 0.0;
        }
        cfg.debias = Debias::Pecok;
        cfg.sweep_values = vec![0.0, 1.0];
        cfg.replicates = 1;
        let rows = run_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert!(rows[0].status.contains("degenerate"), "status: {}", rows[0].status);
        assert!(rows[0].err.is_none());
        assert_eq!(rows[1].status, "ok");
        assert_eq!(rows[1].err, Some(0.0));
        assert!(has_failures(&rows));

        // A value that fails template validation is rejected up front.
        let mut bad = tiny_config();
        bad.sweep_variable = SweepVariable::K;
        bad.sweep_values = vec![2.0, 5.0];
        assert!(run_sweep(&bad).is_err());
    }

    #[test]
    fn csv_round_trip_preserves_all_values() {
        let rows = vec![
            SweepRow {
                sweep_value: 0.1 + 0.2,
                replicate: 0,
                s2: Some(1.0 / 3.0),
                err: Some(0.0),
                iters: Some(123),
                converged: Some(true),
                wall_ms: 1.5,
                lemma9_bound: Some(f64::INFINITY),
                gamma_cond: None,
                status: "ok".into(),
            },
            SweepRow {
                sweep_value: -2.5e-17,
                replicate: 1,
                s2: None,
                err: None,
                iters: None,
                converged: None,
                wall_ms: 0.25,
                lemma9_bound: None,
                gamma_cond: Some(false),
                status: "invalid model: something, with a comma".into(),
            },
        ];
        let mut buf = Vec::new();
        emit_report(&rows, ReportFormat::Csv, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        let back = parse_report(buf.as_slice()).unwrap();
        assert_eq!(rows, back);

        // JSON emission of the same rows is valid and value-preserving.
        let mut jbuf = Vec::new();
        emit_report(&rows, ReportFormat::Json, &mut jbuf).unwrap();
        let parsed: Vec<SweepRow> = serde_json::from_slice(&jbuf).unwrap();
        assert_eq!(parsed, rows);
    }

    #[test]
    fn empty_report_is_refused() {
        let mut buf = Vec::new();
        assert!(emit_report(&[], ReportFormat::Csv, &mut buf).is_err());
    }
}
