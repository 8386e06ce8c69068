//! Batch front-end: `fsl run <config.json>` and `fsl plot <results.csv>`.
//!
//! Exit codes: 0 when every case passed (verification) or the optimizer
//! finished with a lower objective (fits), 1 otherwise, 2 on configuration
//! errors.

pub mod config;
pub mod output;
pub mod plot;

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rayon::prelude::*;

use crate::divergence::{divergence, FGenerator};
use crate::error::{Error, Result};
use crate::fisher::generalized_fisher;
use crate::identity::{
    verify_debruijn, verify_heat_equation, verify_kl_corollary, verify_theorem1, VerificationCase,
    VerificationRecord,
};
use crate::optimize::{fit_covariance, fit_model_fsm};

pub use config::{ExperimentConfig, ExperimentKind};
pub use output::{Cell, RunManifest, Table};
pub use plot::{emit_plot_data, PlotKind, PlotSummary};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// What a finished run produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub table: Table,
    pub success: bool,
    pub passed: usize,
    pub failed: usize,
    pub results_csv: PathBuf,
    pub results_json: PathBuf,
    pub manifest: PathBuf,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.success {
            EXIT_OK
        } else {
            EXIT_FAILED
        }
    }
}

/// Maps an error from [`run`] to its exit code.
pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_FAILED,
    }
}

/// Loads, validates and executes a configuration file, writing the results
/// CSV, its JSON mirror and a manifest into `out` (or the configured
/// directory).
pub fn run(config_path: &Path, out: Option<&Path>) -> Result<RunOutcome> {
    let config = ExperimentConfig::from_path(config_path).map_err(|e| match e {
        Error::Io(io) => Error::config(config_path.display().to_string(), io.to_string()),
        other => other,
    })?;
    run_config(&config, out)
}

pub fn run_config(config: &ExperimentConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    let started = chrono::Utc::now();
    let threads = config.threads()?.unwrap_or_else(rayon::current_num_threads);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    let hash = config.hash();
    let (table, passed, failed, success) = pool.install(|| execute(config, &hash))?;

    let dir = out.map_or_else(|| PathBuf::from(&config.output.dir), Path::to_path_buf);
    std::fs::create_dir_all(&dir)?;
    let stem = config.stem();
    let results_csv = dir.join(format!("{stem}.csv"));
    let results_json = dir.join(format!("{stem}.json"));
    let manifest = dir.join("manifest.json");
    table.write_csv(&results_csv)?;
    table.write_json(&results_json)?;
    RunManifest {
        config_hash: hash,
        experiment: config.experiment.as_str().into(),
        seed: config.estimator.seed,
        threads,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        version: env!("CARGO_PKG_VERSION").into(),
        summary: output::CaseSummary {
            cases: passed + failed,
            passed,
            failed,
        },
        status: if success { "ok" } else { "failed" }.into(),
        results_csv: results_csv.file_name().unwrap().to_string_lossy().into_owned(),
        results_json: results_json.file_name().unwrap().to_string_lossy().into_owned(),
    }
    .write(&manifest)?;
    Ok(RunOutcome {
        table,
        success,
        passed,
        failed,
        results_csv,
        results_json,
        manifest,
    })
}

type Executed = (Table, usize, usize, bool);

fn execute(config: &ExperimentConfig, hash: &str) -> Result<Executed> {
    match config.experiment {
        ExperimentKind::FitCovariance => run_fit_covariance(config, hash),
        ExperimentKind::FitModel => run_fit_model(config, hash),
        ExperimentKind::Estimate => run_estimate(config, hash),
        _ => run_verification(config, hash),
    }
}

const VERIFY_COLUMNS: &[&str] = &[
    "case",
    "experiment",
    "series",
    "pair",
    "generator",
    "direction",
    "point",
    "fd_step",
    "method",
    "n",
    "seed",
    "lhs",
    "rhs",
    "residual",
    "tolerance",
    "passed",
    "lhs_std_error",
    "rhs_std_error",
    "truncation",
    "alt_rhs",
    "alt_residual",
    "measured_constant",
    "error",
];

enum Job {
    Heat {
        pair: usize,
        point: DVector<f64>,
    },
    Case(VerificationCase),
}

struct Labelled {
    series: String,
    pair: String,
    generator: String,
    direction: usize,
    point: String,
    job: Job,
}

fn format_point(y: &DVector<f64>) -> String {
    y.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(" ")
}

fn run_verification(config: &ExperimentConfig, hash: &str) -> Result<Executed> {
    let pairs = config.pairs()?;
    let steps = config.steps()?;
    let estimator = config.estimator()?;
    let generators = match config.experiment {
        ExperimentKind::VerifyTheorem1 => config.generators()?,
        _ => vec![FGenerator::kl()],
    };

    let mut jobs = Vec::new();
    for (pi, pair) in pairs.iter().enumerate() {
        for (di, v) in pair.directions.iter().enumerate() {
            match config.experiment {
                ExperimentKind::VerifyHeat => {
                    let points = match config.points(pair.channel.output_dim())? {
                        Some(p) => p,
                        None => vec![pair.channel.pushforward(&pair.p).map_err(|e| {
                            Error::config(format!("pairs[{pi}]"), format!("{e} ({})", e.kind()))
                        })?.mean()],
                    };
                    for (k, y) in points.into_iter().enumerate() {
                        for &h in &steps {
                            jobs.push((
                                h,
                                v.clone(),
                                Labelled {
                                    series: format!("{}/d{di}/y{k}", pair.name),
                                    pair: pair.name.clone(),
                                    generator: String::new(),
                                    direction: di,
                                    point: format_point(&y),
                                    job: Job::Heat { pair: pi, point: y.clone() },
                                },
                            ));
                        }
                    }
                }
                _ => {
                    for g in &generators {
                        for &h in &steps {
                            let case = VerificationCase {
                                source_p: pair.p.clone(),
                                source_q: pair.q.clone(),
                                channel: pair.channel.clone(),
                                generator: *g,
                                direction: v.clone(),
                                fd_step: h,
                                richardson: config.fd.richardson,
                                estimator,
                            };
                            let gname = match config.experiment {
                                ExperimentKind::VerifyDebruijn => String::new(),
                                _ => g.name(),
                            };
                            jobs.push((
                                h,
                                v.clone(),
                                Labelled {
                                    series: format!("{}/{gname}/d{di}", pair.name),
                                    pair: pair.name.clone(),
                                    generator: gname,
                                    direction: di,
                                    point: String::new(),
                                    job: Job::Case(case),
                                },
                            ));
                        }
                    }
                }
            }
        }
    }

    let kind = config.experiment;
    let records: Vec<Result<VerificationRecord>> = jobs
        .par_iter()
        .map(|(h, v, l)| match (&l.job, kind) {
            (Job::Heat { pair, point }, _) => {
                let pr = &pairs[*pair];
                verify_heat_equation(&pr.p, &pr.channel, point, v, *h)
            }
            (Job::Case(c), ExperimentKind::VerifyKl) => verify_kl_corollary(c),
            (Job::Case(c), ExperimentKind::VerifyDebruijn) => {
                verify_debruijn(&c.source_p, &c.channel, &c.direction, c.fd_step, &c.estimator)
            }
            (Job::Case(c), _) => verify_theorem1(c),
        })
        .collect();

    let mut table = Table::new(hash, VERIFY_COLUMNS);
    let (mut passed, mut failed) = (0, 0);
    for (i, ((h, _, l), rec)) in jobs.iter().zip(records).enumerate() {
        let head: Vec<Cell> = vec![
            i.into(),
            kind.as_str().into(),
            l.series.clone().into(),
            l.pair.clone().into(),
            l.generator.clone().into(),
            l.direction.into(),
            l.point.clone().into(),
            (*h).into(),
        ];
        let mut row = head;
        match rec {
            Ok(r) => {
                if r.passed {
                    passed += 1;
                } else {
                    failed += 1;
                }
                let d = &r.diagnostics;
                row.extend([
                    d.method.as_str().into(),
                    d.n.into(),
                    d.seed.into(),
                    r.lhs.into(),
                    r.rhs.into(),
                    r.residual.into(),
                    r.tolerance.into(),
                    r.passed.into(),
                    d.lhs_std_error.into(),
                    d.rhs_std_error.into(),
                    d.truncation_estimate.into(),
                    d.alternative_rhs.into(),
                    d.alternative_residual.into(),
                    d.measured_constant.into(),
                    Cell::Empty,
                ]);
            }
            Err(e) => {
                failed += 1;
                row.extend([
                    estimator.method.as_str().into(),
                    estimator.n.into(),
                    estimator.seed.into(),
                ]);
                row.extend((0..4).map(|_| Cell::Empty));
                row.push(false.into());
                row.extend((0..6).map(|_| Cell::Empty));
                row.push(format!("{} ({})", e, e.kind()).into());
            }
        }
        table.push(row);
    }
    Ok((table, passed, failed, failed == 0))
}

fn matrix_columns(prefix: &str, d: usize) -> Vec<String> {
    let mut cols = Vec::new();
    for i in 0..d {
        for j in 0..d {
            cols.push(format!("{prefix}_{i}_{j}"));
        }
    }
    cols
}

fn run_fit_covariance(config: &ExperimentConfig, hash: &str) -> Result<Executed> {
    let pair = config.pairs()?.swap_remove(0);
    let opts = config.descent_options()?;
    let traj = fit_covariance(&pair.p, &pair.q, &pair.channel, &opts)?;
    let d = pair.channel.output_dim();
    let mut cols: Vec<String> = ["iter", "objective", "std_error", "grad_norm", "consistency_passed"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(matrix_columns("sigma", d));
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(hash, &refs);
    let mut consistency_failed = 0;
    for (k, it) in traj.iterates.iter().enumerate() {
        let checks: Vec<bool> = traj
            .consistency
            .iter()
            .filter(|(i, _)| *i == k)
            .map(|(_, r)| r.passed)
            .collect();
        let check = if checks.is_empty() {
            Cell::Empty
        } else {
            let ok = checks.iter().all(|&b| b);
            if !ok {
                consistency_failed += 1;
            }
            ok.into()
        };
        let mut row: Vec<Cell> = vec![
            k.into(),
            it.objective.value.into(),
            it.objective.std_error.into(),
            it.grad_norm.into(),
            check,
        ];
        row.extend(it.sigma.as_matrix().transpose().iter().map(|&x| Cell::Num(x)));
        table.push(row);
    }
    let first = &traj.iterates[0].objective;
    let last = &traj.iterates.last().unwrap().objective;
    let success = descended(first.value, last.value, first.std_error.hypot(last.std_error))
        && consistency_failed == 0;
    Ok((table, success as usize, (!success) as usize, success))
}

fn descended(first: f64, last: f64, se: f64) -> bool {
    last <= first + 3.0 * se
}

fn run_fit_model(config: &ExperimentConfig, hash: &str) -> Result<Executed> {
    let pair = config.pairs()?.swap_remove(0);
    let opts = config.descent_options()?;
    let f = config.generators()?[0];
    let d = pair.p.dim();
    let init = config.init(d)?;
    let traj = fit_model_fsm(&pair.p, &init, &f, &opts)?;
    let mut cols: Vec<String> = ["iter", "objective", "std_error", "grad_norm"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend((0..d).map(|i| format!("mu_{i}")));
    cols.extend(matrix_columns("cov", d));
    let refs: Vec<&str> = cols.iter().map(String::as_str).collect();
    let mut table = Table::new(hash, &refs);
    for (k, it) in traj.iterates.iter().enumerate() {
        let mut row: Vec<Cell> = vec![
            k.into(),
            it.objective.value.into(),
            it.objective.std_error.into(),
            it.grad_norm.into(),
        ];
        row.extend(it.mean.iter().map(|&x| Cell::Num(x)));
        row.extend(it.covariance.as_matrix().transpose().iter().map(|&x| Cell::Num(x)));
        table.push(row);
    }
    let first = &traj.iterates[0].objective;
    let last = &traj.last().objective;
    let success = descended(first.value, last.value, first.std_error.hypot(last.std_error));
    Ok((table, success as usize, (!success) as usize, success))
}

fn run_estimate(config: &ExperimentConfig, hash: &str) -> Result<Executed> {
    let pairs = config.pairs()?;
    let generators = config.generators()?;
    let cfg = config.estimator()?;
    let mut table = Table::new(
        hash,
        &[
            "pair",
            "generator",
            "method",
            "divergence",
            "divergence_std_error",
            "fisher_trace",
            "fisher_trace_std_error",
        ],
    );
    for pair in &pairs {
        let p = pair.channel.pushforward(&pair.p)?;
        let q = pair.channel.pushforward(&pair.q)?;
        for g in &generators {
            let dv = divergence(&p, &q, g, &cfg)?;
            let fi = generalized_fisher(&p, &q, g, &cfg)?;
            let se: f64 = (0..fi.dim()).map(|i| fi.std_error[(i, i)]).sum();
            table.push(vec![
                pair.name.clone().into(),
                g.name().into(),
                cfg.method.as_str().into(),
                dv.value.into(),
                dv.std_error.into(),
                fi.mean.trace().into(),
                se.into(),
            ]);
        }
    }
    let n = table.len();
    Ok((table, n, 0, true))
}
