//! The `run` subcommand: one learner per (sweep value, trial), scored on a held-out sample.

use std::path::{Path, PathBuf};
use std::time::Instant;

use oraclepriv::audit::ExcessRiskEvaluator;
use oraclepriv::dists::{draw_private, draw_public};
use oraclepriv::learners::{ftpl_learn, ftrl_learn, rrspm_learn, Hyperparams, LearnerOutput};
use oraclepriv::{anchor_augment, seed, LabeledDataset, PublicSample};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Algorithm, ExperimentConfig};
use crate::error::{CliError, CliResult};
use crate::output::{write_csv, write_json};

/// One line of results.csv; field order is the header order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub trial: usize,
    pub algorithm: &'static str,
    pub n: usize,
    pub m: usize,
    pub eta: f64,
    pub gamma: f64,
    #[serde(rename = "J")]
    pub j: usize,
    pub epsilon: f64,
    pub delta: f64,
    pub sigma: f64,
    pub excess_risk: f64,
    pub fbar_risk: f64,
    pub oracle_calls: u64,
    /// Wall-clock time, recorded only on request so that results stay byte-stable.
    pub runtime_ms: Option<u64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub workers: usize,
    pub timing: bool,
}

/// Public sample of total size about `m`, a fraction of it anchors.
pub fn public_sample(cfg: &ExperimentConfig, m: usize, stream: u64) -> oraclepriv::Result<PublicSample> {
    let real = ((m as f64) * (1.0 - cfg.anchor_fraction) + 1e-9).floor().max(1.0) as usize;
    let public = draw_public(&cfg.base, real, &mut seed::stream(stream))?;
    if cfg.anchor_fraction > 0.0 {
        anchor_augment(&public, cfg.anchor_fraction)
    } else {
        Ok(public)
    }
}

pub fn private_sample(cfg: &ExperimentConfig, n: usize, stream: u64) -> oraclepriv::Result<LabeledDataset> {
    draw_private(&cfg.target()?, &cfg.labels, n, &mut seed::stream(stream))
}

/// Run the configured learner once.
pub fn learn(
    cfg: &ExperimentConfig,
    hp: &Hyperparams,
    data: &LabeledDataset,
    public: &PublicSample,
    learner_seed: u64,
) -> oraclepriv::Result<LearnerOutput> {
    let opts = cfg.solver_options();
    match cfg.algorithm {
        Algorithm::Ftpl => ftpl_learn(data, public, &cfg.class, cfg.loss, hp, cfg.algorithm.noise_spec(), learner_seed, &opts),
        Algorithm::FtrlGaussian | Algorithm::FtrlLaplace => {
            ftrl_learn(data, public, &cfg.class, cfg.loss, hp, cfg.algorithm.noise_spec(), learner_seed, &opts)
        }
        Algorithm::RrspmLaplace | Algorithm::RrspmGaussian => {
            rrspm_learn(data, public, &cfg.class, &hp.budget, cfg.rrspm_noise(), learner_seed)
        }
    }
}

fn one_trial(
    cfg: &ExperimentConfig,
    hp: &Hyperparams,
    eval: &ExcessRiskEvaluator,
    master: u64,
    sweep: usize,
    trial: usize,
    timing: bool,
) -> CliResult<ResultRow> {
    let start = Instant::now();
    let (s, t) = (sweep as u64, trial as u64);
    let public = public_sample(cfg, hp.m, seed::stream_id(master, s, t, "public"))?;
    let data = private_sample(cfg, hp.n, seed::stream_id(master, s, t, "private"))?;
    let learner_seed = seed::stream_id(master, s, t, "learner");
    let out = learn(cfg, hp, &data, &public, learner_seed)?;
    let best = eval.risk(&eval.f_best)?;
    let excess_risk = eval.risk(&out.fhat)? - best;
    let fbar_risk = eval.risk(&out.fbar)? - best;
    Ok(ResultRow {
        trial,
        algorithm: cfg.algorithm.name(),
        n: hp.n,
        m: public.len(),
        eta: hp.eta,
        gamma: hp.gamma,
        j: hp.j,
        epsilon: hp.budget.epsilon,
        delta: hp.budget.delta,
        sigma: hp.sigma,
        excess_risk,
        fbar_risk,
        oracle_calls: out.oracle_calls,
        runtime_ms: timing.then(|| start.elapsed().as_millis() as u64),
        seed: learner_seed,
    })
}

/// The rayon pool used for trials; its size never changes any result.
pub fn pool(workers: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("--workers: {e}")))
}

/// All rows, ordered by (sweep value, trial).
pub fn run_rows(cfg: &ExperimentConfig, master: u64, opts: &RunOptions) -> CliResult<Vec<ResultRow>> {
    let eval = ExcessRiskEvaluator::new(
        &cfg.class,
        &cfg.target()?,
        &cfg.labels,
        cfg.loss,
        cfg.test_n,
        seed::stream_id(master, u64::MAX, 0, "evaluation"),
    )?;
    let hps: Vec<Hyperparams> = (0..cfg.sweep_len()).map(|i| cfg.resolve(i)).collect::<CliResult<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..hps.len())
        .flat_map(|s| (0..cfg.trials).map(move |t| (s, t)))
        .collect();
    pool(opts.workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(s, t)| one_trial(cfg, &hps[s], &eval, master, s, t, opts.timing))
            .collect()
    })
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    master_seed: u64,
    algorithm: &'a str,
    rows: usize,
    workers: usize,
    version: &'a str,
}

/// Execute a config and write results.csv, config.json and manifest.json.
pub fn run(cfg: &ExperimentConfig, master: u64, opts: &RunOptions) -> CliResult<PathBuf> {
    let rows = run_rows(cfg, master, opts)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    let path = dir.join("results.csv");
    write_csv(&path, &rows)?;
    write_json(&dir.join("config.json"), cfg)?;
    write_manifest(dir, "run", master, cfg.algorithm.name(), rows.len(), opts.workers)?;
    Ok(path)
}

pub(crate) fn write_manifest(dir: &Path, command: &str, master: u64, algorithm: &str, rows: usize, workers: usize) -> CliResult<()> {
    write_json(
        &dir.join("manifest.json"),
        &Manifest {
            schema_version: crate::config::SCHEMA_VERSION,
            command,
            master_seed: master,
            algorithm,
            rows,
            workers,
            version: env!("CARGO_PKG_VERSION"),
        },
    )
}
