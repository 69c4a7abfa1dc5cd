//! The `audit` subcommand: per-instance stability, privacy and norm checks.

use std::fmt;
use std::str::FromStr;

use oraclepriv::audit::{
    continuous_privacy_audit, dual_norm_complexity, ftpl_tail_check, ftrl_stability_check, gaussian_complexity_estimate,
    norm_comparison_check, psi_coupling_test, rrspm_privacy_audit, rrspm_worst_instance, worst_case_neighbor, AuditReport, NeighborPair, RrspmMechanism,
    TailConfig, Verdict,
};
use oraclepriv::learners::{ftrl_fbar, Hyperparams, RrspmNoise};
use oraclepriv::mech::PrivacyBudget;
use oraclepriv::{empirical_distance, evaluate_on, seed, ClassKind, FeaturePoint, LabeledDataset, PublicSample, Task};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, GammaSpec, PairChoice};
use crate::error::{CliError, CliResult};
use crate::output::write_csv;
use crate::run::{learn, pool, private_sample, public_sample, write_manifest};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AuditKind {
    Stability,
    FtplTail,
    Psi,
    RrspmPrivacy,
    ContinuousPrivacy,
    Norms,
    Complexity,
}

pub const AUDIT_KINDS: [AuditKind; 7] = [
    AuditKind::Stability,
    AuditKind::FtplTail,
    AuditKind::Psi,
    AuditKind::RrspmPrivacy,
    AuditKind::ContinuousPrivacy,
    AuditKind::Norms,
    AuditKind::Complexity,
];

impl AuditKind {
    pub fn name(self) -> &'static str {
        match self {
            AuditKind::Stability => "stability",
            AuditKind::FtplTail => "ftpl-tail",
            AuditKind::Psi => "psi",
            AuditKind::RrspmPrivacy => "rrspm-privacy",
            AuditKind::ContinuousPrivacy => "continuous-privacy",
            AuditKind::Norms => "norms",
            AuditKind::Complexity => "complexity",
        }
    }

    fn default_trials(self) -> usize {
        match self {
            AuditKind::Stability => 1,
            AuditKind::FtplTail | AuditKind::Psi | AuditKind::ContinuousPrivacy => 10_000,
            AuditKind::RrspmPrivacy => 1_000_000,
            AuditKind::Norms => 200,
            AuditKind::Complexity => 1000,
        }
    }

    fn index(self) -> u64 {
        AUDIT_KINDS.iter().position(|k| *k == self).unwrap() as u64
    }
}

impl fmt::Display for AuditKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AuditKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AUDIT_KINDS.iter().copied().find(|k| k.name() == s).ok_or_else(|| {
            let names: Vec<_> = AUDIT_KINDS.iter().map(|k| k.name()).collect();
            format!("unknown audit kind `{s}`; expected one of {}", names.join(", "))
        })
    }
}

/// One line of audit.csv.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditRow {
    pub kind: &'static str,
    pub instance_id: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub bound: f64,
    pub trials: u64,
    pub verdict: String,
}

impl AuditRow {
    fn new(kind: AuditKind, instance_id: String, r: &AuditReport) -> Self {
        Self {
            kind: kind.name(),
            instance_id,
            estimate: r.estimate,
            ci_low: r.ci_low,
            ci_high: r.ci_high,
            bound: r.bound,
            trials: r.trials,
            verdict: r.verdict.to_string(),
        }
    }

    pub fn failed(&self) -> bool {
        self.verdict == Verdict::Fail.to_string()
    }
}

fn config_error(kind: AuditKind, reason: impl fmt::Display) -> CliError {
    CliError::Config(format!("audit kind `{kind}`: {reason}"))
}

/// The audited mechanism's hyperparameters and the budget it is audited against.
pub fn audit_hyperparams(cfg: &ExperimentConfig) -> CliResult<(Hyperparams, PrivacyBudget)> {
    let a = &cfg.audit;
    let nominal = cfg.resolve(0)?;
    let mut mech = cfg.clone();
    mech.sweep = None;
    let h = &mut mech.hyperparams;
    h.n = a.n.or(h.n).or(Some(nominal.n));
    h.m = a.m.or(h.m).or(Some(nominal.m));
    h.eta = a.eta.or(h.eta).or(Some(nominal.eta));
    h.j = h.j.or(Some(nominal.j));
    if h.theorem.is_some() && h.gamma.is_none() && !cfg.algorithm.is_rrspm() {
        h.gamma = Some(GammaSpec::Value(nominal.gamma));
    }
    let epsilon = a.epsilon.unwrap_or(nominal.budget.epsilon);
    let delta = a.delta.unwrap_or(nominal.budget.delta);
    h.epsilon = Some(a.calibration_epsilon.unwrap_or(epsilon));
    h.delta = Some(delta);
    h.theorem = None;
    let hp = mech.resolve(0)?;
    let budget = PrivacyBudget::new(epsilon, delta).map_err(|e| CliError::Config(format!("field `audit.epsilon`: {e}")))?;
    Ok((hp, budget))
}

/// Candidate replacements for worst-case pairs: a grid over the input domain, both labels.
fn binary_candidates(cfg: &ExperimentConfig) -> Vec<(FeaturePoint, f64)> {
    let dim = cfg.class.dim;
    let mut pts = Vec::new();
    match cfg.base {
        oraclepriv::dists::BaseDist::UniformBall { .. } => {
            let steps = [-0.8, -0.4, 0.0, 0.4, 0.8];
            let total = steps.len().pow(dim as u32);
            for code in 0..total {
                let mut c = Vec::with_capacity(dim);
                let mut k = code;
                for _ in 0..dim {
                    c.push(steps[k % steps.len()]);
                    k /= steps.len();
                }
                if c.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                    pts.push(FeaturePoint::new(c).expect("finite grid point"));
                }
            }
        }
        _ => pts.extend((0..=10).map(|i| FeaturePoint::scalar(i as f64 / 10.0))),
    }
    pts.into_iter().flat_map(|p| [(p.clone(), 0.0), (p, 1.0)]).collect()
}

/// Unit-norm inputs along the axes and diagonals, paired with labels -1 and 1.
fn convex_candidates(dim: usize) -> Vec<(FeaturePoint, f64)> {
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for i in 0..dim {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; dim];
            e[i] = s;
            dirs.push(e);
        }
    }
    if dim > 1 {
        let r = 1.0 / (dim as f64).sqrt();
        for s in [-1.0, 1.0] {
            dirs.push(vec![s * r; dim]);
        }
    }
    dirs.into_iter()
        .flat_map(|d| {
            let p = FeaturePoint::new(d).expect("finite direction");
            [(p.clone(), -1.0), (p, 1.0)]
        })
        .collect()
}

struct Instance {
    pair: NeighborPair,
    public: PublicSample,
    ytilde: Vec<bool>,
}

fn instance(cfg: &ExperimentConfig, kind: AuditKind, hp: &Hyperparams, master: u64, i: usize) -> CliResult<Instance> {
    let (s, t) = (1000 + kind.index(), i as u64);
    let public = public_sample(cfg, hp.m, seed::stream_id(master, s, t, "public"))?;
    let data = private_sample(cfg, hp.n, seed::stream_id(master, s, t, "private"))?;
    let mut rng = seed::stream(seed::stream_id(master, s, t, "ytilde"));
    let ytilde = (0..public.len()).map(|_| rng.random::<bool>()).collect();
    let pair = match (cfg.audit.pair, cfg.class.kind) {
        (PairChoice::Random, _) => {
            let fresh = private_sample(cfg, 1, seed::stream_id(master, s, t, "replacement"))?;
            let (x, y) = fresh.points()[0].clone();
            let index = (seed::stream_id(master, s, t, "index") % data.len() as u64) as usize;
            if data.points()[index] == (x.clone(), y) {
                NeighborPair::degenerate(data)
            } else {
                NeighborPair::swap(&data, index, x, y)?
            }
        }
        (PairChoice::WorstCase, ClassKind::LinearBall) => convex_worst_pair(cfg, hp, &data, &public)?,
        (PairChoice::WorstCase, _) => worst_case_neighbor(&data, &public, &cfg.class, &binary_candidates(cfg))?,
    };
    Ok(Instance { pair, public, ytilde })
}

/// Replacement of element 0 that moves the regularized minimizer the most.
fn convex_worst_pair(cfg: &ExperimentConfig, hp: &Hyperparams, data: &LabeledDataset, public: &PublicSample) -> CliResult<NeighborPair> {
    let opts = cfg.solver_options();
    let base = evaluate_on(&ftrl_fbar(data, public, &cfg.class, cfg.loss, hp.eta, &opts)?.0, public.points())?;
    let mut best: Option<(f64, NeighborPair)> = None;
    for (x, y) in convex_candidates(cfg.class.dim) {
        if data.points()[0] == (x.clone(), y) || !(data.task() == Task::Regression || y >= 0.0) {
            continue;
        }
        let pair = NeighborPair::swap(data, 0, x, y)?;
        let f = ftrl_fbar(&pair.dprime, public, &cfg.class, cfg.loss, hp.eta, &opts)?.0;
        let dist = empirical_distance(&base, &evaluate_on(&f, public.points())?)?;
        if best.as_ref().is_none_or(|(d, _)| dist > *d) {
            best = Some((dist, pair));
        }
    }
    best.map(|(_, p)| p)
        .ok_or_else(|| CliError::Config("no candidate replacement differs from the data".into()))
}

fn require(kind: AuditKind, ok: bool, reason: &str) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(config_error(kind, reason))
    }
}

fn audit_instance(cfg: &ExperimentConfig, kind: AuditKind, master: u64, i: usize) -> CliResult<Vec<AuditRow>> {
    let (hp, budget) = audit_hyperparams(cfg)?;
    let a = &cfg.audit;
    let trials = a.trials.unwrap_or(kind.default_trials());
    let opts = cfg.solver_options();
    let stream = seed::stream_id(master, 1000 + kind.index(), i as u64, "audit");
    let convex = cfg.class.kind == ClassKind::LinearBall;
    let id = i.to_string();
    let row = |r: &AuditReport| AuditRow::new(kind, id.clone(), r);
    match kind {
        AuditKind::Stability => {
            require(kind, convex, "needs a linear_ball class")?;
            let inst = instance(cfg, kind, &hp, master, i)?;
            let r = ftrl_stability_check(&inst.pair, &inst.public, &cfg.class, cfg.loss, hp.eta, &opts)?;
            Ok(vec![row(&r)])
        }
        AuditKind::FtplTail => {
            require(kind, convex, "needs a linear_ball class")?;
            let inst = instance(cfg, kind, &hp, master, i)?;
            let tail = TailConfig {
                trials,
                kappa_samples: a.kappa_samples,
                complexity_paths: a.complexity_paths,
            };
            let reports = ftpl_tail_check(&inst.pair, &inst.public, &cfg.class, cfg.loss, hp.eta, &a.rho_grid, &tail, stream, &opts)?;
            Ok(reports
                .iter()
                .zip(&a.rho_grid)
                .map(|(r, rho)| AuditRow::new(kind, format!("{i}/rho={rho}"), r))
                .collect())
        }
        AuditKind::Psi => {
            require(kind, !convex && cfg.labels.task() == Task::Classification, "needs a binary class")?;
            let inst = instance(cfg, kind, &hp, master, i)?;
            let r = psi_coupling_test(&inst.pair, &inst.public, &inst.ytilde, &cfg.class, budget.epsilon, trials, stream)?;
            Ok(vec![row(&r)])
        }
        AuditKind::RrspmPrivacy => {
            require(kind, !convex && cfg.labels.task() == Task::Classification, "needs a binary class")?;
            require(kind, cfg.anchor_fraction == 0.0, "needs an unanchored public sample")?;
            let mut inst = instance(cfg, kind, &hp, master, i)?;
            let noise = if cfg.algorithm.is_rrspm() { cfg.rrspm_noise() } else { RrspmNoise::Laplace };
            let mechanism = RrspmMechanism {
                noise,
                calibration: hp.budget,
            };
            if a.pair == PairChoice::WorstCase {
                let pilot_min = (a.min_count as f64 * a.pilot_trials as f64 / trials as f64).ceil().max(1.0) as u64;
                let (pair, ytilde) = rrspm_worst_instance(
                    &inst.pair.d,
                    &inst.public,
                    &cfg.class,
                    &binary_candidates(cfg),
                    &mechanism,
                    &budget,
                    a.pilot_trials,
                    pilot_min,
                    seed::child(stream, "pilot", 0),
                )?;
                inst.pair = pair;
                inst.ytilde = ytilde;
            }
            let (r, _) = rrspm_privacy_audit(&inst.pair, &inst.public, &inst.ytilde, &cfg.class, &mechanism, &budget, trials, a.min_count, stream)?;
            Ok(vec![row(&r)])
        }
        AuditKind::ContinuousPrivacy => {
            let inst = instance(cfg, kind, &hp, master, i)?;
            let learner = |d: &LabeledDataset, s: u64| -> oraclepriv::Result<Vec<f64>> {
                Ok(learn(cfg, &hp, d, &inst.public, s)?.fhat_public_values)
            };
            let r = continuous_privacy_audit(learner, &inst.pair, a.bins, trials, &budget, a.min_count, stream)?;
            Ok(vec![row(&r)])
        }
        AuditKind::Norms => {
            let r = norm_comparison_check(&cfg.class, &cfg.base, hp.m, trials, a.beta, stream, &opts)?;
            Ok(vec![row(&r)])
        }
        AuditKind::Complexity => {
            let public = public_sample(cfg, hp.m, seed::stream_id(master, 1000 + kind.index(), i as u64, "public"))?;
            let r = gaussian_complexity_estimate(&cfg.class, &public, trials, stream, &opts)?;
            let mut rows = vec![row(&r)];
            if convex {
                let d = dual_norm_complexity(&public, trials, stream)?;
                rows.push(AuditRow::new(kind, format!("{i}/dual_norm"), &d));
            }
            Ok(rows)
        }
    }
}

/// Rows for the requested kinds, in kind order then instance order.
pub fn audit_rows(cfg: &ExperimentConfig, kinds: &[AuditKind], master: u64, workers: usize) -> CliResult<Vec<AuditRow>> {
    let tasks: Vec<(AuditKind, usize)> = kinds
        .iter()
        .flat_map(|&k| (0..cfg.audit.instances).map(move |i| (k, i)))
        .collect();
    let per: Vec<Vec<AuditRow>> = pool(workers)?.install(|| {
        tasks
            .par_iter()
            .map(|&(k, i)| audit_instance(cfg, k, master, i))
            .collect::<CliResult<_>>()
    })?;
    Ok(per.into_iter().flatten().collect())
}

/// Write audit.csv and the manifest; returns the rows so the caller can apply `--strict`.
pub fn audit(cfg: &ExperimentConfig, kinds: &[AuditKind], master: u64, workers: usize) -> CliResult<Vec<AuditRow>> {
    let rows = audit_rows(cfg, kinds, master, workers)?;
    let dir = &cfg.output_dir;
    std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
    write_csv(&dir.join("audit.csv"), &rows)?;
    write_manifest(dir, "audit", master, cfg.algorithm.name(), rows.len(), workers)?;
    Ok(rows)
}
