//! Monte Carlo harness: replicate a scenario cell, estimate every
//! replication, and score against the generating truth.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::EvalPoint;
use crate::dgp::{cate_for_params, generate_rep, true_cate_oracle, Scenario, ScenarioSpec, ZDist};
use crate::error::{Error, Result};
use crate::pipeline::{estimate_rep, PipelineOptions, DEFAULT_ALPHA, DEFAULT_N_BOOT};
use crate::rng::{stream, Role};
use crate::stats::median_in_place;

pub const DEFAULT_REPLICATIONS: usize = 200;
pub const DEFAULT_ORACLE_DRAWS: usize = 1_000_000;

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub point: EvalPoint,
    pub replications: usize,
    pub n_boot: usize,
    pub alpha: f64,
    /// Monte Carlo draws behind each oracle truth.
    pub oracle_draws: usize,
    pub pipeline: PipelineOptions,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            point: EvalPoint::default_preset(),
            replications: DEFAULT_REPLICATIONS,
            n_boot: DEFAULT_N_BOOT,
            alpha: DEFAULT_ALPHA,
            oracle_draws: DEFAULT_ORACLE_DRAWS,
            pipeline: PipelineOptions::default(),
        }
    }
}

/// Scored summary of one scenario cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: Scenario,
    pub z_dist: ZDist,
    pub n: usize,
    pub c_gamma: f64,
    pub seed: u64,
    pub replications: usize,
    /// Replications whose estimation failed; these are excluded from
    /// the scores below. More than 5% of them fails the whole cell.
    pub failed: usize,
    /// Median absolute deviation from the oracle truth.
    pub mae: f64,
    pub coverage: Option<f64>,
    pub mean_boot_se: Option<f64>,
    pub majority_pass_rate: Option<f64>,
    pub mean_dropped: f64,
}

struct RepRecord {
    abs_err: f64,
    covered: Option<bool>,
    boot_se: Option<f64>,
    passed: Option<bool>,
    dropped: usize,
}

fn run_one(
    spec: &ScenarioSpec,
    opts: &SimOptions,
    rep: u64,
    shared_truth: Option<f64>,
) -> Result<RepRecord> {
    let (data, params) = generate_rep(spec, rep)?;
    let truth = match shared_truth {
        Some(t) => t,
        None => {
            let mut rng = stream(spec.seed, rep, Role::Oracle);
            cate_for_params(
                &params,
                spec.scenario,
                &opts.point,
                opts.oracle_draws,
                &mut rng,
            )
        }
    };
    let est = estimate_rep(
        &data,
        &opts.point,
        &opts.pipeline,
        opts.n_boot,
        opts.alpha,
        spec.seed,
        rep,
    )?;
    Ok(RepRecord {
        abs_err: (est.cate.cate - truth).abs(),
        covered: est.cate.ci.map(|(lo, hi)| lo <= truth && truth <= hi),
        boot_se: est.cate.boot_se,
        passed: est.majority.as_ref().map(|m| m.passed),
        dropped: est.cate.dropped_points,
    })
}

/// Runs one cell. Replications are distributed over the current rayon
/// pool; each derives its own generator streams from `(seed, rep)`, and
/// the records are reduced in replication order, so the summary is
/// byte-identical for any thread count.
pub fn simulate_cell(spec: &ScenarioSpec, opts: &SimOptions) -> Result<CellSummary> {
    spec.validate()?;
    if opts.replications == 0 {
        return Err(Error::InvalidConfig("replications must be positive".into()));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {}",
            opts.alpha
        )));
    }
    // Scenarios with fixed parameters share one truth; the parameters
    // of `ViolationB` are redrawn per replication, so each replication
    // scores against its own.
    let shared_truth = match spec.scenario {
        Scenario::ViolationB => None,
        _ => Some(true_cate_oracle(spec, &opts.point, opts.oracle_draws)?),
    };
    let records: Vec<Result<RepRecord>> = (0..opts.replications as u64)
        .into_par_iter()
        .map(|rep| run_one(spec, opts, rep, shared_truth))
        .collect();

    let mut abs_errs = Vec::new();
    let mut covered = Vec::new();
    let mut boot_ses = Vec::new();
    let mut votes = Vec::new();
    let mut dropped_sum = 0usize;
    let mut failed = 0usize;
    for record in &records {
        match record {
            Ok(r) => {
                abs_errs.push(r.abs_err);
                if let Some(c) = r.covered {
                    covered.push(c);
                }
                if let Some(s) = r.boot_se {
                    boot_ses.push(s);
                }
                if let Some(p) = r.passed {
                    votes.push(p);
                }
                dropped_sum += r.dropped;
            }
            Err(_) => failed += 1,
        }
    }
    if failed * 20 >= opts.replications {
        return Err(Error::TooManyFailures {
            failed,
            reps: opts.replications,
        });
    }
    let kept = abs_errs.len();
    let frac = |hits: &[bool]| hits.iter().filter(|&&b| b).count() as f64 / hits.len() as f64;
    Ok(CellSummary {
        scenario: spec.scenario,
        z_dist: spec.z_dist,
        n: spec.n,
        c_gamma: spec.c_gamma,
        seed: spec.seed,
        replications: opts.replications,
        failed,
        mae: median_in_place(&mut abs_errs),
        coverage: (!covered.is_empty()).then(|| frac(&covered)),
        mean_boot_se: (!boot_ses.is_empty())
            .then(|| boot_ses.iter().sum::<f64>() / boot_ses.len() as f64),
        majority_pass_rate: (!votes.is_empty()).then(|| frac(&votes)),
        mean_dropped: dropped_sum as f64 / kept as f64,
    })
}
