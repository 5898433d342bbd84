//! End-to-end estimation: screening, direction recovery, the median
//! rule, kernel contrast, bootstrap interval, and (for binary
//! outcomes) the voting test.

use rand::Rng;

use crate::data::{Dataset, EvalPoint, OutcomeKind};
use crate::error::{Error, Result};
use crate::first_stage::{fit_first_stage, FirstStageFit, DEFAULT_SELECTION_CONSTANT};
use crate::kernel::{self, BandwidthRule, CateResult, KernelConfig};
use crate::median::{
    fit_structural, majority_vote_test, MajorityTestResult, PHatSource, StructuralFit,
};
use crate::rng::{stream, Role, BOOT_BASE, STREAMS_PER_REP};
use crate::sir::{fit_sir, SirFit, SirOptions};
use crate::stats::normal_quantile;

pub const DEFAULT_N_BOOT: usize = 50;
pub const DEFAULT_ALPHA: f64 = 0.05;
/// Resampling attempts allowed per requested bootstrap draw.
const BOOT_ATTEMPT_FACTOR: usize = 5;

#[derive(Debug, Clone)]
pub struct PipelineOptions {
    pub selection_constant: f64,
    pub sir: SirOptions,
    pub bandwidth: BandwidthRule,
    pub p_hat_source: PHatSource,
    /// Run the voting test alongside estimation (binary outcomes).
    pub majority_test: bool,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            selection_constant: DEFAULT_SELECTION_CONSTANT,
            sir: SirOptions::default(),
            bandwidth: BandwidthRule::RuleOfThumb,
            p_hat_source: PHatSource::Logistic,
            majority_test: true,
        }
    }
}

/// The fitted stages, before any evaluation-point work.
#[derive(Debug, Clone)]
pub struct SpotIvFit {
    pub first_stage: FirstStageFit,
    pub sir: SirFit,
    pub structural: StructuralFit,
    pub kernel: KernelConfig,
}

pub fn fit_pipeline(data: &Dataset, opts: &PipelineOptions) -> Result<SpotIvFit> {
    let first_stage = fit_first_stage(data, opts.selection_constant)?;
    let sir = fit_sir(data, &first_stage, &opts.sir)?;
    let structural = fit_structural(&sir, &first_stage)?;
    let indices = kernel::data_indices(&structural, &first_stage, data);
    let kernel = KernelConfig::resolve(&opts.bandwidth, &indices)?;
    Ok(SpotIvFit {
        first_stage,
        sir,
        structural,
        kernel,
    })
}

#[derive(Debug, Clone)]
pub struct Estimate {
    pub fit: SpotIvFit,
    pub cate: CateResult,
    pub majority: Option<MajorityTestResult>,
    pub alpha: f64,
}

/// Full estimation at an evaluation point. `n_boot = 0` skips the
/// bootstrap (no interval); otherwise at least two draws are required.
pub fn estimate(
    data: &Dataset,
    point: &EvalPoint,
    opts: &PipelineOptions,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<Estimate> {
    estimate_rep(data, point, opts, n_boot, alpha, seed, 0)
}

/// Replication-aware variant: bootstrap streams are drawn from the
/// `(seed, rep)` block so simulation workers never share randomness.
pub fn estimate_rep(
    data: &Dataset,
    point: &EvalPoint,
    opts: &PipelineOptions,
    n_boot: usize,
    alpha: f64,
    seed: u64,
    rep: u64,
) -> Result<Estimate> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    if point.w.len() != data.p() {
        return Err(Error::DimensionMismatch(format!(
            "evaluation covariate has length {}, data has {} columns",
            point.w.len(),
            data.p()
        )));
    }
    let fit = fit_pipeline(data, opts)?;
    let mut cate =
        kernel::estimate_cate(point, &fit.structural, &fit.first_stage, data, &fit.kernel)?;
    if n_boot > 0 {
        let se = bootstrap_se(point, data, opts, n_boot, seed, rep)?;
        let z = normal_quantile(1.0 - alpha / 2.0);
        cate.boot_se = Some(se);
        cate.ci = Some((cate.cate - z * se, cate.cate + z * se));
        cate.n_boot = n_boot;
    }
    let majority = if opts.majority_test && data.outcome_kind() == OutcomeKind::Binary {
        Some(majority_vote_test(
            &fit.sir,
            &fit.first_stage,
            data,
            opts.p_hat_source,
        )?)
    } else {
        None
    };
    Ok(Estimate {
        fit,
        cate,
        majority,
        alpha,
    })
}

fn resample_cate(point: &EvalPoint, data: &Dataset, opts: &PipelineOptions) -> Result<f64> {
    let fit = fit_pipeline(data, opts)?;
    let (cate, _) =
        kernel::cate_value_only(point, &fit.structural, &fit.first_stage, data, &fit.kernel)?;
    if !cate.is_finite() {
        return Err(Error::NonFinite("bootstrap contrast"));
    }
    Ok(cate)
}

/// Nonparametric bootstrap standard deviation of the contrast. Each
/// resample reruns the whole pipeline, instrument screening and rank
/// selection included. Failed resamples are discarded and redrawn.
pub fn bootstrap_se(
    point: &EvalPoint,
    data: &Dataset,
    opts: &PipelineOptions,
    n_boot: usize,
    seed: u64,
    rep: u64,
) -> Result<f64> {
    if n_boot < 2 {
        return Err(Error::InvalidConfig(format!(
            "n_boot must be at least 2, got {n_boot}"
        )));
    }
    let max_attempts = BOOT_ATTEMPT_FACTOR * n_boot;
    if BOOT_BASE + max_attempts as u64 > STREAMS_PER_REP {
        return Err(Error::InvalidConfig(format!(
            "n_boot = {n_boot} exceeds the per-replication stream budget"
        )));
    }
    let n = data.n();
    let mut draws = Vec::with_capacity(n_boot);
    let mut attempts = 0usize;
    while draws.len() < n_boot && attempts < max_attempts {
        let mut rng = stream(seed, rep, Role::Bootstrap(attempts as u64));
        attempts += 1;
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let resampled = data.resample(&idx);
        if let Ok(value) = resample_cate(point, &resampled, opts) {
            draws.push(value);
        }
    }
    if draws.len() < n_boot {
        return Err(Error::BootstrapFailed {
            kept: draws.len(),
            want: n_boot,
            attempts,
        });
    }
    let mean = draws.iter().sum::<f64>() / n_boot as f64;
    let var = draws.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n_boot - 1) as f64;
    Ok(var.sqrt())
}

/// Bootstrap interval centered at the full-sample estimate.
pub fn bootstrap_ci(
    point: &EvalPoint,
    data: &Dataset,
    opts: &PipelineOptions,
    n_boot: usize,
    alpha: f64,
    seed: u64,
) -> Result<(f64, (f64, f64))> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    let center = resample_cate(point, data, opts)?;
    let se = bootstrap_se(point, data, opts, n_boot, seed, 0)?;
    let z = normal_quantile(1.0 - alpha / 2.0);
    Ok((se, (center - z * se, center + z * se)))
}
