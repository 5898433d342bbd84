//! Majority rule: the median-of-ratios structural matrix, and the
//! voting test of whether a majority of screened instruments is
//! actually valid.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::first_stage::FirstStageFit;
use crate::kernel;
use crate::sir::SirFit;
use crate::stats::median_in_place;

/// Multiplier inside the voting threshold, paired with the
/// log max{p_z, n} deviation scale.
const VOTE_CONSTANT: f64 = 2.01;
const P_HAT_CLAMP: (f64, f64) = (0.01, 0.99);

#[derive(Debug, Clone)]
pub struct StructuralFit {
    /// Median-of-ratios coefficients, length M.
    pub b_hat: DVector<f64>,
    /// Full structural matrix, (p+1) x M: first row `b_hat`, remaining
    /// rows the direct-effect residual `Theta_hat - gamma_hat b_hat'`.
    pub b_matrix: DMatrix<f64>,
    /// Ratio table, |S_hat| x M, rows in `s_hat` order.
    pub ratios: DMatrix<f64>,
    pub s_hat: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PHatSource {
    Logistic,
    Kernel,
}

#[derive(Debug, Clone)]
pub struct MajorityTestResult {
    /// Votes received by each candidate in `S_hat` (0-based keys).
    pub votes: BTreeMap<usize, usize>,
    /// Pairwise thresholds keyed (voter j, candidate k), 0-based.
    pub thresholds: BTreeMap<(usize, usize), f64>,
    pub passed: bool,
    pub p_hat_source: PHatSource,
    /// True when the weighted Gram matrix needed a ridge bump.
    pub ridge_stabilized: bool,
}

pub fn fit_structural(sir: &SirFit, fs: &FirstStageFit) -> Result<StructuralFit> {
    let s_hat = fs.relevant.clone();
    if s_hat.is_empty() {
        return Err(Error::NoRelevantInstruments);
    }
    let p = fs.gamma_hat.len();
    let m = sir.m_hat;
    let mut ratios = DMatrix::zeros(s_hat.len(), m);
    for (r, &j) in s_hat.iter().enumerate() {
        for col in 0..m {
            ratios[(r, col)] = sir.theta_hat[(j, col)] / fs.gamma_hat[j];
        }
    }
    let mut b_hat = DVector::zeros(m);
    for col in 0..m {
        let mut column: Vec<f64> = (0..s_hat.len()).map(|r| ratios[(r, col)]).collect();
        b_hat[col] = median_in_place(&mut column);
    }
    let mut b_matrix = DMatrix::zeros(p + 1, m);
    for col in 0..m {
        b_matrix[(0, col)] = b_hat[col];
        for j in 0..p {
            b_matrix[(j + 1, col)] = sir.theta_hat[(j, col)] - b_hat[col] * fs.gamma_hat[j];
        }
    }
    Ok(StructuralFit {
        b_hat,
        b_matrix,
        ratios,
        s_hat,
    })
}

/// Newton / IRLS logistic fit of y on [1, X]. Returns the coefficient
/// vector (intercept first) and fitted probabilities. Robust rather
/// than fancy: bounded iterations, weight floor, stop on a failed
/// Newton solve (separation).
pub(crate) fn logistic_irls(x: &DMatrix<f64>, y: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let n = x.nrows();
    let k = x.ncols() + 1;
    let design = {
        let mut d = DMatrix::zeros(n, k);
        for i in 0..n {
            d[(i, 0)] = 1.0;
            for j in 0..x.ncols() {
                d[(i, j + 1)] = x[(i, j)];
            }
        }
        d
    };
    let mut beta = DVector::zeros(k);
    for _ in 0..60 {
        let eta = &design * &beta;
        let prob = eta.map(|e| 1.0 / (1.0 + (-e).exp()));
        let weight = prob.map(|p: f64| (p * (1.0 - p)).max(1e-10));
        let grad = design.transpose() * (y - &prob);
        let mut hess = DMatrix::zeros(k, k);
        for i in 0..n {
            let row = design.row(i);
            for a in 0..k {
                for b in 0..k {
                    hess[(a, b)] += row[a] * row[b] * weight[i];
                }
            }
        }
        let step = match hess.cholesky() {
            Some(ch) => ch.solve(&grad),
            None => break,
        };
        beta += &step;
        if step.amax() < 1e-10 {
            break;
        }
    }
    let prob = (&design * &beta).map(|e| 1.0 / (1.0 + (-e).exp()));
    (beta, prob)
}

fn clamp_probs(p: &DVector<f64>) -> DVector<f64> {
    p.map(|x| x.clamp(P_HAT_CLAMP.0, P_HAT_CLAMP.1))
}

/// Vote table for the candidate set given exposure coefficients, the
/// reduced-form outcome coefficients, and the inverse weighted Gram.
#[allow(clippy::type_complexity)]
fn vote_table(
    gamma: &DVector<f64>,
    reduced: &DVector<f64>,
    s_hat: &[usize],
    u: &DMatrix<f64>,
    n: usize,
    p_z: usize,
) -> (BTreeMap<usize, usize>, BTreeMap<(usize, usize), f64>, bool) {
    let log_scale = (p_z.max(n) as f64).ln();
    let mut votes = BTreeMap::new();
    let mut thresholds = BTreeMap::new();
    for &k in s_hat {
        let mut count = 0usize;
        for &j in s_hat {
            let ratio = gamma[k] / gamma[j];
            let dev = (reduced[k] - (reduced[j] / gamma[j]) * gamma[k]).abs();
            // q' U q with q = e_k - ratio e_j, expanded directly.
            let quad = u[(k, k)] - 2.0 * ratio * u[(k, j)] + ratio * ratio * u[(j, j)];
            let eps = (VOTE_CONSTANT * log_scale).sqrt() * (quad.max(0.0) / n as f64).sqrt();
            thresholds.insert((j, k), eps);
            if dev <= eps {
                count += 1;
            }
        }
        votes.insert(k, count);
    }
    let half = s_hat.len() as f64 / 2.0;
    let winners = s_hat.iter().filter(|k| votes[k] as f64 > half).count() as f64;
    (votes, thresholds, winners > half)
}

/// Voting-based check of the majority-validity assumption for binary
/// outcomes. Deviations are measured between reduced-form outcome
/// coefficients scaled through each candidate ratio; thresholds come
/// from the corresponding contrast variance of the logistic
/// information matrix.
pub fn majority_vote_test(
    sir: &SirFit,
    fs: &FirstStageFit,
    data: &Dataset,
    p_hat_source: PHatSource,
) -> Result<MajorityTestResult> {
    if data.outcome_kind() != OutcomeKind::Binary {
        return Err(Error::InvalidConfig(
            "majority test requires a binary outcome".into(),
        ));
    }
    if fs.relevant.is_empty() {
        return Err(Error::NoRelevantInstruments);
    }
    let n = data.n();
    let p = data.p();

    let (coef, fitted) = logistic_irls(data.w(), data.y());
    let reduced = DVector::from_fn(p, |j, _| coef[j + 1]);

    let p_hat = match p_hat_source {
        PHatSource::Logistic => clamp_probs(&fitted),
        PHatSource::Kernel => {
            let mut feats = DMatrix::zeros(n, sir.m_hat + 1);
            let proj = data.w() * &sir.theta_hat;
            for i in 0..n {
                for l in 0..sir.m_hat {
                    feats[(i, l)] = proj[(i, l)];
                }
                feats[(i, sir.m_hat)] = fs.v_hat[i];
            }
            let config =
                kernel::KernelConfig::resolve(&kernel::BandwidthRule::RuleOfThumb, &feats)?;
            let g = kernel::g_hat_in_sample(&feats, data.y(), &config);
            clamp_probs(&DVector::from_vec(g))
        }
    };

    let mut gram = DMatrix::zeros(p, p);
    for i in 0..n {
        let weight = p_hat[i] * (1.0 - p_hat[i]);
        for a in 0..p {
            for b in 0..p {
                gram[(a, b)] += data.w()[(i, a)] * data.w()[(i, b)] * weight;
            }
        }
    }
    gram /= n as f64;
    let mut ridge_stabilized = false;
    let u = match gram.clone().cholesky() {
        Some(ch) => ch.inverse(),
        None => {
            ridge_stabilized = true;
            let bump = 1e-8 * gram.trace() / p as f64;
            for j in 0..p {
                gram[(j, j)] += bump;
            }
            gram.cholesky()
                .ok_or(Error::RankDeficientDesign(f64::INFINITY))?
                .inverse()
        }
    };

    let (votes, thresholds, passed) =
        vote_table(&fs.gamma_hat, &reduced, &fs.relevant, &u, n, data.p_z());
    Ok(MajorityTestResult {
        votes,
        thresholds,
        passed,
        p_hat_source,
        ridge_stabilized,
    })
}
