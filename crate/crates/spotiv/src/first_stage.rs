//! Exposure regression and instrument-strength screening.
//!
//! `d` is regressed on the full `W = [Z X]` block by least squares,
//! with no intercept and no centering. The screened set keeps the
//! instrument coordinates whose coefficients clear a noise-scaled
//! threshold that shrinks at the sqrt(log n / n) rate.

use nalgebra::{DMatrix, DVector};

use crate::data::Dataset;
use crate::error::{Error, Result};

const COND_LIMIT: f64 = 1e12;

/// Default multiplier inside the screening threshold.
pub const DEFAULT_SELECTION_CONSTANT: f64 = 2.0;

#[derive(Debug, Clone)]
pub struct FirstStageFit {
    /// Least-squares coefficients of `d` on `W`, length `p`.
    pub gamma_hat: DVector<f64>,
    /// Residuals `d - W gamma_hat`, length `n`.
    pub v_hat: DVector<f64>,
    /// Residual scale `sqrt(mean of squared residuals)` (divide by n).
    pub sigma_v: f64,
    /// `W'W / n`.
    pub sigma: DMatrix<f64>,
    /// `n (W'W)^{-1}`.
    pub sigma_inv: DMatrix<f64>,
    /// Screened instrument coordinates, 0-based, ascending. Only the
    /// first `p_z` columns are eligible.
    pub relevant: Vec<usize>,
    /// Per-instrument screening thresholds, length `p_z`.
    pub thresholds: Vec<f64>,
}

pub fn fit_first_stage(data: &Dataset, selection_constant: f64) -> Result<FirstStageFit> {
    if !(selection_constant > 0.0) {
        return Err(Error::InvalidConfig(
            "selection constant must be positive".into(),
        ));
    }
    let n = data.n();
    let p = data.p();
    let w = data.w();
    let gram = w.transpose() * w;

    let eig = gram.clone().symmetric_eigen();
    let mut lambda_max = f64::NEG_INFINITY;
    let mut lambda_min = f64::INFINITY;
    for &l in eig.eigenvalues.iter() {
        lambda_max = lambda_max.max(l);
        lambda_min = lambda_min.min(l);
    }
    let cond = if lambda_min > 0.0 {
        lambda_max / lambda_min
    } else {
        f64::INFINITY
    };
    if !cond.is_finite() || cond >= COND_LIMIT {
        return Err(Error::RankDeficientDesign(cond));
    }

    // gram^{-1} from the same decomposition; reused for the screening
    // thresholds via sigma_inv = n * gram^{-1}.
    let q = &eig.eigenvectors;
    let inv_diag = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l));
    let gram_inv = q * inv_diag * q.transpose();

    let gamma_hat = &gram_inv * (w.transpose() * data.d());
    let v_hat = data.d() - w * &gamma_hat;
    let sigma_v = (v_hat.norm_squared() / n as f64).sqrt();
    let sigma = gram.map(|x| x / n as f64);
    let sigma_inv = gram_inv.map(|x| x * n as f64);

    let log_n_over_n = (n as f64).ln() / n as f64;
    let mut relevant = Vec::new();
    let mut thresholds = Vec::with_capacity(data.p_z());
    for j in 0..data.p_z() {
        let t = sigma_v * (selection_constant * sigma_inv[(j, j)] * log_n_over_n).sqrt();
        thresholds.push(t);
        if gamma_hat[j].abs() >= t {
            relevant.push(j);
        }
    }

    let _ = p;
    Ok(FirstStageFit {
        gamma_hat,
        v_hat,
        sigma_v,
        sigma,
        sigma_inv,
        relevant,
        thresholds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::OutcomeKind;
    use crate::dgp::{generate, Scenario, ScenarioSpec, ZDist};
    use crate::rng::{stream, Role};
    use nalgebra::{DMatrix, DVector};
    use rand_distr::{Distribution, StandardNormal};

    fn scenario(seed: u64, n: usize, c_gamma: f64) -> Dataset {
        let spec = ScenarioSpec {
            scenario: Scenario::BinaryI,
            n,
            c_gamma,
            z_dist: ZDist::Normal,
            seed,
        };
        generate(&spec).unwrap().0
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let data = scenario(1, 400, 0.8);
        let fit = fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT).unwrap();
        let tol = 1e-8 * data.d().norm();
        let resid_moment = data.w().transpose() * &fit.v_hat;
        assert!(
            resid_moment.amax() <= tol,
            "normal equations violated: {} > {}",
            resid_moment.amax(),
            tol
        );
    }

    #[test]
    fn strong_instruments_all_survive_screening() {
        let mut hits = 0;
        for seed in 0..100 {
            let data = scenario(seed, 1000, 0.8);
            let fit = fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT).unwrap();
            if fit.relevant == vec![0, 1, 2, 3, 4, 5, 6] {
                hits += 1;
            }
        }
        assert!(hits >= 99, "full recovery in only {}/100 seeds", hits);
    }

    #[test]
    fn irrelevant_instrument_screened_out() {
        // gamma_7 = 0 by construction; the screening rule should drop
        // coordinate 6 in at least 95 of 100 seeds at n = 2000.
        let n = 2000;
        let gamma = [0.4, 0.4, 0.4, -0.4, -0.4, -0.4, 0.0];
        let mut dropped = 0;
        for seed in 0..100 {
            let mut rng = stream(seed, 0, Role::Data);
            let mut z = DMatrix::zeros(n, 7);
            for i in 0..n {
                for j in 0..7 {
                    z[(i, j)] = StandardNormal.sample(&mut rng);
                }
            }
            let mut d = DVector::zeros(n);
            let mut y = DVector::zeros(n);
            for i in 0..n {
                let v: f64 = StandardNormal.sample(&mut rng);
                d[i] = (0..7).map(|j| z[(i, j)] * gamma[j]).sum::<f64>() + v;
                y[i] = (i % 2) as f64;
            }
            let data = Dataset::new(y, d, z, 7, OutcomeKind::Binary).unwrap();
            let fit = fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT).unwrap();
            if !fit.relevant.contains(&6) {
                dropped += 1;
            }
        }
        assert!(dropped >= 95, "coordinate dropped in only {}/100", dropped);
    }

    #[test]
    fn refitting_residuals_gives_zero() {
        let data = scenario(4, 300, 0.8);
        let fit = fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT).unwrap();
        let again = Dataset::new(
            data.y().clone(),
            fit.v_hat.clone(),
            data.w().clone(),
            data.p_z(),
            OutcomeKind::Binary,
        )
        .unwrap();
        let refit = fit_first_stage(&again, DEFAULT_SELECTION_CONSTANT).unwrap();
        assert!(
            refit.gamma_hat.amax() <= 1e-10 * data.d().norm(),
            "projection not idempotent: {}",
            refit.gamma_hat.amax()
        );
    }

    #[test]
    fn coefficients_scale_with_outcome() {
        let data = scenario(6, 250, 0.8);
        let base = fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT).unwrap();
        let scaled = Dataset::new(
            data.y().clone(),
            data.d().map(|x| -3.5 * x),
            data.w().clone(),
            data.p_z(),
            OutcomeKind::Binary,
        )
        .unwrap();
        let fit = fit_first_stage(&scaled, DEFAULT_SELECTION_CONSTANT).unwrap();
        for j in 0..data.p() {
            assert!(
                (fit.gamma_hat[j] + 3.5 * base.gamma_hat[j]).abs() < 1e-9,
                "coefficient {} not equivariant",
                j
            );
        }
        assert!((fit.sigma_v - 3.5 * base.sigma_v).abs() < 1e-9);
    }

    #[test]
    fn duplicated_column_is_rank_deficient() {
        let n = 60;
        let mut rng = stream(8, 0, Role::Data);
        let mut z = DMatrix::zeros(n, 7);
        for i in 0..n {
            for j in 0..6 {
                z[(i, j)] = StandardNormal.sample(&mut rng);
            }
            z[(i, 6)] = z[(i, 5)];
        }
        let d = DVector::from_fn(n, |i, _| z[(i, 0)] + 0.1 * i as f64);
        let y = DVector::from_fn(n, |i, _| (i % 2) as f64);
        let data = Dataset::new(y, d, z, 7, OutcomeKind::Binary).unwrap();
        match fit_first_stage(&data, DEFAULT_SELECTION_CONSTANT) {
            Err(Error::RankDeficientDesign(_)) => {}
            other => panic!("expected rank-deficient error, got {:?}", other.map(|_| ())),
        }
    }
}
