//! Sample containers shared by every estimation stage.
//!
//! A [`Dataset`] holds the observed triple `(y, d, W)` where the first
//! `p_z` columns of `W` are candidate instruments and the rest are
//! baseline covariates. Outcomes are tagged binary or continuous; the
//! two kinds share one container and one pipeline.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Binary,
    Continuous,
}

/// Observed sample. Immutable after construction; `new` enforces the
/// shape and finiteness invariants so later stages never re-validate.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: DVector<f64>,
    d: DVector<f64>,
    w: DMatrix<f64>,
    p_z: usize,
    outcome_kind: OutcomeKind,
}

impl Dataset {
    /// Validates and wraps a sample. No centering is applied and no
    /// intercept column is added; callers with non-centered data must
    /// center beforehand.
    pub fn new(
        y: DVector<f64>,
        d: DVector<f64>,
        w: DMatrix<f64>,
        p_z: usize,
        outcome_kind: OutcomeKind,
    ) -> Result<Self> {
        let n = w.nrows();
        let p = w.ncols();
        if y.len() != n || d.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "y has {} rows, d has {}, W has {}",
                y.len(),
                d.len(),
                n
            )));
        }
        if p_z > p {
            return Err(Error::DimensionMismatch(format!(
                "p_z = {} exceeds p = {}",
                p_z, p
            )));
        }
        if n < p + 2 {
            return Err(Error::TooFewRows { n, min: p + 2 });
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("y"));
        }
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("d"));
        }
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("W"));
        }
        if outcome_kind == OutcomeKind::Binary {
            for (i, &v) in y.iter().enumerate() {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::OutcomeNotBinary(v, i + 1));
                }
            }
            let ones = y.iter().filter(|&&v| v == 1.0).count();
            if ones == 0 || ones == n {
                return Err(Error::SingleClass(if ones == 0 { 0.0 } else { 1.0 }));
            }
        }
        Ok(Self {
            y,
            d,
            w,
            p_z,
            outcome_kind,
        })
    }

    pub fn n(&self) -> usize {
        self.w.nrows()
    }

    pub fn p(&self) -> usize {
        self.w.ncols()
    }

    pub fn p_z(&self) -> usize {
        self.p_z
    }

    pub fn p_x(&self) -> usize {
        self.w.ncols() - self.p_z
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn d(&self) -> &DVector<f64> {
        &self.d
    }

    pub fn w(&self) -> &DMatrix<f64> {
        &self.w
    }

    pub fn outcome_kind(&self) -> OutcomeKind {
        self.outcome_kind
    }

    /// Instrument block (first `p_z` columns of `W`).
    pub fn z_block(&self) -> DMatrix<f64> {
        self.w.columns(0, self.p_z).into_owned()
    }

    /// Baseline-covariate block (may be empty).
    pub fn x_block(&self) -> DMatrix<f64> {
        self.w.columns(self.p_z, self.p_x()).into_owned()
    }

    /// Row-resampled copy, used by the bootstrap. Indices may repeat.
    pub fn resample(&self, idx: &[usize]) -> Dataset {
        let n = idx.len();
        let y = DVector::from_fn(n, |i, _| self.y[idx[i]]);
        let d = DVector::from_fn(n, |i, _| self.d[idx[i]]);
        let w = DMatrix::from_fn(n, self.p(), |i, j| self.w[(idx[i], j)]);
        Dataset {
            y,
            d,
            w,
            p_z: self.p_z,
            outcome_kind: self.outcome_kind,
        }
    }
}

/// Ground-truth parameters behind a simulated dataset. Only produced by
/// the generator; estimation never sees these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralParams {
    pub beta: f64,
    pub kappa: Vec<f64>,
    pub eta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Coefficient of the first-stage residual inside the confounder.
    pub rho_v: f64,
}

impl StructuralParams {
    /// Indices (0-based) of instruments with no direct effect and no
    /// confounder loading.
    pub fn valid_set(&self) -> Vec<usize> {
        (0..self.gamma.len())
            .filter(|&j| self.kappa[j] == 0.0 && self.eta[j] == 0.0)
            .collect()
    }
}

/// Where to evaluate the contrast `phi(d, w) - phi(d', w)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalPoint {
    pub d: f64,
    pub d_prime: f64,
    pub w: Vec<f64>,
}

impl EvalPoint {
    pub fn new(d: f64, d_prime: f64, w: Vec<f64>) -> Result<Self> {
        if !d.is_finite() || !d_prime.is_finite() || w.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("evaluation point"));
        }
        Ok(Self { d, d_prime, w })
    }

    /// The default evaluation preset used throughout the simulation
    /// tables: `w = (0,...,0,0.1)` in seven dimensions, contrasting
    /// exposure levels -1 and 2.
    pub fn default_preset() -> Self {
        let mut w = vec![0.0; 7];
        w[6] = 0.1;
        Self {
            d: -1.0,
            d_prime: 2.0,
            w,
        }
    }

    pub fn swapped(&self) -> Self {
        Self {
            d: self.d_prime,
            d_prime: self.d,
            w: self.w.clone(),
        }
    }
}
