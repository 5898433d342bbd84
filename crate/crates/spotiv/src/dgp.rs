//! Synthetic data generation and the ground-truth contrast oracle.
//!
//! Four scenarios are built in: a mixed-logistic binary outcome, a
//! quadratic continuous outcome, and two ways of breaking the
//! majority-validity assumption. All four share the exposure model
//! `d = z'gamma + v` with seven candidate instruments and an unmeasured
//! confounder `u = rho_v * v + w'eta + xi` that is correlated with the
//! exposure by construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EvalPoint, OutcomeKind, StructuralParams};
use crate::error::{Error, Result};
use crate::rng::{stream, Role};

pub const NUM_IVS: usize = 7;
const BETA: f64 = 0.25;
const RHO_V: f64 = 0.25;
const UNIFORM_HALF_WIDTH: f64 = 1.73;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Mixed-logistic binary outcome; instruments 6 and 7 invalid.
    BinaryI,
    /// Quadratic continuous outcome; same parameters as `BinaryI`.
    ContinuousII,
    /// Binary outcome with six of seven instruments invalid.
    ViolationA,
    /// Binary outcome with random per-dataset invalidity on every
    /// instrument.
    ViolationB,
}

impl Scenario {
    pub fn outcome_kind(self) -> OutcomeKind {
        match self {
            Scenario::ContinuousII => OutcomeKind::Continuous,
            _ => OutcomeKind::Binary,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::BinaryI => "binary_i",
            Scenario::ContinuousII => "continuous_ii",
            Scenario::ViolationA => "violation_a",
            Scenario::ViolationB => "violation_b",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "binary_i" => Ok(Scenario::BinaryI),
            "continuous_ii" => Ok(Scenario::ContinuousII),
            "violation_a" => Ok(Scenario::ViolationA),
            "violation_b" => Ok(Scenario::ViolationB),
            other => Err(format!(
                "unknown scenario '{other}' (expected binary_i, continuous_ii, violation_a, or violation_b)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZDist {
    Normal,
    Uniform,
}

impl ZDist {
    pub fn as_str(self) -> &'static str {
        match self {
            ZDist::Normal => "normal",
            ZDist::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for ZDist {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(ZDist::Normal),
            "uniform" => Ok(ZDist::Uniform),
            other => Err(format!(
                "unknown z distribution '{other}' (expected normal or uniform)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub scenario: Scenario,
    pub n: usize,
    pub c_gamma: f64,
    pub z_dist: ZDist,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::InvalidConfig("n must be positive".into()));
        }
        if !(self.c_gamma > 0.0) {
            return Err(Error::InvalidConfig("c_gamma must be positive".into()));
        }
        Ok(())
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Draws the structural parameters for a spec. Deterministic given the
/// spec; `ViolationB` consumes draws from the data stream, so the
/// generator and the oracle see the same parameters.
pub fn params_for(spec: &ScenarioSpec, rng: &mut impl Rng) -> StructuralParams {
    let base: [f64; NUM_IVS] = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
    let gamma: Vec<f64> = base.iter().map(|g| g * spec.c_gamma).collect();
    let kappa: Vec<f64> = match spec.scenario {
        Scenario::BinaryI | Scenario::ContinuousII => {
            vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.4, 0.2]
        }
        Scenario::ViolationA => vec![0.4, 0.4, 0.4, 0.0, 0.4, 0.4, 0.4],
        Scenario::ViolationB => {
            let u = Uniform::new_inclusive(-1.0, 1.0).unwrap();
            gamma.iter().map(|g| g * u.sample(rng)).collect()
        }
    };
    StructuralParams {
        beta: BETA,
        eta: kappa.clone(),
        kappa,
        gamma,
        rho_v: RHO_V,
    }
}

/// Generates one dataset plus the parameters that produced it.
/// Pure in `(spec, seed)`: identical specs give bit-identical samples.
pub fn generate(spec: &ScenarioSpec) -> Result<(Dataset, StructuralParams)> {
    generate_rep(spec, 0)
}

/// Replication variant: each `rep` draws from a disjoint stream of the
/// same seed, so a Monte Carlo run is reproducible in any rep order.
pub fn generate_rep(spec: &ScenarioSpec, rep: u64) -> Result<(Dataset, StructuralParams)> {
    spec.validate()?;
    let mut rng = stream(spec.seed, rep, Role::Data);
    let params = params_for(spec, &mut rng);
    let n = spec.n;
    let p = NUM_IVS;

    let mut z = DMatrix::zeros(n, p);
    match spec.z_dist {
        ZDist::Normal => {
            for i in 0..n {
                for j in 0..p {
                    z[(i, j)] = StandardNormal.sample(&mut rng);
                }
            }
        }
        ZDist::Uniform => {
            let u = Uniform::new_inclusive(-UNIFORM_HALF_WIDTH, UNIFORM_HALF_WIDTH).unwrap();
            for i in 0..n {
                for j in 0..p {
                    z[(i, j)] = u.sample(&mut rng);
                }
            }
        }
    }

    let gamma = DVector::from_vec(params.gamma.clone());
    let kappa = DVector::from_vec(params.kappa.clone());
    let eta = DVector::from_vec(params.eta.clone());

    let mut d = DVector::zeros(n);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let v: f64 = StandardNormal.sample(&mut rng);
        let xi: f64 = StandardNormal.sample(&mut rng);
        let zi = z.row(i).transpose();
        let di = zi.dot(&gamma) + v;
        let u = params.rho_v * v + zi.dot(&eta) + xi;
        let index = di * params.beta + zi.dot(&kappa) + u;
        d[i] = di;
        y[i] = match spec.scenario {
            Scenario::ContinuousII => index + index * index / 3.0,
            _ => {
                let pr = sigmoid(index);
                if rng.random::<f64>() < pr {
                    1.0
                } else {
                    0.0
                }
            }
        };
    }

    let data = Dataset::new(y, d, z, p, spec.scenario.outcome_kind())?;
    Ok((data, params))
}

/// Monte Carlo contrast of the averaged structural function at `point`,
/// integrating over the residual confounding `(v, xi)` only. This is
/// the truth that simulation scoring compares against.
pub fn true_cate_oracle(spec: &ScenarioSpec, point: &EvalPoint, n_mc: usize) -> Result<f64> {
    spec.validate()?;
    if point.w.len() != NUM_IVS {
        return Err(Error::DimensionMismatch(format!(
            "evaluation covariate has length {}, scenario uses {}",
            point.w.len(),
            NUM_IVS
        )));
    }
    let mut data_rng = stream(spec.seed, 0, Role::Data);
    let params = params_for(spec, &mut data_rng);
    let mut rng = stream(spec.seed, 0, Role::Oracle);
    Ok(cate_for_params(
        &params,
        spec.scenario,
        point,
        n_mc,
        &mut rng,
    ))
}

/// Same oracle with explicit parameters; the harness uses this for the
/// per-dataset truths of `ViolationB`.
pub fn cate_for_params(
    params: &StructuralParams,
    scenario: Scenario,
    point: &EvalPoint,
    n_mc: usize,
    rng: &mut impl Rng,
) -> f64 {
    let w_kappa: f64 = point.w.iter().zip(&params.kappa).map(|(a, b)| a * b).sum();
    let w_eta: f64 = point.w.iter().zip(&params.eta).map(|(a, b)| a * b).sum();
    let q = |index: f64| match scenario {
        Scenario::ContinuousII => index + index * index / 3.0,
        _ => sigmoid(index),
    };
    let mut acc = 0.0;
    for _ in 0..n_mc {
        let v: f64 = StandardNormal.sample(rng);
        let xi: f64 = StandardNormal.sample(rng);
        let u = params.rho_v * v + w_eta + xi;
        acc +=
            q(point.d * params.beta + w_kappa + u) - q(point.d_prime * params.beta + w_kappa + u);
    }
    acc / n_mc as f64
}
