//! Sliced inverse regression on the standardized covariates, plus the
//! BIC-style rank choice.
//!
//! The binary estimator is the two-class inverse regression, an exact
//! rank-one outer product. The continuous estimator is classic slicing
//! on the sorted outcome. Both standardize by the symmetric inverse
//! square root of `W'W / n`, flooring tiny eigenvalues before
//! inversion.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, OutcomeKind};
use crate::error::{Error, Result};
use crate::first_stage::FirstStageFit;

/// Eigenvalues of `Sigma_hat` below `EIGEN_FLOOR_REL * lambda_max` are
/// raised to that floor before inversion.
const EIGEN_FLOOR_REL: f64 = 1e-10;

pub const DEFAULT_N_SLICES: usize = 10;
pub const DEFAULT_C0: f64 = 0.5;

#[derive(Debug, Clone, Copy)]
pub struct SirOptions {
    pub n_slices: usize,
    pub c0: f64,
}

impl Default for SirOptions {
    fn default() -> Self {
        SirOptions {
            n_slices: DEFAULT_N_SLICES,
            c0: DEFAULT_C0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OmegaAux {
    /// Count of `Sigma_hat` eigenvalues raised to the floor.
    pub floored: usize,
}

#[derive(Debug, Clone)]
pub struct SirFit {
    pub omega_hat: DMatrix<f64>,
    /// Descending, clamped at zero.
    pub eigenvalues: Vec<f64>,
    /// Columns ordered to match `eigenvalues`.
    pub eigenvectors: DMatrix<f64>,
    pub m_hat: usize,
    /// First `m_hat` eigenvector columns, sign-normalized so the
    /// largest-magnitude entry of each column is positive.
    pub theta_hat: DMatrix<f64>,
    pub c0: f64,
    pub floored_eigenvalues: usize,
}

fn inv_sqrt(sigma: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let eig = sigma.clone().symmetric_eigen();
    let lambda_max = eig.eigenvalues.iter().cloned().fold(f64::MIN, f64::max);
    let floor = EIGEN_FLOOR_REL * lambda_max;
    let mut floored = 0;
    let scaled = eig.eigenvalues.map(|l| {
        let l = if l < floor {
            floored += 1;
            floor
        } else {
            l
        };
        1.0 / l.sqrt()
    });
    let q = &eig.eigenvectors;
    (q * DMatrix::from_diagonal(&scaled) * q.transpose(), floored)
}

/// Rows of `W Sigma_hat^{-1/2}` (each observation standardized).
fn standardized(data: &Dataset) -> (DMatrix<f64>, usize) {
    let n = data.n() as f64;
    let sigma = (data.w().transpose() * data.w()).map(|x| x / n);
    let (root, floored) = inv_sqrt(&sigma);
    (data.w() * root, floored)
}

pub fn estimate_omega_binary(data: &Dataset) -> Result<(DMatrix<f64>, OmegaAux)> {
    let (b, floored) = standardized(data);
    let n = data.n();
    let p = data.p();
    let mut count1 = 0usize;
    let mut sum0 = DVector::zeros(p);
    let mut sum1 = DVector::zeros(p);
    for i in 0..n {
        let row = b.row(i).transpose();
        if data.y()[i] == 1.0 {
            count1 += 1;
            sum1 += row;
        } else {
            sum0 += row;
        }
    }
    let count0 = n - count1;
    if count0 == 0 || count1 == 0 {
        return Err(Error::SingleClass(if count1 == 0 { 0.0 } else { 1.0 }));
    }
    let diff = sum1.map(|x| x / count1 as f64) - sum0.map(|x| x / count0 as f64);
    let p1 = count1 as f64 / n as f64;
    let omega = (&diff * diff.transpose()).map(|x| x * p1 * (1.0 - p1));
    Ok((omega, OmegaAux { floored }))
}

/// Near-equal partition sizes: the first `n mod h` slices take the
/// extra observation.
pub(crate) fn slice_sizes(n: usize, h: usize) -> Vec<usize> {
    let base = n / h;
    let extra = n % h;
    (0..h).map(|i| base + usize::from(i < extra)).collect()
}

pub fn estimate_omega_continuous(
    data: &Dataset,
    n_slices: usize,
) -> Result<(DMatrix<f64>, OmegaAux)> {
    if n_slices < 2 {
        return Err(Error::InvalidConfig("n_slices must be at least 2".into()));
    }
    let n = data.n();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| data.y()[a].partial_cmp(&data.y()[b]).unwrap());
    let mut distinct = 1;
    for k in 1..n {
        if data.y()[order[k]] != data.y()[order[k - 1]] {
            distinct += 1;
        }
    }
    if distinct < n_slices {
        return Err(Error::DegenerateSlicing {
            distinct,
            slices: n_slices,
        });
    }

    let (b, floored) = standardized(data);
    let p = data.p();
    let grand = DVector::from_fn(p, |j, _| b.column(j).sum() / n as f64);
    let mut omega = DMatrix::zeros(p, p);
    let mut start = 0usize;
    for size in slice_sizes(n, n_slices) {
        let mut mean = DVector::zeros(p);
        for &i in &order[start..start + size] {
            mean += b.row(i).transpose() - &grand;
        }
        mean /= size as f64;
        omega += (&mean * mean.transpose()).map(|x| x * size as f64 / n as f64);
        start += size;
    }
    Ok((omega, OmegaAux { floored }))
}

/// BIC-type rank choice over a descending spectrum. Ties go to the
/// smaller rank.
pub fn select_rank(eigenvalues: &[f64], n: usize, p: usize, c0: f64) -> usize {
    let crit = |m: usize| -> f64 {
        let tail: f64 = eigenvalues[m..p.min(eigenvalues.len())]
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| (l + 1.0).ln() - l)
            .sum();
        (n as f64) / 2.0 * tail - (n as f64).powf(c0) * (m * (2 * p - m + 1)) as f64 / 2.0
    };
    let mut best_m = 1;
    let mut best = crit(1);
    for m in 2..=p {
        let c = crit(m);
        if c > best {
            best = c;
            best_m = m;
        }
    }
    best_m
}

pub fn fit_sir(data: &Dataset, fs: &FirstStageFit, options: &SirOptions) -> Result<SirFit> {
    if fs.v_hat.len() != data.n() {
        return Err(Error::DimensionMismatch(
            "first-stage fit does not match dataset".into(),
        ));
    }
    if !(options.c0 > 0.0 && options.c0 < 1.0) {
        return Err(Error::InvalidConfig("c0 must lie in (0, 1)".into()));
    }
    let (omega, aux) = match data.outcome_kind() {
        OutcomeKind::Binary => estimate_omega_binary(data)?,
        OutcomeKind::Continuous => estimate_omega_continuous(data, options.n_slices)?,
    };
    let p = data.p();
    let eig = omega.clone().symmetric_eigen();
    let mut idx: Vec<usize> = (0..p).collect();
    idx.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (col, &i) in idx.iter().enumerate() {
        eigenvectors.set_column(col, &eig.eigenvectors.column(i).into_owned());
    }

    let m_hat = select_rank(&eigenvalues, data.n(), p, options.c0);
    let mut theta_hat = eigenvectors.columns(0, m_hat).into_owned();
    for mut col in theta_hat.column_iter_mut() {
        let mut lead = 0;
        for k in 1..p {
            if col[k].abs() > col[lead].abs() {
                lead = k;
            }
        }
        if col[lead] < 0.0 {
            col.neg_mut();
        }
    }

    Ok(SirFit {
        omega_hat: omega,
        eigenvalues,
        eigenvectors,
        m_hat,
        theta_hat,
        c0: options.c0,
        floored_eigenvalues: aux.floored,
    })
}
