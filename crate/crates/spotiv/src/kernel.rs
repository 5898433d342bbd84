//! Product box kernel machinery: bandwidth rules, the partial-mean
//! estimator of the averaged structural function, contrast estimation,
//! and the plug-in variance proxy.
//!
//! Index vectors are `((d, w')B_hat, v_hat_i)`, so the evaluation
//! point pins the first `M` coordinates and only the control-function
//! coordinate varies across the sample. The estimator exploits that:
//! one membership mask for the fixed coordinates, then windows over
//! the sorted control function. Summation stays in a fixed order so a
//! run is reproducible regardless of thread count.

use nalgebra::{DMatrix, DVector};

use crate::data::{Dataset, EvalPoint, OutcomeKind};
use crate::error::{Error, Result};
use crate::first_stage::FirstStageFit;
use crate::median::StructuralFit;
use crate::stats::quantile_sorted;

pub const ROT_CONSTANT: f64 = 0.9;

#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// Per-dimension rule of thumb on the index columns.
    RuleOfThumb,
    /// Explicit bandwidths, one per index dimension.
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct KernelConfig {
    pub bandwidths: Vec<f64>,
}

impl KernelConfig {
    pub fn resolve(rule: &BandwidthRule, indices: &DMatrix<f64>) -> Result<KernelConfig> {
        let dims = indices.ncols();
        let bandwidths = match rule {
            BandwidthRule::Fixed(h) => {
                if h.len() != dims {
                    return Err(Error::DimensionMismatch(format!(
                        "{} bandwidths supplied for {} index dimensions",
                        h.len(),
                        dims
                    )));
                }
                h.clone()
            }
            BandwidthRule::RuleOfThumb => rot_bandwidths(indices),
        };
        if bandwidths.iter().any(|h| !h.is_finite() || *h <= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "bandwidths must be positive and finite, got {:?}",
                bandwidths
            )));
        }
        Ok(KernelConfig { bandwidths })
    }

    fn check_dims(&self, dims: usize) -> Result<()> {
        if self.bandwidths.len() != dims {
            return Err(Error::DimensionMismatch(format!(
                "kernel config has {} bandwidths, indices have {} dimensions",
                self.bandwidths.len(),
                dims
            )));
        }
        Ok(())
    }
}

/// `0.9 min{sd, IQR/1.34} n^{-1/(4+dims)}` per column; with `M + 1`
/// index dimensions the exponent is `-1/(5+M)`.
pub fn rot_bandwidths(indices: &DMatrix<f64>) -> Vec<f64> {
    let n = indices.nrows();
    let dims = indices.ncols();
    let scale = (n as f64).powf(-1.0 / (4.0 + dims as f64));
    (0..dims)
        .map(|k| {
            let mut col: Vec<f64> = indices.column(k).iter().cloned().collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            let var = col.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            col.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let iqr = quantile_sorted(&col, 0.75) - quantile_sorted(&col, 0.25);
            ROT_CONSTANT * var.sqrt().min(iqr / 1.34) * scale
        })
        .collect()
}

/// Product box kernel: `prod_l (1/h_l) 1(|a_l - b_l| <= h_l / 2)`.
pub fn kernel_weight(a: &[f64], b: &[f64], config: &KernelConfig) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    debug_assert_eq!(a.len(), config.bandwidths.len());
    let mut weight = 1.0;
    for l in 0..a.len() {
        let h = config.bandwidths[l];
        if (a[l] - b[l]).abs() <= 0.5 * h {
            weight /= h;
        } else {
            return 0.0;
        }
    }
    weight
}

/// `(d, w')B_hat`, the fixed part of an index vector, length `M`.
pub(crate) fn point_index(d: f64, w: &[f64], structural: &StructuralFit) -> Vec<f64> {
    let b = &structural.b_matrix;
    (0..b.ncols())
        .map(|m| {
            let mut s = d * b[(0, m)];
            for k in 0..w.len() {
                s += w[k] * b[(k + 1, m)];
            }
            s
        })
        .collect()
}

/// Per-observation index rows `((d_j, w_j')B_hat, v_hat_j)`, n x (M+1).
pub(crate) fn data_indices(
    structural: &StructuralFit,
    fs: &FirstStageFit,
    data: &Dataset,
) -> DMatrix<f64> {
    let n = data.n();
    let m = structural.b_matrix.ncols();
    let mut t = DMatrix::zeros(n, m + 1);
    let mut w_row = vec![0.0; data.p()];
    for i in 0..n {
        for k in 0..data.p() {
            w_row[k] = data.w()[(i, k)];
        }
        let idx = point_index(data.d()[i], &w_row, structural);
        for (l, val) in idx.iter().enumerate() {
            t[(i, l)] = *val;
        }
        t[(i, m)] = fs.v_hat[i];
    }
    t
}

#[derive(Debug, Clone)]
pub struct PhiEstimate {
    pub phi: f64,
    /// Averaging weights a_j in sample order; zero off-support. Empty
    /// when weights were not requested.
    pub weights: Vec<f64>,
    /// Evaluation points excluded for an empty kernel neighborhood.
    pub dropped: usize,
}

/// Shared evaluator: `eval` holds the fixed coordinates, `t` the
/// sample index rows (last column is the control function).
pub(crate) fn phi_core(
    eval: &[f64],
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &KernelConfig,
    with_weights: bool,
) -> Result<PhiEstimate> {
    let n = t.nrows();
    let m = eval.len();
    config.check_dims(m + 1)?;
    let h = &config.bandwidths;
    let hv = h[m];

    // Membership in the fixed-coordinate box, sample order.
    let mask: Vec<bool> = (0..n)
        .map(|j| (0..m).all(|l| (eval[l] - t[(j, l)]).abs() <= 0.5 * h[l]))
        .collect();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| t[(a, m)].partial_cmp(&t[(b, m)]).unwrap());
    let sv: Vec<f64> = order.iter().map(|&j| t[(j, m)]).collect();

    // Window of positions within hv/2 of v, via the same comparisons
    // the kernel itself makes, so membership agrees bit for bit.
    let window = |v: f64| -> (usize, usize) {
        let lo = sv.partition_point(|&x| v - x > 0.5 * hv);
        let hi = sv.partition_point(|&x| !(x - v > 0.5 * hv));
        (lo, hi)
    };

    let mut windows = vec![(0usize, 0usize); n];
    let mut counts = vec![0usize; n];
    let mut g = vec![0.0f64; n];
    let mut has_g = vec![false; n];
    for k in 0..n {
        let (lo, hi) = window(sv[k]);
        windows[k] = (lo, hi);
        let mut count = 0usize;
        let mut sum_y = 0.0;
        for pos in lo..hi {
            let j = order[pos];
            if mask[j] {
                count += 1;
                sum_y += y[j];
            }
        }
        counts[k] = count;
        if count > 0 {
            g[order[k]] = sum_y / count as f64;
            has_g[order[k]] = true;
        }
    }

    let mut retained = 0usize;
    let mut phi_sum = 0.0;
    for i in 0..n {
        if has_g[i] {
            retained += 1;
            phi_sum += g[i];
        }
    }
    if retained == 0 {
        return Err(Error::BandwidthTooSmall);
    }
    let phi = phi_sum / retained as f64;

    let weights = if with_weights {
        // a_j = (1/n) sum over retained i with j in its neighborhood of
        // 1/count_i; the v-window relation is symmetric, so the sum
        // runs over j's own window.
        let inv: Vec<f64> = counts
            .iter()
            .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
            .collect();
        let mut a = vec![0.0f64; n];
        for k in 0..n {
            let j = order[k];
            if !mask[j] {
                continue;
            }
            let (lo, hi) = windows[k];
            let mut s = 0.0;
            for pos in lo..hi {
                s += inv[pos];
            }
            a[j] = s / n as f64;
        }
        a
    } else {
        Vec::new()
    };

    Ok(PhiEstimate {
        phi,
        weights,
        dropped: n - retained,
    })
}

/// Partial-mean estimate of the averaged structural function at
/// `(d, w)`, averaging the kernel regression over the control-function
/// values of the sample.
pub fn estimate_phi(
    d: f64,
    w: &[f64],
    structural: &StructuralFit,
    fs: &FirstStageFit,
    data: &Dataset,
    config: &KernelConfig,
) -> Result<PhiEstimate> {
    if w.len() + 1 != structural.b_matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "evaluation covariate has length {}, structural matrix expects {}",
            w.len(),
            structural.b_matrix.nrows() - 1
        )));
    }
    let t = data_indices(structural, fs, data);
    phi_core(&point_index(d, w, structural), &t, data.y(), config, true)
}

/// Kernel regression of y on the full index rows, evaluated at each
/// sample point. The self term keeps every denominator positive.
pub(crate) fn g_hat_in_sample(
    t: &DMatrix<f64>,
    y: &DVector<f64>,
    config: &KernelConfig,
) -> Vec<f64> {
    let n = t.nrows();
    let dims = t.ncols();
    let h = &config.bandwidths;
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut num = 0.0;
        let mut den = 0.0;
        'obs: for j in 0..n {
            let mut weight = 1.0;
            for l in 0..dims {
                if (t[(i, l)] - t[(j, l)]).abs() <= 0.5 * h[l] {
                    weight /= h[l];
                } else {
                    continue 'obs;
                }
            }
            num += weight * y[j];
            den += weight;
        }
        out[i] = num / den;
    }
    out
}

#[derive(Debug, Clone)]
pub struct CateResult {
    pub phi_d: f64,
    pub phi_dprime: f64,
    pub cate: f64,
    /// Plug-in standard error from the contrast weights and a variance
    /// proxy at each sample point. Diagnostic; the bootstrap is the
    /// interval of record.
    pub plug_in_se: f64,
    pub boot_se: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub n_boot: usize,
    pub dropped_points: usize,
    pub weights_a: Vec<f64>,
    pub weights_c: Vec<f64>,
}

pub fn estimate_cate(
    point: &EvalPoint,
    structural: &StructuralFit,
    fs: &FirstStageFit,
    data: &Dataset,
    config: &KernelConfig,
) -> Result<CateResult> {
    if point.w.len() + 1 != structural.b_matrix.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "evaluation covariate has length {}, structural matrix expects {}",
            point.w.len(),
            structural.b_matrix.nrows() - 1
        )));
    }
    let t = data_indices(structural, fs, data);
    let at_d = phi_core(
        &point_index(point.d, &point.w, structural),
        &t,
        data.y(),
        config,
        true,
    )?;
    let at_dp = phi_core(
        &point_index(point.d_prime, &point.w, structural),
        &t,
        data.y(),
        config,
        true,
    )?;

    let g = g_hat_in_sample(&t, data.y(), config);
    let n = data.n();
    let weights_c: Vec<f64> = (0..n).map(|j| at_d.weights[j] - at_dp.weights[j]).collect();
    let mut var_sum = 0.0;
    for j in 0..n {
        let proxy = match data.outcome_kind() {
            OutcomeKind::Binary => g[j] * (1.0 - g[j]),
            OutcomeKind::Continuous => (data.y()[j] - g[j]).powi(2),
        };
        var_sum += weights_c[j] * weights_c[j] * proxy;
    }

    Ok(CateResult {
        phi_d: at_d.phi,
        phi_dprime: at_dp.phi,
        cate: at_d.phi - at_dp.phi,
        plug_in_se: var_sum.sqrt(),
        boot_se: None,
        ci: None,
        n_boot: 0,
        dropped_points: at_d.dropped + at_dp.dropped,
        weights_a: at_d.weights,
        weights_c,
    })
}

/// Contrast value alone, for resampling loops where weights and the
/// quadratic-cost variance proxy are not needed.
pub(crate) fn cate_value_only(
    point: &EvalPoint,
    structural: &StructuralFit,
    fs: &FirstStageFit,
    data: &Dataset,
    config: &KernelConfig,
) -> Result<(f64, usize)> {
    let t = data_indices(structural, fs, data);
    let at_d = phi_core(
        &point_index(point.d, &point.w, structural),
        &t,
        data.y(),
        config,
        false,
    )?;
    let at_dp = phi_core(
        &point_index(point.d_prime, &point.w, structural),
        &t,
        data.y(),
        config,
        false,
    )?;
    Ok((at_d.phi - at_dp.phi, at_d.dropped + at_dp.dropped))
}
