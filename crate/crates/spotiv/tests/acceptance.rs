//! Acceptance gate. Each criterion is one test, so the harness prints
//! one pass/fail line per criterion; measured values go to stdout and
//! are shown for any failing criterion.
//!
//! Monte Carlo thresholds are evaluated at fixed seeds; every check
//! here is deterministic.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use spotiv::data::{Dataset, EvalPoint, OutcomeKind};
use spotiv::dgp::{generate, Scenario, ScenarioSpec, ZDist};
use spotiv::first_stage::{fit_first_stage, FirstStageFit};
use spotiv::kernel::{estimate_cate, estimate_phi, KernelConfig};
use spotiv::median::{fit_structural, StructuralFit};
use spotiv::pipeline::fit_pipeline;
use spotiv::report::SimulationReport;
use spotiv::simulate::{simulate_cell, SimOptions};
use spotiv::sir::{fit_sir, select_rank, SirFit, SirOptions};
use spotiv::Error;

fn spec(scenario: Scenario, n: usize, c_gamma: f64, z_dist: ZDist, seed: u64) -> ScenarioSpec {
    ScenarioSpec {
        scenario,
        n,
        c_gamma,
        z_dist,
        seed,
    }
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

#[test]
fn criterion_1_binary_strong_iv_accuracy() {
    let start = Instant::now();
    let spec = spec(Scenario::BinaryI, 1000, 0.8, ZDist::Normal, 101);
    let opts = SimOptions {
        replications: 200,
        n_boot: 50,
        ..SimOptions::default()
    };
    let cell = simulate_cell(&spec, &opts).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let mae = cell.mae;
    let cov = cell.coverage.unwrap();
    let se = cell.mean_boot_se.unwrap();
    println!(
        "criterion 1: mae={mae:.4} (need 0.026..=0.066), coverage={cov:.3} (need 0.91..=0.99), \
         mean boot se={se:.4} (need 0.04..=0.12), wall {elapsed:.1}s (need <=1800s), failed={}",
        cell.failed
    );
    assert!((0.026..=0.066).contains(&mae), "mae {mae} out of window");
    assert!((0.91..=0.99).contains(&cov), "coverage {cov} out of window");
    assert!(
        (0.04..=0.12).contains(&se),
        "mean boot se {se} out of window"
    );
    assert!(elapsed <= 1800.0, "cell took {elapsed}s");
}

#[test]
fn criterion_2_binary_weak_iv_robustness() {
    let spec = spec(Scenario::BinaryI, 500, 0.4, ZDist::Normal, 102);
    let opts = SimOptions {
        replications: 200,
        n_boot: 50,
        ..SimOptions::default()
    };
    let cell = simulate_cell(&spec, &opts).unwrap();
    let mae = cell.mae;
    let cov = cell.coverage.unwrap();
    println!(
        "criterion 2: coverage={cov:.3} (need >=0.87), mae={mae:.4} (need <=0.16), failed={}",
        cell.failed
    );
    assert!(cov >= 0.87, "coverage {cov} below 0.87");
    assert!(mae <= 0.16, "mae {mae} above 0.16");
}

#[test]
fn criterion_3_majority_test_discriminates() {
    let opts = SimOptions {
        replications: 200,
        n_boot: 0,
        ..SimOptions::default()
    };
    let invalid = spec(Scenario::ViolationA, 1000, 0.6, ZDist::Uniform, 103);
    let broken = simulate_cell(&invalid, &opts).unwrap();
    let valid = spec(Scenario::BinaryI, 1000, 0.6, ZDist::Normal, 104);
    let honest = simulate_cell(&valid, &opts).unwrap();
    let rate_broken = broken.majority_pass_rate.unwrap();
    let rate_honest = honest.majority_pass_rate.unwrap();
    println!(
        "criterion 3: pass rate under majority violation={rate_broken:.3} (need <=0.10), \
         under majority validity={rate_honest:.3} (need >=0.90)"
    );
    assert!(
        rate_broken <= 0.10,
        "violation pass rate {rate_broken} above 0.10"
    );
    assert!(
        rate_honest >= 0.90,
        "valid-design pass rate {rate_honest} below 0.90"
    );
}

#[test]
fn criterion_4_continuous_outcome_accuracy() {
    let spec = spec(Scenario::ContinuousII, 1000, 0.8, ZDist::Normal, 105);
    let opts = SimOptions {
        replications: 200,
        n_boot: 50,
        ..SimOptions::default()
    };
    let cell = simulate_cell(&spec, &opts).unwrap();
    let mae = cell.mae;
    let cov = cell.coverage.unwrap();
    println!(
        "criterion 4: coverage={cov:.3} (need 0.90..=0.99), mae={mae:.4} (need <=0.07), failed={}",
        cell.failed
    );
    assert!((0.90..=0.99).contains(&cov), "coverage {cov} out of window");
    assert!(mae <= 0.07, "mae {mae} above 0.07");
}

/// A fabricated fit whose only meaningful parts are the pieces the
/// kernel step reads: the structural matrix, the residuals, and the
/// screened set.
fn synthetic_instance(
    rng: &mut ChaCha8Rng,
    binary: bool,
) -> (
    Dataset,
    StructuralFit,
    FirstStageFit,
    KernelConfig,
    f64,
    Vec<f64>,
) {
    let n = rng.random_range(30..=200);
    let p = rng.random_range(1..=3);
    let m = rng.random_range(1..=2);

    let b_matrix = DMatrix::from_fn(p + 1, m, |_, _| rng.random_range(-1.0..1.0));
    let structural = StructuralFit {
        b_hat: b_matrix.row(0).transpose(),
        b_matrix: b_matrix.clone(),
        ratios: DMatrix::zeros(1, m),
        s_hat: vec![0],
    };

    let w = DMatrix::from_fn(n, p, |_, _| normal(rng));
    let d = DVector::from_fn(n, |_, _| normal(rng));
    let mut y = DVector::from_fn(n, |_, _| {
        if binary {
            if rng.random::<f64>() < 0.5 {
                1.0
            } else {
                0.0
            }
        } else {
            normal(rng)
        }
    });
    if binary {
        y[0] = 0.0;
        y[1] = 1.0;
    }
    let kind = if binary {
        OutcomeKind::Binary
    } else {
        OutcomeKind::Continuous
    };
    let data = Dataset::new(y, d.clone(), w.clone(), p, kind).unwrap();

    let fs = FirstStageFit {
        gamma_hat: DVector::zeros(p),
        v_hat: DVector::from_fn(n, |_, _| normal(rng)),
        sigma_v: 1.0,
        sigma: DMatrix::identity(p, p),
        sigma_inv: DMatrix::identity(p, p),
        relevant: vec![0],
        thresholds: vec![0.0; p],
    };

    let config = KernelConfig {
        bandwidths: (0..=m).map(|_| rng.random_range(0.6..1.8)).collect(),
    };

    // Evaluate near a sample row so the neighborhood is populated.
    let k = rng.random_range(0..n);
    let d0 = d[k] + 0.05 * normal(rng);
    let w0: Vec<f64> = (0..p).map(|j| w[(k, j)] + 0.05 * normal(rng)).collect();
    (data, structural, fs, config, d0, w0)
}

/// Quadratic-cost reference: for each observation i, regress y on the
/// full index vector at `(fixed, v_i)` by explicit kernel sums, then
/// average over the observations with populated neighborhoods.
fn brute_phi(
    d0: f64,
    w0: &[f64],
    structural: &StructuralFit,
    fs: &FirstStageFit,
    data: &Dataset,
    config: &KernelConfig,
) -> (f64, usize) {
    let b = &structural.b_matrix;
    let m = b.ncols();
    let n = data.n();
    let h = &config.bandwidths;

    let index = |d: f64, w: &dyn Fn(usize) -> f64| -> Vec<f64> {
        (0..m)
            .map(|col| {
                let mut s = d * b[(0, col)];
                for k in 0..b.nrows() - 1 {
                    s += w(k) * b[(k + 1, col)];
                }
                s
            })
            .collect()
    };

    let fixed = index(d0, &|k| w0[k]);
    let t: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut row = index(data.d()[j], &|k| data.w()[(j, k)]);
            row.push(fs.v_hat[j]);
            row
        })
        .collect();

    let mut retained = 0usize;
    let mut phi_sum = 0.0;
    for i in 0..n {
        let mut a = fixed.clone();
        a.push(fs.v_hat[i]);
        let mut num = 0.0;
        let mut den = 0.0;
        for (j, tj) in t.iter().enumerate() {
            let mut weight = 1.0;
            for l in 0..=m {
                if (a[l] - tj[l]).abs() <= 0.5 * h[l] {
                    weight /= h[l];
                } else {
                    weight = 0.0;
                    break;
                }
            }
            if weight > 0.0 {
                num += weight * data.y()[j];
                den += weight;
            }
        }
        if den > 0.0 {
            retained += 1;
            phi_sum += num / den;
        }
    }
    if retained == 0 {
        (f64::NAN, n)
    } else {
        (phi_sum / retained as f64, n - retained)
    }
}

#[test]
fn criterion_5_partial_mean_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut checked = 0;
    while checked < 50 {
        let binary = rng.random::<f64>() < 0.5;
        let (data, structural, fs, config, d0, w0) = synthetic_instance(&mut rng, binary);
        let (brute, brute_dropped) = brute_phi(d0, &w0, &structural, &fs, &data, &config);
        match estimate_phi(d0, &w0, &structural, &fs, &data, &config) {
            Ok(fast) => {
                let tol = 1e-12 * brute.abs().max(1.0);
                assert!(
                    (fast.phi - brute).abs() <= tol,
                    "instance {checked}: fast {} vs brute {}",
                    fast.phi,
                    brute
                );
                assert_eq!(fast.dropped, brute_dropped, "instance {checked} dropped");
            }
            Err(Error::BandwidthTooSmall) => {
                assert_eq!(brute_dropped, data.n(), "instance {checked} emptiness");
            }
            Err(e) => panic!("instance {checked}: unexpected error {e}"),
        }
        checked += 1;
    }
    println!("criterion 5: 50 instances matched the quadratic-cost reference at 1e-12 relative");
}

#[test]
fn criterion_6_noiseless_exact_recovery() {
    let beta = 0.25;
    let signs = [1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0];
    let gamma = DVector::from_iterator(7, signs.iter().map(|s| 0.8 * s));
    // Direct effects on instruments 6 and 7 only: five of seven valid.
    let direct = [0.0, 0.0, 0.0, 0.0, 0.0, 0.8, 0.4];
    let theta = DMatrix::from_fn(7, 1, |j, _| gamma[j] * beta + direct[j]);

    let sir = SirFit {
        omega_hat: DMatrix::zeros(7, 7),
        eigenvalues: vec![1.0; 7],
        eigenvectors: DMatrix::identity(7, 7),
        m_hat: 1,
        theta_hat: theta,
        c0: 0.5,
        floored_eigenvalues: 0,
    };
    let fs = FirstStageFit {
        gamma_hat: gamma.clone(),
        v_hat: DVector::zeros(16),
        sigma_v: 1.0,
        sigma: DMatrix::identity(7, 7),
        sigma_inv: DMatrix::identity(7, 7),
        relevant: (0..7).collect(),
        thresholds: vec![0.0; 7],
    };
    let fit = fit_structural(&sir, &fs).unwrap();
    let err_b = (fit.b_hat[0] - beta).abs();
    let err_direct = (0..7)
        .map(|j| (fit.b_matrix[(j + 1, 0)] - direct[j]).abs())
        .fold(0.0f64, f64::max);
    println!(
        "criterion 6: |b_hat - beta|={err_b:.2e}, max direct-effect error={err_direct:.2e} (need <=1e-10)"
    );
    assert!(err_b <= 1e-10);
    assert!(err_direct <= 1e-10);
    assert_eq!(fit.b_matrix[(0, 0)], fit.b_hat[0]);
}

#[test]
fn criterion_7_property_suite() {
    // Bounded partial means for binary outcomes.
    let mut rng = ChaCha8Rng::seed_from_u64(700);
    for _ in 0..10 {
        let (data, structural, fs, config, d0, w0) = synthetic_instance(&mut rng, true);
        if let Ok(est) = estimate_phi(d0, &w0, &structural, &fs, &data, &config) {
            assert!(
                (0.0..=1.0).contains(&est.phi),
                "phi {} out of [0,1]",
                est.phi
            );
        }
    }
    println!("criterion 7a: binary partial means stayed in [0,1]");

    let spec7 = spec(Scenario::BinaryI, 600, 0.8, ZDist::Normal, 107);
    let (data, _) = generate(&spec7).unwrap();
    let fit = fit_pipeline(&data, &spotiv::PipelineOptions::default()).unwrap();
    let point = EvalPoint::default_preset();

    // Exact antisymmetry under swapping the exposure pair.
    let fwd = estimate_cate(
        &point,
        &fit.structural,
        &fit.first_stage,
        &data,
        &fit.kernel,
    )
    .unwrap();
    let rev = estimate_cate(
        &point.swapped(),
        &fit.structural,
        &fit.first_stage,
        &data,
        &fit.kernel,
    )
    .unwrap();
    assert_eq!(fwd.cate.to_bits(), (-rev.cate).to_bits());
    assert_eq!(fwd.phi_d.to_bits(), rev.phi_dprime.to_bits());
    assert_eq!(fwd.plug_in_se.to_bits(), rev.plug_in_se.to_bits());
    println!("criterion 7b: contrast is bitwise antisymmetric in (d, d')");

    // A bandwidth that covers everything makes both partial means the
    // sample mean, so the contrast collapses to exactly zero.
    let dims = fit.kernel.bandwidths.len();
    let huge = KernelConfig {
        bandwidths: vec![1e6; dims],
    };
    let flat = estimate_cate(&point, &fit.structural, &fit.first_stage, &data, &huge).unwrap();
    assert_eq!(flat.cate, 0.0);
    println!("criterion 7c: contrast is exactly zero at bandwidth 1e6");

    // Averaging weights sum to the retained fraction.
    let est = estimate_phi(
        point.d,
        &point.w,
        &fit.structural,
        &fit.first_stage,
        &data,
        &fit.kernel,
    )
    .unwrap();
    let sum: f64 = est.weights.iter().sum();
    let want = (data.n() - est.dropped) as f64 / data.n() as f64;
    assert!(
        (sum - want).abs() <= 1e-12,
        "weight sum {sum} vs retained fraction {want}"
    );
    println!("criterion 7d: averaging weights sum to the retained fraction");

    // Direction recovery: the fitted index direction stays within 15
    // degrees of the truth for at least 90 of 100 seeds.
    let mut hits = 0;
    for seed in 0..100 {
        let spec_ii = spec(Scenario::ContinuousII, 5000, 0.8, ZDist::Normal, seed);
        let (data, params) = generate(&spec_ii).unwrap();
        let fs = fit_first_stage(&data, 2.0).unwrap();
        let sir = fit_sir(&data, &fs, &SirOptions::default()).unwrap();
        let truth: DVector<f64> = DVector::from_iterator(
            7,
            (0..7).map(|j| params.gamma[j] * params.beta + params.kappa[j] + params.eta[j]),
        );
        let unit = &truth / truth.norm();
        let proj = sir.theta_hat.transpose() * &unit;
        let cos = proj.norm().min(1.0);
        let angle = cos.acos().to_degrees();
        if angle <= 15.0 {
            hits += 1;
        }
    }
    println!("criterion 7e: direction within 15 degrees on {hits}/100 seeds (need >=90)");
    assert!(hits >= 90, "only {hits}/100 seeds within 15 degrees");

    // Rank selection on a sharply spiked spectrum.
    let m = select_rank(&[0.5, 0.0, 0.0, 0.0], 1000, 4, 0.5);
    assert_eq!(m, 1);
    println!("criterion 7f: rank selection picks 1 on the spiked spectrum");
}

#[test]
fn criterion_8_reports_identical_across_thread_counts() {
    let spec8 = spec(Scenario::BinaryI, 400, 0.8, ZDist::Normal, 108);
    let opts = SimOptions {
        replications: 12,
        n_boot: 6,
        oracle_draws: 200_000,
        ..SimOptions::default()
    };
    let run = |threads: usize| -> Vec<u8> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap();
        let row = pool.install(|| simulate_cell(&spec8, &opts).unwrap());
        SimulationReport {
            alpha: opts.alpha,
            n_boot: opts.n_boot,
            oracle_draws: opts.oracle_draws,
            rows: vec![row],
        }
        .to_json()
        .into_bytes()
    };
    let single = run(1);
    let multi = run(4);
    println!(
        "criterion 8: serialized reports identical across 1 and 4 threads ({} bytes)",
        single.len()
    );
    assert_eq!(single, multi);
}
