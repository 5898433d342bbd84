//! Causal effect estimation with possibly invalid instruments.
//!
//! The estimator targets contrasts of the averaged structural function
//! `phi(d, w)` in a semi-parametric outcome model: treatment effects are
//! identified through instruments even when some instruments have
//! direct effects on the outcome, as long as the valid ones form a
//! majority among those driving the treatment. No instrument needs to
//! be known valid a priori.
//!
//! The pipeline has three stages plus a kernel evaluation step:
//!
//! 1. [`first_stage`]: least squares of the treatment on instruments
//!    and covariates, with a noise-scaled threshold that screens out
//!    irrelevant instruments.
//! 2. [`sir`]: sliced inverse regression of the outcome on the same
//!    design, recovering the span of the outcome's index directions and
//!    selecting its dimension.
//! 3. [`median`]: a median-of-ratios rule over the screened instruments
//!    that pins down the treatment coefficient inside each index, valid
//!    under majority rather than unanimity. The same module hosts a
//!    voting test of that majority condition.
//! 4. [`kernel`]: a box-kernel partial mean over the fitted indices and
//!    first-stage residual, producing `phi` contrasts and a plug-in
//!    spread diagnostic; [`pipeline`] wraps the stages and adds a
//!    bootstrap interval.
//!
//! [`dgp`] and [`simulate`] provide the synthetic benchmark: four
//! scenario families with known truths and a replication harness that
//! scores error, coverage, and the voting test, deterministically for
//! any thread count.
//!
//! ```
//! use spotiv::dgp::{generate, Scenario, ScenarioSpec, ZDist};
//! use spotiv::pipeline::{estimate, PipelineOptions};
//! use spotiv::EvalPoint;
//!
//! let spec = ScenarioSpec {
//!     scenario: Scenario::BinaryI,
//!     n: 500,
//!     c_gamma: 0.8,
//!     z_dist: ZDist::Normal,
//!     seed: 7,
//! };
//! let (data, _truth) = generate(&spec)?;
//! let est = estimate(
//!     &data,
//!     &EvalPoint::default_preset(),
//!     &PipelineOptions::default(),
//!     20,   // bootstrap draws
//!     0.05, // interval level
//!     7,    // seed for the bootstrap streams
//! )?;
//! let (lo, hi) = est.cate.ci.unwrap();
//! assert!(lo < est.cate.cate && est.cate.cate < hi);
//! # Ok::<(), spotiv::Error>(())
//! ```

// Indexed loops here walk several parallel structures at once, and the
// negated comparisons reject NaN (one mirrors kernel membership bit
// for bit); both read better as written than as clippy's suggestions.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dgp;
pub mod error;
pub mod first_stage;
pub mod kernel;
pub mod median;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod simulate;
pub mod sir;
mod stats;

pub use data::{Dataset, EvalPoint, OutcomeKind, StructuralParams};
pub use error::{Error, Result};
pub use pipeline::{estimate, Estimate, PipelineOptions};
pub use stats::normal_quantile;

// Keep the guide honest: its code blocks compile and run as doctests.
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
pub struct BookIntroduction;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/estimation.md")]
pub struct BookEstimation;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/inference.md")]
pub struct BookInference;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/simulation.md")]
pub struct BookSimulation;
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
pub struct BookCli;
