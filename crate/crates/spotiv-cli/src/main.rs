//! Command-line front end: estimation on CSV data, the voting test on
//! the majority condition, and the scenario simulation harness.
//!
//! Exit codes: 0 on success, 2 for input or configuration problems,
//! 3 when estimation itself fails.

mod input;

use std::path::PathBuf;
use std::process::exit;
use std::time::Instant;

use clap::{Parser, ValueEnum};

use spotiv::dgp::{Scenario, ScenarioSpec, ZDist};
use spotiv::kernel::BandwidthRule;
use spotiv::median::majority_vote_test;
use spotiv::pipeline::{estimate, fit_pipeline, PipelineOptions};
use spotiv::report::{EstimateReport, MajorityReport, SimulationReport};
use spotiv::simulate::{simulate_cell, SimOptions};
use spotiv::sir::SirOptions;
use spotiv::{Error, EvalPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    /// Contrast of the averaged structural function on a CSV sample.
    Estimate,
    /// Monte Carlo study of one scenario cell.
    Simulate,
    /// Voting test of the majority condition on a CSV sample.
    MajorityTest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse()
}

fn parse_z_dist(s: &str) -> Result<ZDist, String> {
    s.parse()
}

#[derive(Parser, Debug)]
#[command(
    name = "spotiv",
    version,
    about = "Causal effect estimation with possibly invalid instruments"
)]
struct Cli {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Input CSV with header y,d,z1,...,x1,... (estimate, majority-test).
    #[arg(long)]
    input: Option<PathBuf>,
    /// Instrument count; default infers the leading z* columns.
    #[arg(long)]
    pz: Option<usize>,
    /// Scenario (simulate): binary_i, continuous_ii, violation_a, violation_b.
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    /// Sample size per replication (simulate).
    #[arg(long)]
    n: Option<usize>,
    /// Instrument strength multiplier (simulate).
    #[arg(long)]
    c_gamma: Option<f64>,
    /// Instrument distribution (simulate): normal or uniform.
    #[arg(long, default_value = "normal", value_parser = parse_z_dist)]
    z_dist: ZDist,
    /// Replications (simulate).
    #[arg(long, default_value_t = 200)]
    reps: usize,
    /// Bootstrap resamples; 0 skips the interval.
    #[arg(long, default_value_t = 50)]
    n_boot: usize,
    /// Interval miscoverage level, in (0, 1).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Rank-selection penalty exponent, in (0, 1).
    #[arg(long, default_value_t = 0.5)]
    c0: f64,
    /// Outcome slices for continuous outcomes.
    #[arg(long, default_value_t = 10)]
    n_slices: usize,
    /// "rot" or comma-separated fixed bandwidths, one per index dimension.
    #[arg(long, default_value = "rot")]
    bandwidth: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output path; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulation report format.
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// "default" for the built-in preset, or "d,d_prime,w1,...,wp".
    #[arg(long, default_value = "default")]
    eval: String,
    /// Subtract column means from d and W before estimating.
    #[arg(long)]
    center: bool,
    /// Monte Carlo draws per oracle truth (simulate).
    #[arg(long, default_value_t = 1_000_000)]
    oracle_draws: usize,
}

enum Failure {
    Input(String),
    Estimation(Error),
}

impl Failure {
    fn report_and_code(self) -> i32 {
        match self {
            Failure::Input(msg) => {
                eprintln!("error: {msg}");
                2
            }
            Failure::Estimation(e) => {
                eprintln!("error: {e}");
                match e {
                    Error::InvalidConfig(_)
                    | Error::DimensionMismatch(_)
                    | Error::TooFewRows { .. }
                    | Error::OutcomeNotBinary(..) => 2,
                    _ => 3,
                }
            }
        }
    }
}

fn input_err<T>(msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure::Input(msg.into()))
}

fn main() {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        exit(2);
    }
    match run(cli) {
        Ok(()) => {}
        Err(failure) => exit(failure.report_and_code()),
    }
}

fn configure_threads() -> Result<(), String> {
    match std::env::var("SPOTIV_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let threads: usize = raw
                .parse()
                .map_err(|_| format!("SPOTIV_THREADS must be a positive integer, got '{raw}'"))?;
            if threads == 0 {
                return Err("SPOTIV_THREADS must be a positive integer".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build_global()
                .map_err(|e| format!("cannot size the thread pool: {e}"))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.mode {
        Mode::Estimate => run_estimate(&cli),
        Mode::MajorityTest => run_majority_test(&cli),
        Mode::Simulate => run_simulate(&cli),
    }
}

fn pipeline_options(cli: &Cli) -> Result<PipelineOptions, Failure> {
    Ok(PipelineOptions {
        sir: SirOptions {
            n_slices: cli.n_slices,
            c0: cli.c0,
        },
        bandwidth: parse_bandwidth(&cli.bandwidth)?,
        ..PipelineOptions::default()
    })
}

fn parse_bandwidth(arg: &str) -> Result<BandwidthRule, Failure> {
    if arg == "rot" {
        return Ok(BandwidthRule::RuleOfThumb);
    }
    let values = arg
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("--bandwidth: cannot parse '{s}' as a number")))
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    Ok(BandwidthRule::Fixed(values))
}

fn parse_eval(arg: &str, p: usize) -> Result<EvalPoint, Failure> {
    if arg == "default" {
        if p != 7 {
            return input_err(format!(
                "the built-in evaluation preset expects 7 covariate columns, data has {p}; \
                 pass --eval d,d_prime,w1,...,w{p}"
            ));
        }
        return Ok(EvalPoint::default_preset());
    }
    let values = arg
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Failure::Input(format!("--eval: cannot parse '{s}' as a number")))
        })
        .collect::<Result<Vec<f64>, Failure>>()?;
    if values.len() != p + 2 {
        return input_err(format!(
            "--eval needs d,d_prime plus {p} covariate values, got {}",
            values.len()
        ));
    }
    EvalPoint::new(values[0], values[1], values[2..].to_vec())
        .map_err(|e| Failure::Input(e.to_string()))
}

fn load_input(cli: &Cli) -> Result<spotiv::Dataset, Failure> {
    let path = cli
        .input
        .as_ref()
        .ok_or_else(|| Failure::Input("--input is required in this mode".into()))?;
    input::load_csv(path, cli.pz, cli.center).map_err(Failure::Input)
}

fn write_output(out: &Option<PathBuf>, text: &str) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_estimate(cli: &Cli) -> Result<(), Failure> {
    if cli.format == Format::Csv {
        return input_err("--format csv applies to simulate mode; estimate reports are JSON");
    }
    let data = load_input(cli)?;
    let point = parse_eval(&cli.eval, data.p())?;
    let opts = pipeline_options(cli)?;
    let est = estimate(&data, &point, &opts, cli.n_boot, cli.alpha, cli.seed)
        .map_err(Failure::Estimation)?;
    let report = EstimateReport::new(&est, &data, &point);
    write_output(&cli.out, &report.to_json())
}

fn run_majority_test(cli: &Cli) -> Result<(), Failure> {
    let data = load_input(cli)?;
    let opts = pipeline_options(cli)?;
    let fit = fit_pipeline(&data, &opts).map_err(Failure::Estimation)?;
    let result = majority_vote_test(&fit.sir, &fit.first_stage, &data, opts.p_hat_source)
        .map_err(Failure::Estimation)?;
    let report = MajorityReport::from(&result);
    eprintln!(
        "majority condition {}",
        if report.passed {
            "holds"
        } else {
            "is rejected"
        }
    );
    write_output(&cli.out, &report.to_json())
}

fn run_simulate(cli: &Cli) -> Result<(), Failure> {
    let scenario = cli
        .scenario
        .ok_or_else(|| Failure::Input("--scenario is required in simulate mode".into()))?;
    let n = cli
        .n
        .ok_or_else(|| Failure::Input("--n is required in simulate mode".into()))?;
    let c_gamma = cli
        .c_gamma
        .ok_or_else(|| Failure::Input("--c-gamma is required in simulate mode".into()))?;
    let spec = ScenarioSpec {
        scenario,
        n,
        c_gamma,
        z_dist: cli.z_dist,
        seed: cli.seed,
    };
    let sim = SimOptions {
        point: parse_eval(&cli.eval, 7)?,
        replications: cli.reps,
        n_boot: cli.n_boot,
        alpha: cli.alpha,
        oracle_draws: cli.oracle_draws,
        pipeline: pipeline_options(cli)?,
    };
    let started = Instant::now();
    let row = simulate_cell(&spec, &sim).map_err(Failure::Estimation)?;
    // Wall time is a stderr note, never part of the report, so reports
    // stay identical across machines and thread counts.
    eprintln!(
        "{} replications in {:.1}s ({} failed)",
        sim.replications,
        started.elapsed().as_secs_f64(),
        row.failed
    );
    let report = SimulationReport {
        alpha: cli.alpha,
        n_boot: cli.n_boot,
        oracle_draws: cli.oracle_draws,
        rows: vec![row],
    };
    let text = match cli.format {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv(),
    };
    write_output(&cli.out, &text)
}
