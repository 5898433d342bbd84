//! Serializable run reports. Everything human-facing here is 1-based:
//! instrument j in a report means column `z_j` of the input.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, EvalPoint, OutcomeKind};
use crate::error::{Error, Result};
use crate::median::{MajorityTestResult, PHatSource};
use crate::pipeline::Estimate;
use crate::simulate::CellSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdEntry {
    /// Voter instrument (1-based).
    pub j: usize,
    /// Candidate instrument (1-based).
    pub k: usize,
    pub eps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorityReport {
    pub passed: bool,
    /// Vote counts per candidate instrument (1-based keys).
    pub votes: BTreeMap<usize, usize>,
    pub thresholds: Vec<ThresholdEntry>,
    pub p_hat_source: PHatSource,
    pub ridge_stabilized: bool,
}

impl MajorityReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("bad report: {e}")))
    }
}

impl From<&MajorityTestResult> for MajorityReport {
    fn from(result: &MajorityTestResult) -> Self {
        MajorityReport {
            passed: result.passed,
            votes: result.votes.iter().map(|(&k, &c)| (k + 1, c)).collect(),
            thresholds: result
                .thresholds
                .iter()
                .map(|(&(j, k), &eps)| ThresholdEntry {
                    j: j + 1,
                    k: k + 1,
                    eps,
                })
                .collect(),
            p_hat_source: result.p_hat_source,
            ridge_stabilized: result.ridge_stabilized,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub n: usize,
    pub p_z: usize,
    pub p_x: usize,
    pub outcome: OutcomeKind,
    pub eval: EvalPoint,
    pub gamma_hat: Vec<f64>,
    pub sigma_v: f64,
    /// Instruments selected as relevant (1-based).
    pub relevant: Vec<usize>,
    pub m_hat: usize,
    pub b_hat: Vec<f64>,
    /// Structural matrix by rows, (p + 1) x m_hat.
    pub b_matrix: Vec<Vec<f64>>,
    pub bandwidths: Vec<f64>,
    pub phi_d: f64,
    pub phi_d_prime: f64,
    pub cate: f64,
    pub plug_in_se: f64,
    pub boot_se: Option<f64>,
    pub ci_lower: Option<f64>,
    pub ci_upper: Option<f64>,
    pub n_boot: usize,
    pub alpha: f64,
    pub dropped_points: usize,
    pub majority_test: Option<MajorityReport>,
}

impl EstimateReport {
    pub fn new(est: &Estimate, data: &Dataset, point: &EvalPoint) -> Self {
        let fit = &est.fit;
        let b = &fit.structural.b_matrix;
        EstimateReport {
            n: data.n(),
            p_z: data.p_z(),
            p_x: data.p_x(),
            outcome: data.outcome_kind(),
            eval: point.clone(),
            gamma_hat: fit.first_stage.gamma_hat.iter().copied().collect(),
            sigma_v: fit.first_stage.sigma_v,
            relevant: fit.first_stage.relevant.iter().map(|&j| j + 1).collect(),
            m_hat: fit.sir.m_hat,
            b_hat: fit.structural.b_hat.iter().copied().collect(),
            b_matrix: (0..b.nrows())
                .map(|r| b.row(r).iter().copied().collect())
                .collect(),
            bandwidths: fit.kernel.bandwidths.clone(),
            phi_d: est.cate.phi_d,
            phi_d_prime: est.cate.phi_dprime,
            cate: est.cate.cate,
            plug_in_se: est.cate.plug_in_se,
            boot_se: est.cate.boot_se,
            ci_lower: est.cate.ci.map(|(lo, _)| lo),
            ci_upper: est.cate.ci.map(|(_, hi)| hi),
            n_boot: est.cate.n_boot,
            alpha: est.alpha,
            dropped_points: est.cate.dropped_points,
            majority_test: est.majority.as_ref().map(MajorityReport::from),
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("bad report: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub alpha: f64,
    pub n_boot: usize,
    pub oracle_draws: usize,
    pub rows: Vec<CellSummary>,
}

fn push_opt(line: &mut String, v: Option<f64>) {
    match v {
        Some(x) => {
            let _ = write!(line, ",{x}");
        }
        None => line.push(','),
    }
}

impl SimulationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidConfig(format!("bad report: {e}")))
    }

    /// One line per cell; empty fields where a score does not apply.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "scenario,z_dist,n,c_gamma,seed,replications,failed,mae,coverage,mean_boot_se,majority_pass_rate,mean_dropped\n",
        );
        for row in &self.rows {
            let mut line = format!(
                "{},{},{},{},{},{},{},{}",
                row.scenario.as_str(),
                row.z_dist.as_str(),
                row.n,
                row.c_gamma,
                row.seed,
                row.replications,
                row.failed,
                row.mae
            );
            push_opt(&mut line, row.coverage);
            push_opt(&mut line, row.mean_boot_se);
            push_opt(&mut line, row.majority_pass_rate);
            let _ = write!(line, ",{}", row.mean_dropped);
            line.push('\n');
            out.push_str(&line);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dgp::{generate, Scenario, ScenarioSpec, ZDist};
    use crate::pipeline::{estimate, PipelineOptions};

    fn sample_estimate() -> (EstimateReport, Dataset) {
        let spec = ScenarioSpec {
            scenario: Scenario::BinaryI,
            n: 400,
            c_gamma: 0.8,
            z_dist: ZDist::Normal,
            seed: 9,
        };
        let (data, _) = generate(&spec).unwrap();
        let point = EvalPoint::default_preset();
        let est = estimate(&data, &point, &PipelineOptions::default(), 10, 0.05, 9).unwrap();
        (EstimateReport::new(&est, &data, &point), data)
    }

    #[test]
    fn estimate_report_round_trips() {
        let (report, _) = sample_estimate();
        let back = EstimateReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, back);
        assert!(report.relevant.iter().all(|&j| (1..=7).contains(&j)));
        let mt = report.majority_test.as_ref().unwrap();
        assert!(mt.votes.keys().all(|&k| (1..=7).contains(&k)));
        assert!(mt.thresholds.iter().all(|t| t.j >= 1 && t.k >= 1));
    }

    #[test]
    fn simulation_report_round_trips_and_prints_csv() {
        let report = SimulationReport {
            alpha: 0.05,
            n_boot: 50,
            oracle_draws: 1000,
            rows: vec![CellSummary {
                scenario: Scenario::ContinuousII,
                z_dist: ZDist::Normal,
                n: 1000,
                c_gamma: 0.8,
                seed: 1,
                replications: 200,
                failed: 0,
                mae: 0.0625,
                coverage: Some(0.95),
                mean_boot_se: Some(0.11),
                majority_pass_rate: None,
                mean_dropped: 1.5,
            }],
        };
        let back = SimulationReport::from_json(&report.to_json()).unwrap();
        assert_eq!(report, back);
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().starts_with("scenario,"));
        assert_eq!(
            lines.next().unwrap(),
            "continuous_ii,normal,1000,0.8,1,200,0,0.0625,0.95,0.11,,1.5"
        );
    }
}
