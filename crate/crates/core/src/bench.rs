// SPDX-License-Identifier: Apache-2.0
//! Reference benchmarks on the linear network and the two-gene system.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::estimators::EstimatorKind;
use crate::experiment::{
    run_ensemble, CenteringSource, CheckpointGrid, EnsembleConfig, EnsembleReport, ExperimentError,
    OracleValue,
};
use crate::model::{fixtures, parse_model, Model};
use crate::oracle::linear_moment_sensitivity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchScale {
    Desk,
    Paper,
}

impl FromStr for BenchScale {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(BenchScale::Desk),
            "paper" => Ok(BenchScale::Paper),
            other => Err(format!("unknown scale `{other}` (expected desk or paper)")),
        }
    }
}

impl fmt::Display for BenchScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BenchScale::Desk => "desk",
            BenchScale::Paper => "paper",
        })
    }
}

/// One row of the pass/fail table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionRow {
    pub name: String,
    pub value: f64,
    /// Human-readable acceptance condition.
    pub threshold: String,
    pub pass: bool,
}

impl CriterionRow {
    fn new(name: impl Into<String>, value: f64, threshold: impl Into<String>, pass: bool) -> Self {
        Self {
            name: name.into(),
            value,
            threshold: threshold.into(),
            pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchOutcome {
    pub bench: String,
    pub scale: BenchScale,
    pub report: EnsembleReport,
    pub criteria: Vec<CriterionRow>,
}

impl BenchOutcome {
    pub fn passed(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }

    pub fn criterion(&self, name: &str) -> Option<&CriterionRow> {
        self.criteria.iter().find(|c| c.name == name)
    }
}

fn fixture(text: &str) -> Model {
    parse_model(text).expect("bundled fixture parses")
}

fn missing(what: &str) -> ExperimentError {
    ExperimentError::Degenerate(format!("report lacks {what}"))
}

pub fn linear_config(scale: BenchScale, seed: u64) -> EnsembleConfig {
    let m = fixture(fixtures::LINEAR);
    let mut cfg = EnsembleConfig::from_model(&m, 1000.0, 4000, seed);
    cfg.params_of_interest = vec![m.network.parameter_index("c3").expect("c3")];
    cfg.observables.retain(|o| o.name == "x1");
    cfg.centering = CenteringSource::Oracle {
        truncation: m.truncation.clone().expect("linear fixture declares a truncation"),
    };
    match scale {
        BenchScale::Desk => {
            cfg.grid = CheckpointGrid::Geometric {
                start: 100.0,
                count: 6,
            };
        }
        BenchScale::Paper => {
            cfg.grid = CheckpointGrid::Linear { count: 10 };
            cfg.n_samples = 10_000;
        }
    }
    cfg
}

/// `∂π(x₁)/∂c₃` on the linear network, compared with the moment equations.
pub fn bench_linear(scale: BenchScale, seed: u64) -> Result<BenchOutcome, ExperimentError> {
    let cfg = linear_config(scale, seed);
    let mut report = run_ensemble(&cfg)?;
    let m = fixture(fixtures::LINEAR);
    let f = &cfg.observables[0];
    let k = cfg.params_of_interest[0];
    let exact = linear_moment_sensitivity(&m.network, &m.params, &m.initial, &f.observable)
        .map_err(ExperimentError::Oracle)?;
    let exact_s = exact.gradient[k];
    report.oracle.push(OracleValue {
        quantity: "linear_moment_sensitivity".into(),
        parameter: Some("c3".into()),
        observable: Some(f.name.clone()),
        value: exact_s,
    });
    report.oracle.push(OracleValue {
        quantity: "linear_moment_mean".into(),
        parameter: None,
        observable: Some(f.name.clone()),
        value: exact.value,
    });

    let mut criteria = Vec::new();
    let fsp = report
        .oracle_value("sensitivity", Some("c3"), Some("x1"))
        .ok_or_else(|| missing("oracle sensitivity"))?;
    let rel = (fsp - exact_s).abs() / exact_s.abs();
    criteria.push(CriterionRow::new("oracle_fsp_vs_moments", rel, "relative difference ≤ 1e-6", rel <= 1e-6));

    let term = |e: EstimatorKind| {
        report
            .terminal(e, "c3", "x1")
            .ok_or_else(|| missing(&format!("{e} at t_end")))
    };
    for e in EstimatorKind::ALL {
        let r = term(e)?;
        let z = (r.mean - exact_s).abs() / r.std_error;
        criteria.push(CriterionRow::new(
            format!("unbiased_{e}"),
            z,
            format!("|mean − ({exact_s:.4})| ≤ 3 SE at t = {}", report.t_end),
            z <= 3.0,
        ));
    }
    for e in [EstimatorKind::Clr, EstimatorKind::IntClr] {
        let r = term(e)?;
        let rel = (r.mean - exact_s).abs() / exact_s.abs();
        criteria.push(CriterionRow::new(format!("rel_error_{e}"), rel, "≤ 0.05 at t_end", rel <= 0.05));
    }
    let v = |e: EstimatorKind| term(e).map(|r| r.variance);
    let gap = v(EstimatorKind::IntClr)? / v(EstimatorKind::Clr)?;
    criteria.push(CriterionRow::new("var_ratio_intCLR_over_CLR", gap, "≤ 0.6 at t_end", gap <= 0.6));
    let red = v(EstimatorKind::Lr)? / v(EstimatorKind::Clr)?;
    criteria.push(CriterionRow::new("var_ratio_LR_over_CLR", red, "> 100 at t_end", red > 100.0));
    for (e, lo, hi) in [
        (EstimatorKind::Lr, 0.7, 1.3),
        (EstimatorKind::IntLr, 0.7, 1.3),
        (EstimatorKind::Clr, -0.2, 0.2),
        (EstimatorKind::IntClr, -0.2, 0.2),
    ] {
        let s = report
            .slope(e, "c3", "x1")
            .ok_or_else(|| missing(&format!("{e} slope")))?
            .slope;
        criteria.push(CriterionRow::new(
            format!("variance_slope_{e}"),
            s,
            format!("∈ [{lo}, {hi}]"),
            (lo..=hi).contains(&s),
        ));
    }
    Ok(BenchOutcome {
        bench: "linear".into(),
        scale,
        report,
        criteria,
    })
}

/// Published CLR sensitivities of `π(#p_AB)` at `t = 2.5·10⁴`, in parameter order.
pub const TWOGENE_REFERENCE_CLR: [(&str, f64); 9] = [
    ("k_r", 32.97),
    ("phi", 0.37),
    ("k_dr", -326.35),
    ("k_p", 32.02),
    ("k_dp", -64.65),
    ("k_1", -411.09),
    ("k_2", 103.98),
    ("k_3", 1212.21),
    ("k_4", -244.20),
];

pub fn twogene_config(scale: BenchScale, seed: u64) -> EnsembleConfig {
    let m = fixture(fixtures::TWO_GENE);
    let (t_end, n) = match scale {
        BenchScale::Desk => (5_000.0, 10_000),
        BenchScale::Paper => (25_000.0, 100_000),
    };
    let mut cfg = EnsembleConfig::from_model(&m, t_end, n, seed);
    cfg.observables.retain(|o| o.name == "pAB");
    cfg.grid = CheckpointGrid::Linear { count: 5 };
    cfg.centering = CenteringSource::PreRun { length_factor: 10.0 };
    cfg
}

/// All nine sensitivities of `π(#p_AB)` from one ensemble.
pub fn bench_twogene(scale: BenchScale, seed: u64) -> Result<BenchOutcome, ExperimentError> {
    run_twogene(&twogene_config(scale, seed), scale)
}

pub fn run_twogene(cfg: &EnsembleConfig, scale: BenchScale) -> Result<BenchOutcome, ExperimentError> {
    let mut report = run_ensemble(cfg)?;
    for (p, v) in TWOGENE_REFERENCE_CLR {
        report.oracle.push(OracleValue {
            quantity: "published_clr".into(),
            parameter: Some(p.into()),
            observable: Some("pAB".into()),
            value: v,
        });
    }
    let term = |e: EstimatorKind, p: &str| {
        report
            .terminal(e, p, "pAB")
            .ok_or_else(|| missing(&format!("{e} for {p}")))
    };
    let mut criteria = Vec::new();
    let kr = term(EstimatorKind::Clr, "k_r")?.mean;
    criteria.push(CriterionRow::new("clr_k_r", kr, "∈ [26, 40]", (26.0..=40.0).contains(&kr)));
    let mut matched = 0;
    for (p, v) in TWOGENE_REFERENCE_CLR {
        let est = term(EstimatorKind::Clr, p)?.mean;
        let ok = est.signum() == v.signum();
        matched += usize::from(ok);
        criteria.push(CriterionRow::new(
            format!("sign_{p}"),
            est,
            if v > 0.0 { "> 0" } else { "< 0" },
            ok,
        ));
    }
    criteria.push(CriterionRow::new(
        "sign_pattern",
        matched as f64,
        "all 9 CLR signs match",
        matched == TWOGENE_REFERENCE_CLR.len(),
    ));
    let width = |e: EstimatorKind| term(e, "k_r").map(|r| r.ci_hi - r.ci_lo);
    let wide = width(EstimatorKind::Lr)?.min(width(EstimatorKind::IntLr)?);
    let tight = width(EstimatorKind::Clr)?.max(width(EstimatorKind::IntClr)?);
    let ratio = wide / tight;
    criteria.push(CriterionRow::new(
        "ci_ratio_uncentered_over_centered_k_r",
        ratio,
        "≥ 10",
        ratio >= 10.0,
    ));
    Ok(BenchOutcome {
        bench: "twogene".into(),
        scale,
        report,
        criteria,
    })
}

/// Unknown benchmark name.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchError(pub String);

impl fmt::Display for BenchError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for BenchError {}

pub const BENCH_NAMES: [&str; 2] = ["linear", "twogene"];

pub fn run_bench(name: &str, scale: BenchScale, seed: u64) -> Result<Result<BenchOutcome, ExperimentError>, BenchError> {
    match name {
        "linear" => Ok(bench_linear(scale, seed)),
        "twogene" => Ok(bench_twogene(scale, seed)),
        other => Err(BenchError(format!(
            "unknown benchmark `{other}` (expected one of: {})",
            BENCH_NAMES.join(", ")
        ))),
    }
}
