// SPDX-License-Identifier: Apache-2.0
//! Ensemble orchestration.
//!
//! Trajectory `i` always draws from stream `i` of the base seed. Workers
//! deposit per-trajectory values by index and the reduction walks indices in
//! order, so a report does not depend on the number of threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::estimators::{Estimator, EstimatorError, EstimatorKind, EstimatorRegistry, PathView};
use crate::model::{Model, NamedObservable};
use crate::network::{Observable, ReactionNetwork, State};
use crate::oracle::{Fsp, OracleError, TruncationSpec};
use crate::rng::{RngStream, PRERUN_STREAM};
use crate::ssa::{simulate, SimError, SimulationSpec};
use crate::stats::{batch_means, ols, Moments};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("centering unresolvable: {0}")]
    Centering(String),
    #[error("all {0} trajectories were absorbed")]
    AllAbsorbed(usize),
    #[error("trajectory {index}: {source}")]
    Simulation { index: u64, source: SimError },
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("{0}")]
    Degenerate(String),
}

/// Snapshot times within `(0, t_end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckpointGrid {
    /// `t_end · i / count` for `i = 1..=count`.
    Linear { count: usize },
    /// `count` log-spaced points from `start` to `t_end`.
    Geometric { start: f64, count: usize },
    Explicit { times: Vec<f64> },
}

impl CheckpointGrid {
    /// Six log-spaced points over the last decade.
    pub fn default_for(t_end: f64) -> Self {
        CheckpointGrid::Geometric {
            start: t_end / 10.0,
            count: 6,
        }
    }

    pub fn times(&self, t_end: f64) -> Result<Vec<f64>, ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        let times: Vec<f64> = match self {
            CheckpointGrid::Linear { count } => {
                if *count == 0 {
                    return bad("linear grid needs at least one point".into());
                }
                (1..=*count)
                    .map(|i| if i == *count { t_end } else { t_end * i as f64 / *count as f64 })
                    .collect()
            }
            CheckpointGrid::Geometric { start, count } => {
                if *count < 2 || !(*start > 0.0) || *start >= t_end {
                    return bad(format!(
                        "geometric grid needs count ≥ 2 and 0 < start < t_end (start {start}, count {count})"
                    ));
                }
                let ratio = (t_end / start).ln() / (*count - 1) as f64;
                (0..*count)
                    .map(|i| if i + 1 == *count { t_end } else { start * (ratio * i as f64).exp() })
                    .collect()
            }
            CheckpointGrid::Explicit { times } => times.clone(),
        };
        if times.is_empty() {
            return bad("no checkpoints".into());
        }
        let mut prev = 0.0;
        for &t in &times {
            if !(t > prev && t <= t_end) {
                return bad(format!("checkpoint {t} is not increasing within (0, {t_end}]"));
            }
            prev = t;
        }
        Ok(times)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CenteringSource {
    /// Exact `π(f)` on a truncation; also yields oracle reference values.
    Oracle { truncation: TruncationSpec },
    /// One path of length `length_factor · t_end` on the reserved stream.
    PreRun { length_factor: f64 },
    /// One value per observable.
    Explicit { values: Vec<f64> },
    None,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub model_name: String,
    pub network: ReactionNetwork,
    pub params: Vec<f64>,
    pub initial: State,
    pub t_end: f64,
    pub grid: CheckpointGrid,
    pub n_samples: usize,
    pub seed: u64,
    pub params_of_interest: Vec<usize>,
    pub observables: Vec<NamedObservable>,
    pub centering: CenteringSource,
    /// Registry names, resolved at run time.
    pub estimators: Vec<String>,
    pub burn_in_fraction: f64,
}

impl EnsembleConfig {
    /// All four estimators, every parameter, every observable, default grid,
    /// oracle centering when the model declares a truncation.
    pub fn from_model(model: &Model, t_end: f64, n_samples: usize, seed: u64) -> Self {
        Self {
            model_name: model.name.clone(),
            network: model.network.clone(),
            params: model.params.clone(),
            initial: model.initial.clone(),
            t_end,
            grid: CheckpointGrid::default_for(t_end),
            n_samples,
            seed,
            params_of_interest: (0..model.network.n_parameters()).collect(),
            observables: model.observables.clone(),
            centering: match &model.truncation {
                Some(t) => CenteringSource::Oracle {
                    truncation: t.clone(),
                },
                None => CenteringSource::PreRun { length_factor: 10.0 },
            },
            estimators: EstimatorKind::ALL
                .iter()
                .map(|k| k.label().to_ascii_lowercase())
                .collect(),
            burn_in_fraction: 0.0,
        }
    }

    /// Canonical JSON; object keys are sorted, so the digest ignores
    /// declaration order.
    pub fn canonical_json(&self) -> Value {
        json!({
            "model": self.model_name,
            "network": serde_json::to_value(&self.network).expect("network serializes"),
            "params": self.params,
            "initial": self.initial.0,
            "t_end": self.t_end,
            "grid": serde_json::to_value(&self.grid).expect("grid serializes"),
            "n_samples": self.n_samples,
            "seed": self.seed,
            "params_of_interest": self.params_of_interest,
            "observables": self.observables.iter()
                .map(|o| json!({"name": o.name, "def": describe_observable(&o.observable)}))
                .collect::<Vec<_>>(),
            "centering": serde_json::to_value(&self.centering).expect("centering serializes"),
            "estimators": self.estimators,
            "burn_in_fraction": self.burn_in_fraction,
        })
    }

    /// SHA-256 of the canonical JSON text.
    pub fn config_hash(&self) -> String {
        let text = serde_json::to_string(&self.canonical_json()).expect("json");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    fn validate(&self) -> Result<Vec<f64>, ExperimentError> {
        let cfg = |m: String| ExperimentError::Config(m);
        if self.n_samples < 2 {
            return Err(cfg(format!("need at least 2 samples, got {}", self.n_samples)));
        }
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(cfg(format!("t_end must be finite and > 0, got {}", self.t_end)));
        }
        if self.params_of_interest.is_empty() {
            return Err(cfg("no parameters of interest".into()));
        }
        if let Some(&k) = self.params_of_interest.iter().find(|&&k| k >= self.network.n_parameters()) {
            return Err(cfg(format!("parameter index {k} out of range")));
        }
        if self.observables.is_empty() {
            return Err(cfg("no observables".into()));
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return Err(cfg(format!("burn-in fraction must lie in [0, 1), got {}", self.burn_in_fraction)));
        }
        self.network.check_state(&self.initial).map_err(|e| cfg(e.to_string()))?;
        self.network.check_params(&self.params).map_err(|e| cfg(e.to_string()))?;
        self.grid.times(self.t_end)
    }
}

fn describe_observable(o: &Observable) -> Value {
    match o {
        Observable::SpeciesCount(i) => json!({"species": i}),
        Observable::LinearCombination(w) => json!({"linear": w}),
        Observable::Indicator(set) => {
            let mut v: Vec<&Vec<u32>> = set.iter().map(|s| &s.0).collect();
            v.sort();
            json!({"indicator": v})
        }
        Observable::Custom(table) => {
            let mut v: Vec<(&Vec<u32>, f64)> = table.iter().map(|(s, &x)| (&s.0, x)).collect();
            v.sort_by(|a, b| a.0.cmp(b.0));
            json!({"custom": v})
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub estimator: EstimatorKind,
    pub parameter: String,
    pub observable: String,
    pub t: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub estimator: EstimatorKind,
    pub parameter: String,
    pub observable: String,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
}

/// Ensemble mean of a zero-mean martingale at one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleRow {
    /// `Z[param]` or `Y[reaction]`.
    pub quantity: String,
    pub t: f64,
    pub mean: f64,
    pub std_error: f64,
    /// `E[M(t)²]`.
    pub mean_square: f64,
    pub within_3se: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CenteringInfo {
    /// `oracle`, `prerun`, `explicit` or `none`.
    pub source: String,
    pub values: Vec<Option<f64>>,
    /// 95% batch-means half-width per observable (pre-run only).
    pub half_width: Option<Vec<f64>>,
    pub prerun_length: Option<f64>,
}

/// Exact values computed on the centering truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub quantity: String,
    pub parameter: Option<String>,
    pub observable: Option<String>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub version: String,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub model: String,
    pub provenance: Provenance,
    pub config: Value,
    pub t_end: f64,
    pub checkpoints: Vec<f64>,
    pub n_samples: usize,
    pub n_used: usize,
    pub n_absorbed: usize,
    pub centering: CenteringInfo,
    pub estimates: Vec<EstimateRow>,
    pub slopes: Vec<SlopeFit>,
    pub martingale: Vec<MartingaleRow>,
    pub martingale_healthy: bool,
    pub oracle: Vec<OracleValue>,
    pub warnings: Vec<String>,
}

impl EnsembleReport {
    pub fn estimate(
        &self,
        estimator: EstimatorKind,
        parameter: &str,
        observable: &str,
        t: f64,
    ) -> Option<&EstimateRow> {
        self.estimates.iter().find(|r| {
            r.estimator == estimator && r.parameter == parameter && r.observable == observable && r.t == t
        })
    }

    /// Row at the last checkpoint.
    pub fn terminal(&self, estimator: EstimatorKind, parameter: &str, observable: &str) -> Option<&EstimateRow> {
        self.estimate(estimator, parameter, observable, self.t_end)
    }

    pub fn slope(&self, estimator: EstimatorKind, parameter: &str, observable: &str) -> Option<&SlopeFit> {
        self.slopes
            .iter()
            .find(|s| s.estimator == estimator && s.parameter == parameter && s.observable == observable)
    }

    pub fn oracle_value(&self, quantity: &str, parameter: Option<&str>, observable: Option<&str>) -> Option<f64> {
        self.oracle
            .iter()
            .find(|o| {
                o.quantity == quantity
                    && o.parameter.as_deref() == parameter
                    && o.observable.as_deref() == observable
            })
            .map(|o| o.value)
    }
}

/// OLS of `log Var` on `log t` over checkpoints `≥ burn_in_fraction · t_end`.
pub fn variance_slope(
    report: &EnsembleReport,
    estimator: EstimatorKind,
    parameter: &str,
    observable: &str,
    burn_in_fraction: f64,
) -> Result<SlopeFit, ExperimentError> {
    let cutoff = burn_in_fraction * report.t_end;
    let rows: Vec<&EstimateRow> = report
        .estimates
        .iter()
        .filter(|r| {
            r.estimator == estimator && r.parameter == parameter && r.observable == observable && r.t >= cutoff
        })
        .collect();
    fit_slope(&rows, estimator, parameter, observable)
}

fn fit_slope(
    rows: &[&EstimateRow],
    estimator: EstimatorKind,
    parameter: &str,
    observable: &str,
) -> Result<SlopeFit, ExperimentError> {
    if rows.len() < 3 {
        return Err(ExperimentError::Degenerate(format!(
            "{estimator}: need at least 3 checkpoints after burn-in, have {}",
            rows.len()
        )));
    }
    if let Some(r) = rows.iter().find(|r| !(r.variance > 0.0)) {
        return Err(ExperimentError::Degenerate(format!(
            "{estimator}: non-positive variance at t = {}",
            r.t
        )));
    }
    let x: Vec<f64> = rows.iter().map(|r| r.t.ln()).collect();
    let y: Vec<f64> = rows.iter().map(|r| r.variance.ln()).collect();
    let (slope, intercept) =
        ols(&x, &y).ok_or_else(|| ExperimentError::Degenerate("checkpoints are not distinct".into()))?;
    let my = y.iter().sum::<f64>() / y.len() as f64;
    let ss_tot: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let ss_res: f64 = x.iter().zip(&y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(SlopeFit {
        estimator,
        parameter: parameter.to_string(),
        observable: observable.to_string(),
        slope,
        intercept,
        r_squared,
        n_points: rows.len(),
    })
}

struct ResolvedCentering {
    info: CenteringInfo,
    values: Option<Vec<f64>>,
    oracle: Vec<OracleValue>,
    warnings: Vec<String>,
}

fn resolve_centering(cfg: &EnsembleConfig, needed: bool) -> Result<ResolvedCentering, ExperimentError> {
    let n_obs = cfg.observables.len();
    let mut warnings = Vec::new();
    match &cfg.centering {
        CenteringSource::Oracle { truncation } => {
            let trunc = truncation.build(&cfg.network, &cfg.params, &cfg.initial)?;
            let fsp = Fsp::new(&cfg.network, &cfg.params, trunc)?;
            let mut sol = fsp.stationary()?;
            let mut values = Vec::with_capacity(n_obs);
            let mut oracle = vec![OracleValue {
                quantity: "truncation_states".into(),
                parameter: None,
                observable: None,
                value: fsp.truncation.len() as f64,
            }];
            oracle.push(OracleValue {
                quantity: "mass_leak_rate".into(),
                parameter: None,
                observable: None,
                value: sol.mass_leak_rate,
            });
            if sol.mass_leak_rate > 0.0 {
                warnings.push(format!(
                    "truncation leaks stationary flux {:.3e}; oracle values are approximate",
                    sol.mass_leak_rate
                ));
            }
            let names = cfg.network.parameters();
            for no in &cfg.observables {
                fsp.poisson(&mut sol, &no.observable)?;
                values.push(sol.pi_f);
                let ov = |q: &str, p: Option<&str>, v: f64| OracleValue {
                    quantity: q.to_string(),
                    parameter: p.map(str::to_string),
                    observable: Some(no.name.clone()),
                    value: v,
                };
                oracle.push(ov("pi", None, sol.pi_f));
                for &k in &cfg.params_of_interest {
                    oracle.push(ov("sensitivity", Some(&names[k]), fsp.sensitivity(&sol, k)?));
                    match fsp.covariance(&sol, k) {
                        Ok(c) => {
                            oracle.push(ov("sigma11_rate", Some(&names[k]), c.sigma11_rate));
                            oracle.push(ov("sigma12_rate", Some(&names[k]), c.sigma12_rate));
                            oracle.push(ov("sigma22_rate", Some(&names[k]), c.sigma22_rate));
                        }
                        Err(e) => warnings.push(format!("covariance for {}: {e}", names[k])),
                    }
                }
            }
            Ok(ResolvedCentering {
                info: CenteringInfo {
                    source: "oracle".into(),
                    values: values.iter().copied().map(Some).collect(),
                    half_width: None,
                    prerun_length: None,
                },
                values: Some(values),
                oracle,
                warnings,
            })
        }
        CenteringSource::PreRun { length_factor } => {
            if !(*length_factor > 0.0 && length_factor.is_finite()) {
                return Err(ExperimentError::Config(format!(
                    "pre-run length factor must be positive, got {length_factor}"
                )));
            }
            let (values, half) = prerun_centering(cfg, length_factor * cfg.t_end)?;
            for (no, (v, h)) in cfg.observables.iter().zip(values.iter().zip(&half)) {
                if *h > 0.01 * v.abs() {
                    warnings.push(format!(
                        "pre-run centering for {} has half-width {h:.3e} (value {v:.6e}); a centering error δ adds δ²·Var(Z) to the CLR variance",
                        no.name
                    ));
                }
            }
            Ok(ResolvedCentering {
                info: CenteringInfo {
                    source: "prerun".into(),
                    values: values.iter().copied().map(Some).collect(),
                    half_width: Some(half),
                    prerun_length: Some(length_factor * cfg.t_end),
                },
                values: Some(values),
                oracle: Vec::new(),
                warnings,
            })
        }
        CenteringSource::Explicit { values } => {
            if values.len() != n_obs {
                return Err(ExperimentError::Config(format!(
                    "{} centering values for {n_obs} observables",
                    values.len()
                )));
            }
            Ok(ResolvedCentering {
                info: CenteringInfo {
                    source: "explicit".into(),
                    values: values.iter().copied().map(Some).collect(),
                    half_width: None,
                    prerun_length: None,
                },
                values: Some(values.clone()),
                oracle: Vec::new(),
                warnings,
            })
        }
        CenteringSource::None => {
            if needed {
                return Err(ExperimentError::Centering(
                    "a centered estimator was selected but no centering source is configured".into(),
                ));
            }
            Ok(ResolvedCentering {
                info: CenteringInfo {
                    source: "none".into(),
                    values: vec![None; n_obs],
                    half_width: None,
                    prerun_length: None,
                },
                values: None,
                oracle: Vec::new(),
                warnings,
            })
        }
    }
}

/// Number of batches for the pre-run half-width; the first is warm-up.
const PRERUN_BATCHES: usize = 21;

fn prerun_centering(cfg: &EnsembleConfig, length: f64) -> Result<(Vec<f64>, Vec<f64>), ExperimentError> {
    let obs: Vec<Observable> = cfg.observables.iter().map(|o| o.observable.clone()).collect();
    let cps: Vec<f64> = (1..=PRERUN_BATCHES)
        .map(|b| if b == PRERUN_BATCHES { length } else { length * b as f64 / PRERUN_BATCHES as f64 })
        .collect();
    let spec = SimulationSpec {
        checkpoints: &cps,
        observables: &obs,
        ..SimulationSpec::bare(&cfg.network, &cfg.params, &cfg.initial, length)
    };
    let rec = simulate(spec, RngStream::new(cfg.seed, PRERUN_STREAM)).map_err(|source| {
        ExperimentError::Simulation {
            index: PRERUN_STREAM,
            source,
        }
    })?;
    if rec.absorbed {
        return Err(ExperimentError::Centering("pre-run trajectory was absorbed".into()));
    }
    let width = length / PRERUN_BATCHES as f64;
    let mut values = Vec::with_capacity(obs.len());
    let mut half = Vec::with_capacity(obs.len());
    for o in 0..obs.len() {
        let batch: Vec<f64> = rec
            .checkpoints
            .windows(2)
            .map(|w| (w[1].acc.int_obs[o] - w[0].acc.int_obs[o]) / width)
            .collect();
        let (mean, hw) = batch_means(&batch, batch.len()).expect("20 batches");
        values.push(mean);
        half.push(hw);
    }
    Ok((values, half))
}

/// Values one trajectory contributes, laid out estimator-major.
struct PathValues {
    estimates: Vec<f64>,
    martingales: Vec<f64>,
}

pub fn run_ensemble(cfg: &EnsembleConfig) -> Result<EnsembleReport, ExperimentError> {
    run_ensemble_with(cfg, &EstimatorRegistry::with_defaults())
}

pub fn run_ensemble_with(
    cfg: &EnsembleConfig,
    registry: &EstimatorRegistry,
) -> Result<EnsembleReport, ExperimentError> {
    let checkpoints = cfg.validate()?;
    let selected: Vec<&dyn Estimator> = registry.select(&cfg.estimators.join(","))?;
    let needs_centering = selected.iter().any(|e| e.needs_centering());
    let centering = resolve_centering(cfg, needs_centering)?;
    let mut warnings = centering.warnings.clone();

    let obs: Vec<Observable> = cfg.observables.iter().map(|o| o.observable.clone()).collect();
    let n_e = selected.len();
    let n_k = cfg.params_of_interest.len();
    let n_o = obs.len();
    let n_c = checkpoints.len();
    let n_r = cfg.network.n_reactions();
    let spec = SimulationSpec {
        network: &cfg.network,
        params: &cfg.params,
        initial: &cfg.initial,
        t_end: cfg.t_end,
        checkpoints: &checkpoints,
        observables: &obs,
        params_of_interest: &cfg.params_of_interest,
        centering: centering.values.as_deref(),
    };
    let center = centering.values.as_deref();

    let one = |i: u64| -> Result<Option<PathValues>, ExperimentError> {
        let rec = simulate(spec, RngStream::new(cfg.seed, i))
            .map_err(|source| ExperimentError::Simulation { index: i, source })?;
        if rec.absorbed {
            return Ok(None);
        }
        let mut estimates = Vec::with_capacity(n_e * n_k * n_o * n_c);
        for e in &selected {
            for k in 0..n_k {
                for o in 0..n_o {
                    for cp in &rec.checkpoints {
                        let view = PathView::from_accumulators(&cp.acc, o, k);
                        estimates.push(e.evaluate(&view, cp.time, center.map(|c| c[o])));
                    }
                }
            }
        }
        let mut martingales = Vec::with_capacity((n_k + n_r) * n_c);
        for k in 0..n_k {
            martingales.extend(rec.checkpoints.iter().map(|cp| cp.acc.weight[k]));
        }
        for j in 0..n_r {
            martingales.extend(rec.checkpoints.iter().map(|cp| cp.acc.compensated_jumps(j)));
        }
        Ok(Some(PathValues {
            estimates,
            martingales,
        }))
    };

    let paths: Vec<Result<Option<PathValues>, ExperimentError>> =
        (0..cfg.n_samples as u64).into_par_iter().map(one).collect();

    let mut est = vec![Moments::default(); n_e * n_k * n_o * n_c];
    let mut mart = vec![Moments::default(); (n_k + n_r) * n_c];
    let mut mart_sq = vec![Moments::default(); (n_k + n_r) * n_c];
    let mut n_absorbed = 0;
    for p in paths {
        match p? {
            None => n_absorbed += 1,
            Some(v) => {
                for (m, x) in est.iter_mut().zip(&v.estimates) {
                    m.push(*x);
                }
                for ((m, s), x) in mart.iter_mut().zip(mart_sq.iter_mut()).zip(&v.martingales) {
                    m.push(*x);
                    s.push(x * x);
                }
            }
        }
    }
    let n_used = cfg.n_samples - n_absorbed;
    if n_used == 0 {
        return Err(ExperimentError::AllAbsorbed(cfg.n_samples));
    }
    if n_absorbed > 0 {
        warnings.push(format!("{n_absorbed} absorbed trajectories excluded"));
    }
    if n_used < 2 {
        warnings.push("fewer than two usable trajectories; variances are undefined".into());
    }

    let pnames = cfg.network.parameters();
    let mut estimates = Vec::with_capacity(est.len());
    let mut idx = 0;
    for e in &selected {
        for &k in &cfg.params_of_interest {
            for no in &cfg.observables {
                for &t in &checkpoints {
                    let m = &est[idx];
                    idx += 1;
                    let var = if n_used >= 2 { m.variance().max(0.0) } else { 0.0 };
                    let se = (var / n_used as f64).sqrt();
                    estimates.push(EstimateRow {
                        estimator: e.kind(),
                        parameter: pnames[k].clone(),
                        observable: no.name.clone(),
                        t,
                        mean: m.mean(),
                        variance: var,
                        std_error: se,
                        ci_lo: m.mean() - 1.96 * se,
                        ci_hi: m.mean() + 1.96 * se,
                        n: m.count(),
                    });
                }
            }
        }
    }

    let mut martingale = Vec::with_capacity(mart.len());
    let labels = cfg
        .params_of_interest
        .iter()
        .map(|&k| format!("Z[{}]", pnames[k]))
        .chain((0..n_r).map(|j| format!("Y[R{}]", j + 1)));
    for (q, label) in labels.enumerate() {
        for (c, &t) in checkpoints.iter().enumerate() {
            let m = &mart[q * n_c + c];
            let se = if n_used >= 2 { m.std_error() } else { 0.0 };
            martingale.push(MartingaleRow {
                quantity: label.clone(),
                t,
                mean: m.mean(),
                std_error: se,
                mean_square: mart_sq[q * n_c + c].mean(),
                within_3se: m.mean().abs() <= 3.0 * se,
            });
        }
    }
    let martingale_healthy = martingale.iter().all(|r| r.within_3se);
    if !martingale_healthy {
        let bad: Vec<String> = martingale
            .iter()
            .filter(|r| !r.within_3se)
            .map(|r| format!("{}@{}", r.quantity, r.t))
            .collect();
        warnings.push(format!("martingale means outside 3 SE: {}", bad.join(", ")));
    }

    let cutoff = cfg.burn_in_fraction * cfg.t_end;
    let mut slopes = Vec::new();
    for e in &selected {
        for &k in &cfg.params_of_interest {
            for no in &cfg.observables {
                let rows: Vec<&EstimateRow> = estimates
                    .iter()
                    .filter(|r| {
                        r.estimator == e.kind() && r.parameter == pnames[k] && r.observable == no.name && r.t >= cutoff
                    })
                    .collect();
                match fit_slope(&rows, e.kind(), &pnames[k], &no.name) {
                    Ok(s) => slopes.push(s),
                    Err(err) if rows.len() >= 3 => warnings.push(err.to_string()),
                    Err(_) => {}
                }
            }
        }
    }

    Ok(EnsembleReport {
        model: cfg.model_name.clone(),
        provenance: Provenance {
            seed: cfg.seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: cfg.config_hash(),
        },
        config: cfg.canonical_json(),
        t_end: cfg.t_end,
        checkpoints,
        n_samples: cfg.n_samples,
        n_used,
        n_absorbed,
        centering: centering.info,
        estimates,
        slopes,
        martingale,
        martingale_healthy,
        oracle: centering.oracle,
        warnings,
    })
}
