// SPDX-License-Identifier: Apache-2.0
//! `ctmc-sens`: simulate reaction networks, estimate stationary sensitivities,
//! evaluate exact truncated references and run the reference benchmarks.
//!
//! Exit codes: 0 success, 1 output I/O failure, 2 usage error, 3 model error,
//! 4 numerical failure, 5 benchmark acceptance failure.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use ctmc_sens::bench::{run_bench, BenchScale};
use ctmc_sens::estimators::EstimatorRegistry;
use ctmc_sens::experiment::{
    run_ensemble, CenteringSource, CheckpointGrid, EnsembleConfig, ExperimentError,
};
use ctmc_sens::model::{parse_model, Model};
use ctmc_sens::network::Observable;
use ctmc_sens::oracle::{check_lyapunov, Fsp, OracleError, Truncation, TruncationSpec};
use ctmc_sens::report::{acceptance_table, num, trajectory_csv, ReportBundle};
use ctmc_sens::rng::RngStream;
use ctmc_sens::ssa::{simulate, SimulationSpec};

/// Environment variable holding the default worker-thread count.
const THREADS_ENV: &str = "CTMC_SENS_THREADS";

#[derive(Parser)]
#[command(name = "ctmc-sens", version, about = "Stationary sensitivity estimation for stochastic reaction networks")]
struct Cli {
    /// Worker threads; defaults to $CTMC_SENS_THREADS, then to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one trajectory and write its checkpoints as CSV.
    Simulate(SimulateArgs),
    /// Run an ensemble and write a report bundle.
    Estimate(EstimateArgs),
    /// Exact quantities on the model's truncation.
    Oracle(OracleArgs),
    /// Run a reference benchmark and compare with its acceptance thresholds.
    Bench(BenchArgs),
}

#[derive(Args)]
struct SimulateArgs {
    model: PathBuf,
    #[arg(long)]
    t_end: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// `N` (evenly spaced), `geom:START:N`, or a comma-separated list of times.
    #[arg(long, default_value = "100")]
    checkpoints: String,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    model: PathBuf,
    /// Comma-separated parameter names; all parameters by default.
    #[arg(long)]
    param: Option<String>,
    /// Comma-separated observable names; all observables by default.
    #[arg(long)]
    observable: Option<String>,
    #[arg(long, default_value = "lr,clr,intlr,intclr")]
    estimators: String,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long)]
    t_end: f64,
    /// `N` (evenly spaced), `geom:START:N`, or a comma-separated list of
    /// times; six log-spaced points over the last decade by default.
    #[arg(long)]
    checkpoints: Option<String>,
    /// `oracle`, `prerun[:FACTOR]`, `value:X[,Y...]` or `none`; oracle when
    /// the model declares a truncation, otherwise a pre-run.
    #[arg(long)]
    centering: Option<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fraction of `t_end` excluded from the variance-slope fits.
    #[arg(long, default_value_t = 0.0)]
    burn_in: f64,
    /// Directory for the report bundle.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum OracleWhat {
    Pi,
    Poisson,
    Sensitivity,
    Covariance,
    Check,
}

#[derive(Args)]
struct OracleArgs {
    model: PathBuf,
    #[arg(long, value_enum)]
    what: OracleWhat,
    /// Observable name; required when the model declares several.
    #[arg(long)]
    observable: Option<String>,
    /// Comma-separated parameter names; all parameters by default.
    #[arg(long)]
    param: Option<String>,
    /// Per-species caps replacing the model's truncation, e.g. `40,40`.
    #[arg(long)]
    truncation_box: Option<String>,
    /// Lyapunov weights `v` for `V(x) = 1 + ⟨v, x⟩`; all ones by default.
    #[arg(long)]
    lyapunov: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    alpha1: f64,
    /// Output file; `.csv` selects CSV, anything else JSON. Stdout (JSON)
    /// when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// `linear` or `twogene`.
    name: String,
    #[arg(long, default_value = "desk")]
    scale: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for the report bundle and `acceptance.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Io(String),
    Usage(String),
    Model(String),
    Numerical(String),
    Acceptance,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Model(_) => 3,
            Failure::Numerical(_) => 4,
            Failure::Acceptance => 5,
        }
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        Failure::Numerical(e.to_string())
    }
}

impl From<ExperimentError> for Failure {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Config(_) | ExperimentError::Estimator(_) => Failure::Usage(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(f) = configure_threads(cli.threads) {
        return report_failure(f);
    }
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Bench(a) => cmd_bench(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report_failure(f),
    }
}

fn report_failure(f: Failure) -> ExitCode {
    match &f {
        Failure::Io(m) | Failure::Usage(m) | Failure::Model(m) | Failure::Numerical(m) => {
            eprintln!("error: {m}")
        }
        Failure::Acceptance => eprintln!("error: benchmark failed one or more acceptance criteria"),
    }
    ExitCode::from(f.code())
}

fn configure_threads(flag: Option<usize>) -> Result<(), Failure> {
    let n = match flag {
        Some(n) => Some(n),
        None => match std::env::var(THREADS_ENV) {
            Ok(s) => Some(
                s.trim()
                    .parse()
                    .map_err(|_| Failure::Usage(format!("{THREADS_ENV}={s} is not a thread count")))?,
            ),
            Err(_) => None,
        },
    };
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Usage("thread count must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Model(format!("{}: {e}", path.display())))?;
    parse_model(&text).map_err(|e| Failure::Model(format!("{}: {e}", path.display())))
}

fn positive_horizon(t_end: f64) -> Result<(), Failure> {
    if t_end.is_finite() && t_end > 0.0 {
        Ok(())
    } else {
        Err(Failure::Usage(format!("--t-end must be finite and positive, got {t_end}")))
    }
}

fn parse_grid(s: &str) -> Result<CheckpointGrid, Failure> {
    let bad = || Failure::Usage(format!("cannot parse --checkpoints `{s}`"));
    if let Ok(count) = s.trim().parse::<usize>() {
        return Ok(CheckpointGrid::Linear { count });
    }
    if let Some(rest) = s.strip_prefix("geom:") {
        let (start, count) = rest.split_once(':').ok_or_else(bad)?;
        return Ok(CheckpointGrid::Geometric {
            start: start.trim().parse().map_err(|_| bad())?,
            count: count.trim().parse().map_err(|_| bad())?,
        });
    }
    let times = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| bad())?;
    Ok(CheckpointGrid::Explicit { times })
}

fn parse_floats(s: &str, what: &str) -> Result<Vec<f64>, Failure> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|_| Failure::Usage(format!("cannot parse {what} `{s}`")))
}

fn parse_centering(s: &str, model: &Model) -> Result<CenteringSource, Failure> {
    match s {
        "oracle" => Ok(CenteringSource::Oracle {
            truncation: model.truncation.clone().ok_or_else(|| {
                Failure::Model(format!("model `{}` declares no truncation for oracle centering", model.name))
            })?,
        }),
        "none" => Ok(CenteringSource::None),
        "prerun" => Ok(CenteringSource::PreRun { length_factor: 10.0 }),
        _ => {
            if let Some(f) = s.strip_prefix("prerun:") {
                let length_factor = f
                    .parse()
                    .map_err(|_| Failure::Usage(format!("cannot parse pre-run factor `{f}`")))?;
                Ok(CenteringSource::PreRun { length_factor })
            } else if let Some(v) = s.strip_prefix("value:") {
                Ok(CenteringSource::Explicit {
                    values: parse_floats(v, "centering values")?,
                })
            } else {
                Err(Failure::Usage(format!(
                    "--centering must be oracle, prerun[:F], value:X or none; got `{s}`"
                )))
            }
        }
    }
}

/// Indices of the comma-separated `names` among `all`; every index when `None`.
fn select_names(names: Option<&str>, all: &[String], kind: &str) -> Result<Vec<usize>, Failure> {
    let Some(names) = names else {
        return Ok((0..all.len()).collect());
    };
    let mut out = Vec::new();
    for n in names.split(',').map(str::trim).filter(|n| !n.is_empty()) {
        let i = all
            .iter()
            .position(|a| a == n)
            .ok_or_else(|| Failure::Usage(format!("unknown {kind} `{n}` (known: {})", all.join(", "))))?;
        if !out.contains(&i) {
            out.push(i);
        }
    }
    if out.is_empty() {
        return Err(Failure::Usage(format!("no {kind} selected")));
    }
    Ok(out)
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), Failure> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Io(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn observable_names(model: &Model) -> Vec<String> {
    model.observables.iter().map(|o| o.name.clone()).collect()
}

fn cmd_simulate(a: SimulateArgs) -> Result<(), Failure> {
    positive_horizon(a.t_end)?;
    let model = load_model(&a.model)?;
    let checkpoints = parse_grid(&a.checkpoints)?.times(a.t_end)?;
    let params: Vec<usize> = (0..model.network.n_parameters()).collect();
    let observables: Vec<Observable> = model.observables.iter().map(|o| o.observable.clone()).collect();
    let spec = SimulationSpec {
        checkpoints: &checkpoints,
        observables: &observables,
        params_of_interest: &params,
        ..SimulationSpec::bare(&model.network, &model.params, &model.initial, a.t_end)
    };
    let rec = simulate(spec, RngStream::new(a.seed, 0)).map_err(|e| Failure::Numerical(e.to_string()))?;
    if rec.absorbed {
        eprintln!(
            "warning: trajectory absorbed at t = {}; later checkpoints repeat the absorbing state",
            rec.absorbed_at.unwrap_or(f64::NAN)
        );
    }
    let csv = trajectory_csv(&model.network, &params, &observable_names(&model), &rec);
    write_output(a.out.as_deref(), &csv)
}

fn cmd_estimate(a: EstimateArgs) -> Result<(), Failure> {
    positive_horizon(a.t_end)?;
    let model = load_model(&a.model)?;
    EstimatorRegistry::with_defaults()
        .select(&a.estimators)
        .map_err(|e| Failure::Usage(e.to_string()))?;
    let mut cfg = EnsembleConfig::from_model(&model, a.t_end, a.samples, a.seed);
    cfg.params_of_interest = select_names(a.param.as_deref(), model.network.parameters(), "parameter")?;
    let keep = select_names(a.observable.as_deref(), &observable_names(&model), "observable")?;
    cfg.observables = keep.iter().map(|&i| model.observables[i].clone()).collect();
    cfg.estimators = a.estimators.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if let Some(g) = &a.checkpoints {
        cfg.grid = parse_grid(g)?;
    }
    if let Some(c) = &a.centering {
        cfg.centering = parse_centering(c, &model)?;
    }
    cfg.burn_in_fraction = a.burn_in;
    let report = run_ensemble(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let mut table = String::from("estimator,parameter,observable,t,mean,se\n");
    for r in report.estimates.iter().filter(|r| r.t == report.t_end) {
        let _ = writeln!(
            table,
            "{},{},{},{},{},{}",
            r.estimator,
            r.parameter,
            r.observable,
            num(r.t),
            num(r.mean),
            num(r.std_error)
        );
    }
    print!("{table}");
    if let Some(dir) = &a.out {
        ReportBundle::from_report(&report)
            .write_to(dir)
            .map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    Ok(())
}

fn oracle_truncation(a: &OracleArgs, model: &Model) -> Result<Truncation, Failure> {
    let spec = match &a.truncation_box {
        Some(b) => TruncationSpec::Box {
            max: b
                .split(',')
                .map(|t| t.trim().parse::<u32>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| Failure::Usage(format!("cannot parse --truncation-box `{b}`")))?,
        },
        None => model
            .truncation
            .clone()
            .ok_or_else(|| Failure::Model(format!("model `{}` declares no truncation", model.name)))?,
    };
    Ok(spec.build(&model.network, &model.params, &model.initial)?)
}

fn pick_observable<'m>(a: &OracleArgs, model: &'m Model) -> Result<(&'m str, &'m Observable), Failure> {
    let names = observable_names(model);
    let i = match (&a.observable, model.observables.len()) {
        (Some(n), _) => select_names(Some(n), &names, "observable")?[0],
        (None, 1) => 0,
        (None, 0) => return Err(Failure::Model(format!("model `{}` declares no observables", model.name))),
        (None, _) => return Err(Failure::Usage(format!("--observable required (known: {})", names.join(", ")))),
    };
    let o = &model.observables[i];
    Ok((&o.name, &o.observable))
}

/// Rows of `(quantity, parameter, observable, value)` for CSV output.
type Rows = Vec<(String, String, String, String)>;

fn cmd_oracle(a: OracleArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let net = &model.network;
    let trunc = oracle_truncation(&a, &model)?;
    let fsp = Fsp::new(net, &model.params, trunc)?;
    let states: Vec<&Vec<u32>> = fsp.truncation.states().iter().map(|s| &s.0).collect();
    let mut rows: Rows = Vec::new();
    let scalar = |rows: &mut Rows, q: &str, p: &str, o: &str, v: f64| {
        rows.push((q.into(), p.into(), o.into(), num(v)));
    };
    let mut doc = json!({
        "model": model.name,
        "what": format!("{:?}", a.what).to_ascii_lowercase(),
        "species": net.species(),
        "truncation_states": fsp.truncation.len(),
    });
    scalar(&mut rows, "truncation_states", "", "", fsp.truncation.len() as f64);

    let mut per_state: Option<Vec<(String, Vec<f64>)>> = None;
    match a.what {
        OracleWhat::Check => {
            let irr = fsp.irreducibility();
            let weights = match &a.lyapunov {
                Some(w) => parse_floats(w, "--lyapunov")?,
                None => vec![1.0; net.n_species()],
            };
            let lyap = check_lyapunov(net, &model.params, &weights, a.alpha1, &fsp.truncation)?;
            doc["irreducible"] = json!(irr.irreducible);
            doc["n_components"] = json!(irr.components.len());
            doc["component_sizes"] = json!(irr.components.iter().map(Vec::len).collect::<Vec<_>>());
            doc["absorbing"] = json!(irr.absorbing);
            doc["closed"] = json!(fsp.generator.is_closed());
            doc["lyapunov"] = serde_json::to_value(&lyap).expect("report serializes");
            rows.push(("irreducible".into(), String::new(), String::new(), irr.irreducible.to_string()));
            scalar(&mut rows, "n_components", "", "", irr.components.len() as f64);
            for s in &irr.absorbing {
                rows.push(("absorbing_state".into(), String::new(), String::new(), s.to_string()));
            }
            scalar(&mut rows, "lyapunov_alpha1", "", "", lyap.alpha1);
            scalar(&mut rows, "lyapunov_alpha2", "", "", lyap.alpha2);
            for s in &lyap.d_set {
                rows.push(("lyapunov_d_state".into(), String::new(), String::new(), s.to_string()));
            }
        }
        OracleWhat::Pi => {
            let sol = fsp.stationary()?;
            doc["states"] = json!(states);
            doc["pi"] = json!(sol.pi);
            doc["mass_leak_rate"] = json!(sol.mass_leak_rate);
            doc["residuals"] = serde_json::to_value(sol.residuals).expect("residuals serialize");
            scalar(&mut rows, "mass_leak_rate", "", "", sol.mass_leak_rate);
            scalar(&mut rows, "residual_stationary", "", "", sol.residuals.stationary);
            per_state = Some(vec![("pi".into(), sol.pi)]);
        }
        OracleWhat::Poisson | OracleWhat::Sensitivity | OracleWhat::Covariance => {
            let (oname, f) = pick_observable(&a, &model)?;
            let sol = fsp.solve(f)?;
            doc["observable"] = json!(oname);
            doc["pi_f"] = json!(sol.pi_f);
            doc["mass_leak_rate"] = json!(sol.mass_leak_rate);
            doc["residuals"] = serde_json::to_value(sol.residuals).expect("residuals serialize");
            scalar(&mut rows, "pi_f", "", oname, sol.pi_f);
            scalar(&mut rows, "mass_leak_rate", "", "", sol.mass_leak_rate);
            scalar(&mut rows, "residual_stationary", "", "", sol.residuals.stationary);
            scalar(&mut rows, "residual_poisson", "", oname, sol.residuals.poisson.unwrap_or(f64::NAN));
            let params = select_names(a.param.as_deref(), net.parameters(), "parameter")?;
            match a.what {
                OracleWhat::Poisson => {
                    let f_hat = sol.f_hat()?.to_vec();
                    doc["states"] = json!(states);
                    doc["pi"] = json!(sol.pi);
                    doc["f"] = json!(sol.f_values);
                    doc["f_hat"] = json!(f_hat);
                    per_state = Some(vec![
                        ("pi".into(), sol.pi.clone()),
                        ("f".into(), sol.f_values.clone()),
                        ("f_hat".into(), f_hat),
                    ]);
                }
                OracleWhat::Sensitivity => {
                    let mut out = Vec::new();
                    for &k in &params {
                        let p = &net.parameters()[k];
                        let s = fsp.sensitivity(&sol, k)?;
                        out.push(json!({"parameter": p, "value": s}));
                        scalar(&mut rows, "sensitivity", p, oname, s);
                    }
                    doc["sensitivities"] = Value::Array(out);
                }
                _ => {
                    let mut out = Vec::new();
                    for &k in &params {
                        let p = &net.parameters()[k];
                        let c = fsp.covariance(&sol, k)?;
                        out.push(json!({
                            "parameter": p,
                            "sigma11_rate": c.sigma11_rate,
                            "sigma12_rate": c.sigma12_rate,
                            "sigma22_rate": c.sigma22_rate,
                            "psd": c.is_psd(),
                        }));
                        scalar(&mut rows, "sigma11_rate", p, oname, c.sigma11_rate);
                        scalar(&mut rows, "sigma12_rate", p, oname, c.sigma12_rate);
                        scalar(&mut rows, "sigma22_rate", p, oname, c.sigma22_rate);
                    }
                    doc["covariances"] = Value::Array(out);
                }
            }
        }
    }

    let csv_out = a.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "csv"));
    let text = if !csv_out {
        serde_json::to_string_pretty(&doc).expect("document serializes") + "\n"
    } else if let Some(cols) = per_state {
        let mut s = net.species().join(",");
        for (name, _) in &cols {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, x) in fsp.truncation.states().iter().enumerate() {
            let mut cells: Vec<String> = x.0.iter().map(u32::to_string).collect();
            cells.extend(cols.iter().map(|(_, v)| num(v[i])));
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    } else {
        let mut s = String::from("quantity,parameter,observable,value\n");
        for (q, p, o, v) in rows {
            let v = if v.contains(',') { format!("\"{v}\"") } else { v };
            let _ = writeln!(s, "{q},{p},{o},{v}");
        }
        s
    };
    write_output(a.out.as_deref(), &text)
}

fn cmd_bench(a: BenchArgs) -> Result<(), Failure> {
    let scale: BenchScale = a.scale.parse().map_err(Failure::Usage)?;
    let outcome = run_bench(&a.name, scale, a.seed).map_err(|e| Failure::Usage(e.to_string()))??;
    for w in &outcome.report.warnings {
        eprintln!("warning: {w}");
    }
    print!("{}", acceptance_table(&outcome));
    if let Some(dir) = &a.out {
        ReportBundle::from_bench(&outcome)
            .write_to(dir)
            .map_err(|e| Failure::Io(format!("{}: {e}", dir.display())))?;
    }
    if outcome.passed() {
        Ok(())
    } else {
        Err(Failure::Acceptance)
    }
}
