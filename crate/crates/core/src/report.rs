// SPDX-License-Identifier: Apache-2.0
//! Serialization of reports into a directory of JSON, CSV and a plot script.
//!
//! Every number in a CSV is written with 17 significant digits, which
//! round-trips any `f64`. Rows of `estimates.csv` are sorted by
//! (estimator, parameter, observable, t).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use crate::bench::BenchOutcome;
use crate::experiment::EnsembleReport;
use crate::network::ReactionNetwork;
use crate::ssa::TrajectoryRecord;

/// Formats `x` with 17 significant digits.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else {
        format!("{x}")
    }
}

fn field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn row(out: &mut String, cells: &[String]) {
    let line: Vec<String> = cells.iter().map(|c| field(c)).collect();
    out.push_str(&line.join(","));
    out.push('\n');
}

/// File name to contents; written verbatim by [`ReportBundle::write_to`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ReportBundle {
    pub files: BTreeMap<String, String>,
}

impl ReportBundle {
    pub fn from_report(report: &EnsembleReport) -> Self {
        let mut files = BTreeMap::new();
        files.insert(
            "report.json".into(),
            serde_json::to_string_pretty(report).expect("report serializes") + "\n",
        );
        files.insert("estimates.csv".into(), estimates_csv(report));
        files.insert("variance.csv".into(), variance_csv(report));
        files.insert("oracle.csv".into(), oracle_csv(report));
        files.insert("martingale.csv".into(), martingale_csv(report));
        files.insert("plot_report.py".into(), PLOT_SCRIPT.to_string());
        Self { files }
    }

    /// Adds `acceptance.csv` and replaces `report.json` with the full outcome.
    pub fn from_bench(outcome: &BenchOutcome) -> Self {
        let mut b = Self::from_report(&outcome.report);
        b.files.insert(
            "report.json".into(),
            serde_json::to_string_pretty(outcome).expect("outcome serializes") + "\n",
        );
        b.files.insert("acceptance.csv".into(), acceptance_csv(outcome));
        b
    }

    pub fn write_to(&self, dir: &Path) -> io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, text) in &self.files {
            std::fs::write(dir.join(name), text)?;
        }
        Ok(())
    }
}

pub fn estimates_csv(report: &EnsembleReport) -> String {
    let mut rows: Vec<_> = report.estimates.iter().collect();
    rows.sort_by(|a, b| {
        (a.estimator.label(), &a.parameter, &a.observable)
            .cmp(&(b.estimator.label(), &b.parameter, &b.observable))
            .then(a.t.total_cmp(&b.t))
    });
    let mut out = String::from("estimator,parameter,observable,t,mean,var,se,ci_lo,ci_hi\n");
    for r in rows {
        row(
            &mut out,
            &[
                r.estimator.label().to_string(),
                r.parameter.clone(),
                r.observable.clone(),
                num(r.t),
                num(r.mean),
                num(r.variance),
                num(r.std_error),
                num(r.ci_lo),
                num(r.ci_hi),
            ],
        );
    }
    out
}

pub fn variance_csv(report: &EnsembleReport) -> String {
    let mut rows: Vec<_> = report.estimates.iter().collect();
    rows.sort_by(|a, b| {
        (a.estimator.label(), &a.parameter, &a.observable)
            .cmp(&(b.estimator.label(), &b.parameter, &b.observable))
            .then(a.t.total_cmp(&b.t))
    });
    let mut out = String::from("estimator,parameter,observable,t,var\n");
    for r in rows {
        row(
            &mut out,
            &[
                r.estimator.label().to_string(),
                r.parameter.clone(),
                r.observable.clone(),
                num(r.t),
                num(r.variance),
            ],
        );
    }
    out
}

pub fn oracle_csv(report: &EnsembleReport) -> String {
    let mut out = String::from("quantity,parameter,observable,value\n");
    for o in &report.oracle {
        row(
            &mut out,
            &[
                o.quantity.clone(),
                o.parameter.clone().unwrap_or_default(),
                o.observable.clone().unwrap_or_default(),
                num(o.value),
            ],
        );
    }
    for (i, v) in report.centering.values.iter().enumerate() {
        if let Some(v) = v {
            row(&mut out, &[format!("centering_{}", report.centering.source), String::new(), i.to_string(), num(*v)]);
        }
    }
    out
}

pub fn martingale_csv(report: &EnsembleReport) -> String {
    let mut out = String::from("quantity,t,mean,se,mean_square,within_3se\n");
    for m in &report.martingale {
        row(
            &mut out,
            &[
                m.quantity.clone(),
                num(m.t),
                num(m.mean),
                num(m.std_error),
                num(m.mean_square),
                m.within_3se.to_string(),
            ],
        );
    }
    out
}

pub fn acceptance_csv(outcome: &BenchOutcome) -> String {
    let mut out = String::from("criterion,value,threshold,pass\n");
    for c in &outcome.criteria {
        row(&mut out, &[c.name.clone(), num(c.value), c.threshold.clone(), c.pass.to_string()]);
    }
    out
}

/// Checkpointed state and accumulators of a single trajectory, one row per
/// checkpoint.
pub fn trajectory_csv(
    net: &ReactionNetwork,
    params_of_interest: &[usize],
    observable_names: &[String],
    rec: &TrajectoryRecord,
) -> String {
    let pnames: Vec<&str> = params_of_interest.iter().map(|&k| net.parameters()[k].as_str()).collect();
    let mut header = vec!["t".to_string()];
    header.extend(net.species().iter().cloned());
    header.extend(pnames.iter().map(|p| format!("Z[{p}]")));
    header.extend(pnames.iter().map(|p| format!("intZ[{p}]")));
    header.extend((0..net.n_reactions()).map(|j| format!("R{}", j + 1)));
    header.extend((0..net.n_reactions()).map(|j| format!("intA[R{}]", j + 1)));
    header.extend(observable_names.iter().map(|o| format!("intF[{o}]")));
    for o in observable_names {
        header.extend(pnames.iter().map(|p| format!("intFZ[{o},{p}]")));
    }
    let mut out = String::new();
    row(&mut out, &header);
    for cp in &rec.checkpoints {
        let a = &cp.acc;
        let mut cells = vec![num(cp.time)];
        cells.extend(cp.state.iter().map(|v| v.to_string()));
        cells.extend(a.weight.iter().map(|&v| num(v)));
        cells.extend(a.int_weight.iter().map(|&v| num(v)));
        cells.extend(a.jumps.iter().map(|v| v.to_string()));
        cells.extend(a.int_intensity.iter().map(|&v| num(v)));
        cells.extend(a.int_obs.iter().map(|&v| num(v)));
        cells.extend(a.int_obs_weight.iter().map(|&v| num(v)));
        row(&mut out, &cells);
    }
    out
}

/// Human-readable pass/fail table.
pub fn acceptance_table(outcome: &BenchOutcome) -> String {
    let mut s = String::new();
    let w = outcome.criteria.iter().map(|c| c.name.len()).max().unwrap_or(0);
    for c in &outcome.criteria {
        let _ = writeln!(
            s,
            "{}  {:<w$}  {:>14.6e}  {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.threshold
        );
    }
    s
}

const PLOT_SCRIPT: &str = r#"#!/usr/bin/env python3
"""Two-panel figure: estimate against t, and log-log variance against t.

Usage: python3 plot_report.py [output.png]
Reads estimates.csv from the directory containing this script.
"""
import csv
import sys
from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

here = Path(__file__).resolve().parent
series = defaultdict(list)
with open(here / "estimates.csv", newline="") as fh:
    for r in csv.DictReader(fh):
        key = (r["estimator"], r["parameter"], r["observable"])
        series[key].append((float(r["t"]), float(r["mean"]), float(r["se"]), float(r["var"])))

fig, (left, right) = plt.subplots(1, 2, figsize=(11, 4.2))
for (est, par, obs), rows in sorted(series.items()):
    rows.sort()
    t = [r[0] for r in rows]
    mean = [r[1] for r in rows]
    half = [1.96 * r[2] for r in rows]
    var = [r[3] for r in rows]
    label = f"{est} d pi({obs})/d {par}"
    left.errorbar(t, mean, yerr=half, marker="o", capsize=3, label=label)
    right.loglog(t, var, marker="o", label=est)
left.set_xlabel("t")
left.set_ylabel("estimated sensitivity")
left.legend(fontsize="small")
right.set_xlabel("t")
right.set_ylabel("variance")
right.legend(fontsize="small")
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else here / "report.png", dpi=150)
"#;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_have_seventeen_significant_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(-49.382716049382715), "-4.9382716049382715e1");
        for x in [1.0 / 3.0, 2.0f64.sqrt(), -1e-300, 6.02e23] {
            assert_eq!(num(x).parse::<f64>().unwrap(), x);
        }
    }

    #[test]
    fn csv_quoting() {
        assert_eq!(field("a,b"), "\"a,b\"");
        assert_eq!(field("plain"), "plain");
        assert_eq!(field("say \"hi\""), "\"say \"\"hi\"\"\"");
    }
}
