use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use crate::run::{Metrics, METRICS};

#[derive(Args, Debug)]
pub struct CompareArgs {
    /// Baseline run directory.
    pub a: PathBuf,
    /// Run directory compared against the baseline.
    pub b: PathBuf,
    /// Where to write the CSV table.
    #[arg(long, default_value = "compare.csv")]
    pub csv: PathBuf,
}

/// One line of the table; `delta = b − a`.
#[derive(Debug, Serialize)]
pub struct CompareRow {
    pub metric: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub delta: Option<f64>,
}

fn load(dir: &Path) -> Result<Metrics> {
    let path = dir.join(METRICS);
    if !path.is_file() {
        bail!("missing artifact {}", path.display());
    }
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn scalars(m: &Metrics) -> Vec<(String, f64)> {
    let mut v = vec![
        ("voltage_violations".to_string(), m.voltage_violations as f64),
        ("line_overloads".into(), m.line_overloads as f64),
        ("max_voltage_violation".into(), m.max_voltage_violation),
        ("loss_energy".into(), m.loss_energy),
        ("network_cost".into(), m.network_cost),
        ("objective".into(), m.objective),
        ("total_surplus".into(), m.total_surplus),
        ("messages_sent".into(), m.messages_sent as f64),
        ("messages_censored".into(), m.messages_censored as f64),
        ("iterations".into(), m.iterations as f64),
        ("converged".into(), m.converged as u8 as f64),
    ];
    v.extend(m.surpluses.iter().map(|(i, s)| (format!("surplus_{i}"), *s)));
    v
}

pub fn compare_metrics(a: &Metrics, b: &Metrics) -> Vec<CompareRow> {
    let (sa, sb) = (scalars(a), scalars(b));
    let lookup = |s: &[(String, f64)], k: &str| s.iter().find(|(n, _)| n == k).map(|(_, v)| *v);
    // keep the fixed metrics first, then any surplus only one side has
    let mut seen = BTreeSet::new();
    sa.iter()
        .chain(&sb)
        .filter(|(k, _)| seen.insert(k.clone()))
        .map(|(k, _)| {
            let (va, vb) = (lookup(&sa, k), lookup(&sb, k));
            CompareRow {
                metric: k.clone(),
                a: va,
                b: vb,
                delta: va.zip(vb).map(|(x, y)| y - x),
            }
        })
        .collect()
}

pub fn cmd_compare(args: &CompareArgs) -> Result<()> {
    let rows = compare_metrics(&load(&args.a)?, &load(&args.b)?);

    let mut w = csv::Writer::from_path(&args.csv).with_context(|| format!("creating {}", args.csv.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;

    let cell = |v: Option<f64>| match v {
        None => "-".to_string(),
        Some(x) if x.fract() == 0.0 && x.abs() < 1e15 => format!("{x:.0}"),
        Some(x) => format!("{x:.6}"),
    };
    let width = rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    println!("{:<width$}  {:>16}  {:>16}  {:>16}", "metric", "a", "b", "delta");
    for r in &rows {
        println!(
            "{:<width$}  {:>16}  {:>16}  {:>16}",
            r.metric,
            cell(r.a),
            cell(r.b),
            cell(r.delta)
        );
    }
    println!("a = {}\nb = {}", args.a.display(), args.b.display());
    Ok(())
}
