use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Args;
use doemarket::coordinator::{
    run_clearing, sample_dominated_points, ClearingOptions, ClearingResult, IntegrityReport, Mode,
    RobustnessReport,
};
use doemarket::netmodel::{Case, NodeId, Thresholds};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::ModeArg;

pub const MANIFEST: &str = "manifest.json";
pub const METRICS: &str = "metrics.json";

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    pub case: PathBuf,
    #[arg(long, value_enum, default_value = "admm")]
    pub mode: ModeArg,
    /// Output directory; the environment variable applies when the flag is absent.
    #[arg(long, env = "DOEMARKET_OUT", default_value = "runs/latest")]
    pub out: PathBuf,
    #[arg(long, allow_negative_numbers = true)]
    pub rho: Option<f64>,
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub scenarios: Option<usize>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Uniform convergence threshold for all four residuals.
    #[arg(long, allow_negative_numbers = true)]
    pub chi: Option<f64>,
    /// Seed for the envelope robustness sampling.
    #[arg(long, default_value_t = 2024)]
    pub seed: u64,
    /// Injection profiles drawn inside the envelopes; 0 skips the check.
    #[arg(long, default_value_t = 100)]
    pub samples: usize,
    /// Grant a huge constant envelope instead of negotiating one.
    #[arg(long)]
    pub no_doe: bool,
    /// Skip the per-agent trace and message log.
    #[arg(long)]
    pub no_agent_trace: bool,
}

/// Run configuration after overrides, checked like any loaded case.
pub struct RunConfig {
    pub case: Case,
    pub options: ClearingOptions,
    pub hash: String,
}

impl RunConfig {
    pub fn from_args(args: &RunArgs) -> Result<Self> {
        let mut case = Case::load(&args.case)?;
        let m = &mut case.market;
        if let Some(v) = args.rho {
            m.rho = v;
        }
        if let Some(v) = args.alpha {
            m.alpha = v;
        }
        if let Some(v) = args.scenarios {
            m.scenarios = v;
        }
        if let Some(v) = args.max_iters {
            m.max_iters = v;
        }
        if let Some(v) = args.chi {
            m.thresholds = Thresholds::uniform(v);
        }
        case.validate().context("invalid override")?;

        let options = ClearingOptions {
            mode: args.mode.into(),
            doe_enabled: !args.no_doe,
            record_agents: !args.no_agent_trace,
        };
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(&case)?);
        hasher.update(format!("{}:{}", options.mode, options.doe_enabled));
        let hash = format!("{:x}", hasher.finalize());
        Ok(RunConfig { case, options, hash })
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub case: String,
    pub mode: Mode,
    pub doe_enabled: bool,
    pub config_hash: String,
    pub iterations: usize,
    pub max_iters: usize,
    pub converged: bool,
    pub seed: u64,
}

/// Scalar outcome of a run, the input of `compare`.
#[derive(Debug, Serialize, Deserialize)]
pub struct Metrics {
    pub iterations: usize,
    pub converged: bool,
    pub objective: f64,
    pub network_cost: f64,
    pub total_surplus: f64,
    pub surpluses: Vec<(NodeId, f64)>,
    pub voltage_violations: usize,
    pub line_overloads: usize,
    pub max_voltage_violation: f64,
    pub loss_energy: f64,
    pub messages_sent: usize,
    pub messages_censored: usize,
}

#[derive(Serialize)]
struct Integrity<'a> {
    #[serde(flatten)]
    report: &'a IntegrityReport,
    robustness: Option<RobustnessReport>,
    max_breakdown_residual: Option<f64>,
}

#[derive(Serialize)]
struct TraceRow {
    iteration: usize,
    r_es: f64,
    r_et: f64,
    r_ds: f64,
    r_dt: f64,
    messages_sent: usize,
    messages_censored: usize,
    threshold: f64,
    exactness_gap: f64,
    reduced_accuracy: String,
}

#[derive(Serialize)]
struct BreakdownRow {
    i: NodeId,
    t: usize,
    component: &'static str,
    value: f64,
}

pub fn cmd_run(args: &RunArgs) -> Result<ExitCode> {
    let cfg = RunConfig::from_args(args)?;
    let result = run_clearing(&cfg.case, &cfg.options)?;
    let robustness = if cfg.options.doe_enabled && args.samples > 0 {
        Some(sample_dominated_points(&cfg.case, &result.envelope.allocation, args.samples, args.seed)?)
    } else {
        None
    };
    write_artifacts(&args.out, args, &cfg, &result, robustness)
        .with_context(|| format!("writing run artifacts to {}", args.out.display()))?;

    println!(
        "{} {} after {} iterations: objective {:.6}, {} messages sent, {} voltage violations",
        cfg.options.mode,
        if result.converged { "converged" } else { "stopped" },
        result.iterations,
        result.objective,
        result.messages_sent(),
        result.integrity.voltage_violations,
    );
    if result.converged {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("warning: iteration limit {} reached without convergence", cfg.case.market.max_iters);
        Ok(ExitCode::from(2))
    }
}

fn write_artifacts(
    out: &Path,
    args: &RunArgs,
    cfg: &RunConfig,
    result: &ClearingResult,
    robustness: Option<RobustnessReport>,
) -> Result<()> {
    fs::create_dir_all(out)?;
    let manifest = Manifest {
        case: args.case.display().to_string(),
        mode: result.mode,
        doe_enabled: result.doe_enabled,
        config_hash: cfg.hash.clone(),
        iterations: result.iterations,
        max_iters: cfg.case.market.max_iters,
        converged: result.converged,
        seed: args.seed,
    };
    write_json(&out.join(MANIFEST), &manifest)?;

    let metrics = Metrics {
        iterations: result.iterations,
        converged: result.converged,
        objective: result.objective,
        network_cost: result.network_cost,
        total_surplus: result.total_surplus(),
        surpluses: result.prosumers.iter().copied().zip(result.surpluses.iter().copied()).collect(),
        voltage_violations: result.integrity.voltage_violations,
        line_overloads: result.integrity.line_overloads,
        max_voltage_violation: result.integrity.max_voltage_violation,
        loss_energy: result.integrity.loss_energy,
        messages_sent: result.messages_sent(),
        messages_censored: result.messages_censored(),
    };
    write_json(&out.join(METRICS), &metrics)?;
    write_json(
        &out.join("integrity.json"),
        &Integrity {
            report: &result.integrity,
            robustness,
            max_breakdown_residual: result.breakdown.as_ref().map(|b| b.max_residual()),
        },
    )?;

    write_csv(
        &out.join("trace.csv"),
        result.trace.iter().map(|r| TraceRow {
            iteration: r.iteration,
            r_es: r.r_es,
            r_et: r.r_et,
            r_ds: r.r_ds,
            r_dt: r.r_dt,
            messages_sent: r.messages_sent,
            messages_censored: r.messages_censored,
            threshold: r.threshold,
            exactness_gap: r.exactness_gap,
            reduced_accuracy: r.reduced_accuracy.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(";"),
        }),
    )?;
    write_csv(&out.join("agent_trace.csv"), result.agent_trace.iter())?;
    write_csv(&out.join("doe_report.csv"), result.doe_trace.iter())?;
    let breakdown = result.breakdown.iter().flat_map(|b| {
        b.components.iter().zip(&result.prosumers).flat_map(|(per_t, &i)| {
            per_t.iter().enumerate().flat_map(move |(t, c)| {
                c.named().into_iter().map(move |(component, value)| BreakdownRow { i, t, component, value })
            })
        })
    });
    write_csv(&out.join("breakdown.csv"), breakdown)?;
    write_csv(&out.join("powerflow.csv"), result.flows.records(&cfg.case.network, 0))?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(file, value)?;
    Ok(())
}

/// Writes one CSV; an empty row set leaves an empty file.
fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
