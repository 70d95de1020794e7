//! Command-line front end.
//!
//! Exit codes: `0` success, `1` I/O or internal failure, `2` invalid
//! configuration or arguments (including unknown sweep parameters), `3`
//! optimizer grid budget exceeded, `4` block plan infeasible or not
//! runnable with the chosen decoder.

pub mod config;
pub mod output;

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use crate::channel::{ChannelConfig, PolicyPmf};
use crate::codec::run_chain_traced;
use crate::codec::trace::write_trace;
use crate::error::{Error, Result};
use crate::markov::{
    build_transition_matrix, check_lemma1, rate_report, receiver_bound_noiseless, steady_state, RateReport,
};
use crate::optimizer::optimize;
use crate::simulator::{draw_messages, plan_for, run_trials, trial_seed, EmpiricalStats, TrialSpec};

pub use config::{ExperimentConfig, Format, PlanConfig, SweepParameter, SweepSpec};
use output::{fmt_f64, long_table, object, write_json, Table};

/// Directory that relative output paths resolve against.
pub const OUT_DIR_ENV: &str = "ENERGY_RELAY_OUT_DIR";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_INVALID_CONFIG: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_PLAN_INFEASIBLE: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "ehrelay", version, about = "Energy-harvesting relay: rates, policy search and coding simulations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON experiment configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output file (stdout when absent).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Overrides `base_seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (all cores when absent).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Transition matrix, steady state and rate bounds of the configured policy.
    Analyze,
    /// Search for the policy maximizing the achievable rate.
    Optimize,
    /// Monte Carlo simulation of the block Markov coding scheme.
    Simulate {
        /// Also write the per-slot trace of the first trial as CSV.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Repeat analysis (and simulation when `trials > 0`) over one parameter.
    Sweep {
        /// One of p, U, m, rate_fraction, n.
        #[arg(long)]
        parameter: Option<String>,
        /// Comma-separated values.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidConfig(_)
        | Error::InvalidPolicy(_)
        | Error::StateOutOfRange { .. }
        | Error::InfeasibleTransmit { .. } => EXIT_INVALID_CONFIG,
        Error::BudgetExceeded { .. } => EXIT_BUDGET,
        Error::InvalidPlan(_) | Error::NoSteadyState | Error::EnumerationLimit { .. } => EXIT_PLAN_INFEASIBLE,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::InvalidConfig(format!("cannot read {}: {e}", path.display())))?;
    ExperimentConfig::from_json(&text).map_err(|e| match e {
        Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn execute(cli: &Cli) -> Result<()> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("--config <path> is required".into()))?;
    let mut cfg = load_config(path)?;
    if let Some(seed) = cli.seed {
        cfg.base_seed = seed;
    }
    if let Some(f) = cli.format {
        cfg.output.format = f;
    }
    if let Some(out) = &cli.out {
        cfg.output.path = Some(out.clone());
    }
    if cli.threads == Some(0) {
        return Err(Error::InvalidConfig("--threads must be at least 1".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Analyze => emit(&cfg, Document::Long(cmd_analyze(&cfg)?)),
        Command::Optimize => emit(&cfg, Document::Long(cmd_optimize(&cfg)?)),
        Command::Simulate { trace } => {
            let doc = cmd_simulate(&cfg)?;
            if let Some(t) = trace {
                write_first_trace(&cfg, &resolve_out(t))?;
            }
            emit(&cfg, Document::Long(doc))
        }
        Command::Sweep { parameter, values } => {
            let mut spec = cfg.sweep.clone();
            if parameter.is_some() || values.is_some() {
                let base = spec.clone();
                spec = Some(SweepSpec {
                    parameter: parameter
                        .clone()
                        .or_else(|| base.as_ref().map(|s| s.parameter.clone()))
                        .ok_or_else(|| Error::InvalidConfig("sweep: --parameter is required".into()))?,
                    values: values
                        .clone()
                        .or_else(|| base.map(|s| s.values))
                        .ok_or_else(|| Error::InvalidConfig("sweep: --values is required".into()))?,
                });
            }
            let spec = spec.ok_or_else(|| {
                Error::InvalidConfig("sweep: no sweep section in the config and no --parameter/--values".into())
            })?;
            let (json, table) = cmd_sweep(&cfg, &spec)?;
            emit(&cfg, Document::Table(json, table))
        }
    })
}

enum Document {
    /// Emitted as long-form CSV when CSV is requested.
    Long(Value),
    Table(Value, Table),
}

fn resolve_out(p: &Path) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if p.is_relative() => Path::new(&dir).join(p),
        _ => p.to_path_buf(),
    }
}

fn emit(cfg: &ExperimentConfig, doc: Document) -> Result<()> {
    let sink: Box<dyn Write> = match &cfg.output.path {
        Some(p) => {
            let p = resolve_out(p);
            if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(parent)?;
            }
            Box::new(BufWriter::new(File::create(&p)?))
        }
        None => Box::new(io::stdout().lock()),
    };
    match (cfg.output.format, doc) {
        (Format::Json, Document::Long(v) | Document::Table(v, _)) => write_json(sink, v),
        (Format::Csv, Document::Long(v)) => long_table(&v).write_csv(sink),
        (Format::Csv, Document::Table(_, t)) => t.write_csv(sink),
    }
}

fn channel_json(ch: &ChannelConfig) -> Value {
    json!({
        "battery_capacity": ch.battery_capacity(),
        "energy_cost": ch.energy_cost(),
        "crossover": ch.crossover(),
    })
}

fn report_json(r: &RateReport) -> Value {
    serde_json::to_value(r).expect("report serializes")
}

pub fn cmd_analyze(cfg: &ExperimentConfig) -> Result<Value> {
    let policy = cfg
        .policy()?
        .ok_or_else(|| Error::InvalidConfig("analyze needs an explicit policy".into()))?;
    let ch = &cfg.channel;
    let p = build_transition_matrix(&policy, ch)?;
    let pi = steady_state(&p).ok();
    let report = rate_report(&policy, ch);
    let per_state: Vec<Value> = policy
        .states()
        .iter()
        .enumerate()
        .map(|(u, s)| {
            json!({
                "state": u,
                "can_transmit": ch.can_transmit_one(u),
                "p_x2_one": s.x2_one(),
                "h_x1_given_x2": s.conditional_entropy_x1_given_x2(),
                "h_x2": s.entropy_x2(),
            })
        })
        .collect();
    Ok(object(vec![
        ("command", json!("analyze")),
        ("channel", channel_json(ch)),
        ("policy", json!(policy.to_rows())),
        ("transition_matrix", json!(p.rows())),
        ("lemma1", json!(check_lemma1(&p))),
        ("steady_state_valid", json!(report.steady_state_valid)),
        ("steady_state", pi.as_ref().map_or(Value::Null, |pi| json!(pi.probs()))),
        ("relay_bound", json!(report.relay_bound)),
        ("receiver_bound", json!(report.receiver_bound)),
        (
            "receiver_bound_noiseless",
            pi.as_ref().map_or(json!(0.0), |pi| json!(receiver_bound_noiseless(&policy, pi))),
        ),
        ("achievable", json!(report.achievable)),
        ("per_state", Value::Array(per_state)),
    ]))
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<Value> {
    let res = optimize(&cfg.channel, &cfg.optimizer)?;
    Ok(object(vec![
        ("command", json!("optimize")),
        ("channel", channel_json(&cfg.channel)),
        ("options", serde_json::to_value(&cfg.optimizer).expect("options serialize")),
        ("feasible", json!(res.feasible)),
        ("best_policy", json!(res.best_policy.to_rows())),
        ("report", report_json(&res.best_report)),
        ("evaluations", json!(res.evaluations)),
        ("stage_trace", serde_json::to_value(&res.stage_trace).expect("trace serializes")),
    ]))
}

/// Explicit policy, or the optimizer's choice for the configured channel.
fn resolve_policy(cfg: &ExperimentConfig) -> Result<(PolicyPmf, &'static str)> {
    match cfg.policy()? {
        Some(p) => Ok((p, "config")),
        None => {
            let res = optimize(&cfg.channel, &cfg.optimizer)?;
            if !res.feasible {
                return Err(Error::NoSteadyState);
            }
            Ok((res.best_policy, "optimized"))
        }
    }
}

fn trial_spec(cfg: &ExperimentConfig, policy: PolicyPmf) -> TrialSpec {
    TrialSpec {
        cfg: cfg.channel,
        policy,
        n: cfg.plan.n,
        blocks: cfg.plan.blocks,
        epsilon: cfg.plan.epsilon,
        rate_fraction: cfg.plan.rate_fraction,
        plan_options: cfg.plan.plan_options(),
        run: cfg.plan.run_options(),
        trials: cfg.trials,
        base_seed: cfg.base_seed,
    }
}

pub fn cmd_simulate(cfg: &ExperimentConfig) -> Result<Value> {
    if cfg.trials == 0 {
        return Err(Error::InvalidConfig("trials must be at least 1 for simulate".into()));
    }
    let (policy, source) = resolve_policy(cfg)?;
    let report = rate_report(&policy, &cfg.channel);
    let spec = trial_spec(cfg, policy.clone());
    let (plan, counts, stats) = run_trials(&spec)?;
    if counts.energy_violations > 0 {
        return Err(Error::Io(format!(
            "internal error: {} energy violations in simulation",
            counts.energy_violations
        )));
    }
    let plan_json = json!({
        "n": plan.n,
        "blocks": plan.blocks,
        "epsilon": plan.epsilon,
        "rate_fraction": cfg.plan.rate_fraction,
        "relay_rate_fraction": cfg.plan.relay_rate_fraction,
        "boundary": cfg.plan.boundary,
        "decoder": cfg.plan.decoder,
        "info_lengths": plan.info_lengths,
        "delta": plan.delta,
        "state_rates": plan.state_rates,
        "state_bits": plan.state_bits(),
        "relay_rate": plan.relay_rate,
        "relay_bits": plan.relay_bits(),
        "transmitter_rate": plan.transmitter_rate(),
        "clamped": plan.clamped,
        "within_packing_bound": plan.within_packing_bound,
    });
    Ok(object(vec![
        ("command", json!("simulate")),
        ("channel", channel_json(&cfg.channel)),
        ("policy_source", json!(source)),
        ("policy", json!(policy.to_rows())),
        ("report", report_json(&report)),
        ("steady_state", json!(plan.pi.probs())),
        ("plan", plan_json),
        ("trials", json!(cfg.trials)),
        ("base_seed", json!(cfg.base_seed)),
        ("stats", serde_json::to_value(&stats).expect("stats serialize")),
        ("counts", serde_json::to_value(&counts).expect("counts serialize")),
    ]))
}

fn write_first_trace(cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let (policy, _) = resolve_policy(cfg)?;
    let spec = trial_spec(cfg, policy);
    let plan = plan_for(&spec)?;
    let seed = trial_seed(cfg.base_seed, 0);
    let messages = draw_messages(&plan, seed);
    let (_, rows) = run_chain_traced(&plan, &spec.policy, &spec.cfg, seed, &messages, &spec.run)?;
    if let Some(parent) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    write_trace(BufWriter::new(File::create(path)?), &rows)
}

/// Sweep CSV columns, in order. `receiver_error` is the end-to-end rate
/// (the receiver's final decision is wrong); `receiver_layer_error` counts
/// only blocks the relay decoded correctly.
pub const SWEEP_COLUMNS: [&str; 17] = [
    "parameter",
    "value",
    "mode",
    "steady_state_valid",
    "relay_bound",
    "receiver_bound",
    "achievable_rate",
    "relay_error",
    "relay_error_half_width",
    "receiver_error",
    "receiver_error_half_width",
    "receiver_layer_error",
    "receiver_layer_error_half_width",
    "receiver_ambiguity",
    "incomplete_codeword",
    "collision",
    "energy_violations",
];

/// One row per value. Error columns stay empty when `trials` is 0 or the
/// point has no positive achievable rate.
pub fn cmd_sweep(cfg: &ExperimentConfig, spec: &SweepSpec) -> Result<(Value, Table)> {
    let param = SweepParameter::parse(&spec.parameter)?;
    if spec.values.is_empty() {
        return Err(Error::InvalidConfig("sweep: values must not be empty".into()));
    }
    let mode = if cfg.policy.is_some() { "fixed_policy" } else { "reoptimize" };
    let mut table = Table::new(&SWEEP_COLUMNS);
    let mut rows = Vec::new();
    for &value in &spec.values {
        let point = param.apply(cfg, value)?;
        let policy = match point.policy()? {
            Some(p) => p,
            None => optimize(&point.channel, &point.optimizer)?.best_policy,
        };
        let report = rate_report(&policy, &point.channel);
        let stats: Option<EmpiricalStats> = if point.trials > 0 && report.steady_state_valid && report.achievable > 0.0 {
            let (_, counts, stats) = run_trials(&trial_spec(&point, policy.clone()))?;
            if counts.energy_violations > 0 {
                return Err(Error::Io("internal error: energy violations in simulation".into()));
            }
            Some(stats)
        } else {
            None
        };
        let rate = |f: fn(&EmpiricalStats) -> f64| stats.as_ref().map_or(f64::NAN, f);
        let cells = [
            rate(|s| s.relay_error.rate),
            rate(|s| s.relay_error.half_width),
            rate(|s| s.end_to_end_error.rate),
            rate(|s| s.end_to_end_error.half_width),
            rate(|s| s.receiver_error.rate),
            rate(|s| s.receiver_error.half_width),
            rate(|s| s.receiver_ambiguity.rate),
            rate(|s| s.incomplete_codeword.rate),
            rate(|s| s.collision.rate),
        ];
        let mut row = vec![
            param.name().to_string(),
            fmt_f64(value),
            mode.to_string(),
            report.steady_state_valid.to_string(),
            fmt_f64(report.relay_bound),
            fmt_f64(report.receiver_bound),
            fmt_f64(report.achievable),
        ];
        row.extend(cells.iter().map(|&c| fmt_f64(c)));
        row.push(stats.as_ref().map_or(String::new(), |s| s.energy_violations.to_string()));
        table.push(row);
        rows.push(json!({
            "value": value,
            "policy": policy.to_rows(),
            "report": report_json(&report),
            "stats": stats.as_ref().map(|s| serde_json::to_value(s).expect("stats serialize")),
        }));
    }
    let doc = object(vec![
        ("command", json!("sweep")),
        ("parameter", json!(param.name())),
        ("mode", json!(mode)),
        ("channel", channel_json(&cfg.channel)),
        ("trials", json!(cfg.trials)),
        ("base_seed", json!(cfg.base_seed)),
        ("rows", Value::Array(rows)),
    ]);
    Ok((doc, table))
}
