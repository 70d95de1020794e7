//! Experiment configuration: one JSON document, unknown keys rejected.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelConfig, PolicyPmf};
use crate::codec::{BoundaryMode, DecoderEngine, PlanOptions, RunOptions};
use crate::error::{Error, Result};
use crate::optimizer::OptimizerOptions;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlanConfig {
    pub n: usize,
    pub blocks: usize,
    pub epsilon: f64,
    pub rate_fraction: f64,
    pub relay_rate_fraction: Option<f64>,
    pub boundary: BoundaryMode,
    pub decoder: DecoderEngine,
    /// Upper bound on any codebook size; `null` leaves sizes unclamped.
    pub enumeration_cap: Option<u64>,
    pub typicality_epsilon: Option<f64>,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            n: 2000,
            blocks: 5,
            epsilon: 0.02,
            rate_fraction: 0.5,
            relay_rate_fraction: None,
            boundary: BoundaryMode::GenieReset,
            decoder: DecoderEngine::Ensemble,
            enumeration_cap: None,
            typicality_epsilon: None,
        }
    }
}

impl PlanConfig {
    pub fn plan_options(&self) -> PlanOptions {
        PlanOptions {
            relay_rate_fraction: self.relay_rate_fraction,
            enumeration_cap: self.enumeration_cap,
        }
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            engine: self.decoder,
            boundary: self.boundary,
            typicality_epsilon: self.typicality_epsilon,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("plan: {m}")));
        if self.n == 0 {
            return bad("n must be at least 1");
        }
        if self.blocks < 2 {
            return bad("blocks must be at least 2");
        }
        if !(self.epsilon >= 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in [0, 1)");
        }
        if !(self.rate_fraction.is_finite() && self.rate_fraction > 0.0) {
            return bad("rate_fraction must be positive");
        }
        if let Some(r) = self.relay_rate_fraction {
            if !(r.is_finite() && r > 0.0) {
                return bad("relay_rate_fraction must be positive");
            }
        }
        if self.enumeration_cap == Some(0) {
            return bad("enumeration_cap must be at least 1");
        }
        if let Some(e) = self.typicality_epsilon {
            if !(e.is_finite() && e >= 0.0) {
                return bad("typicality_epsilon must be non-negative");
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Relative paths resolve against `ENERGY_RELAY_OUT_DIR` when set.
    pub path: Option<PathBuf>,
    pub format: Format,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub channel: ChannelConfig,
    #[serde(default)]
    pub policy: Option<Vec<[f64; 4]>>,
    #[serde(default)]
    pub plan: PlanConfig,
    #[serde(default)]
    pub optimizer: OptimizerOptions,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
}

fn default_trials() -> usize {
    200
}

impl ExperimentConfig {
    /// Parses and validates. Errors carry a line number into `text`.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            Error::InvalidConfig(format!("line {}, column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate().map_err(|e| {
            let msg = match e {
                Error::InvalidConfig(m) => m,
                other => other.to_string(),
            };
            let section = msg.split(':').next().unwrap_or_default();
            match line_of_key(text, section) {
                Some(line) => Error::InvalidConfig(format!("line {line}: {msg}")),
                None => Error::InvalidConfig(msg),
            }
        })?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.channel
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("channel: {e}")))?;
        self.policy()
            .map_err(|e| Error::InvalidConfig(format!("policy: {e}")))?;
        self.plan.validate()?;
        self.optimizer
            .validate()
            .map_err(|e| Error::InvalidConfig(format!("optimizer: {e}")))?;
        if let Some(s) = &self.sweep {
            SweepParameter::parse(&s.parameter)
                .map_err(|e| Error::InvalidConfig(format!("sweep: {e}")))?;
            if s.values.is_empty() {
                return Err(Error::InvalidConfig("sweep: values must not be empty".into()));
            }
        }
        Ok(())
    }

    pub fn policy(&self) -> Result<Option<PolicyPmf>> {
        self.policy
            .as_ref()
            .map(|rows| PolicyPmf::new(rows.clone(), &self.channel))
            .transpose()
    }
}

/// 1-based line of the first `"key"` occurrence.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    if key.is_empty() {
        return None;
    }
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParameter {
    Crossover,
    BatteryCapacity,
    EnergyCost,
    RateFraction,
    BlockLength,
}

impl SweepParameter {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "p" => SweepParameter::Crossover,
            "U" => SweepParameter::BatteryCapacity,
            "m" => SweepParameter::EnergyCost,
            "rate_fraction" => SweepParameter::RateFraction,
            "n" => SweepParameter::BlockLength,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown sweep parameter {other:?} (expected p, U, m, rate_fraction or n)"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepParameter::Crossover => "p",
            SweepParameter::BatteryCapacity => "U",
            SweepParameter::EnergyCost => "m",
            SweepParameter::RateFraction => "rate_fraction",
            SweepParameter::BlockLength => "n",
        }
    }

    /// `cfg` with the parameter set to `value`.
    pub fn apply(self, cfg: &ExperimentConfig, value: f64) -> Result<ExperimentConfig> {
        let mut out = cfg.clone();
        let integer = || -> Result<usize> {
            if value.fract() == 0.0 && (0.0..1e15).contains(&value) {
                Ok(value as usize)
            } else {
                Err(Error::InvalidConfig(format!(
                    "sweep: {} needs integer values, got {value}",
                    self.name()
                )))
            }
        };
        let ch = &cfg.channel;
        match self {
            SweepParameter::Crossover => out.channel = ch.with_crossover(value)?,
            SweepParameter::BatteryCapacity => {
                out.channel = ChannelConfig::new(integer()?, ch.energy_cost(), ch.crossover())?
            }
            SweepParameter::EnergyCost => {
                out.channel = ChannelConfig::new(ch.battery_capacity(), integer()?, ch.crossover())?
            }
            SweepParameter::RateFraction => out.plan.rate_fraction = value,
            SweepParameter::BlockLength => out.plan.n = integer()?,
        }
        out.sweep = None;
        out.validate()?;
        Ok(out)
    }
}
