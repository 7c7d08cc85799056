//! Run configuration: TOML files layered over per-experiment defaults, with
//! `KEY=VALUE` overrides on top.

use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use infoqgan_core::finance::SyntheticPair;
use infoqgan_core::generator::Readout;
use infoqgan_core::nn::StepSchedule;
use infoqgan_core::training::{Mode, TrainConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Experiment {
    Circle2d,
    Square2d,
    Finance,
}

impl Experiment {
    pub fn readout(self) -> Readout {
        match self {
            Experiment::Circle2d | Experiment::Square2d => Readout::Point2d,
            Experiment::Finance => Readout::Distribution,
        }
    }

    pub fn is_2d(self) -> bool {
        self.readout() == Readout::Point2d
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Circle2d => "circle2d",
            Experiment::Square2d => "square2d",
            Experiment::Finance => "finance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub lr: f64,
    pub step: usize,
    pub gamma: f64,
}

impl Schedule {
    fn build(&self, name: &str) -> Result<StepSchedule> {
        StepSchedule::new(self.lr, self.step, self.gamma).with_context(|| format!("invalid {name}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetConfig {
    pub points: usize,
    pub center: (f64, f64),
    /// Disk radius (circle2d).
    pub radius: f64,
    /// Square side (square2d).
    pub side: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FinanceConfig {
    /// CSV with `date,asset,close`. Synthetic assets are used when absent.
    pub prices: Option<PathBuf>,
    /// Asset given weight `alpha`; defaults to the first id in sort order.
    pub asset_a: Option<String>,
    /// Partner asset; defaults to the second id in sort order.
    pub asset_b: Option<String>,
    pub synthetic: SyntheticPair,
    pub synthetic_days: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Generated outputs written to samples.csv.
    pub samples: usize,
    /// Leading generated points compared with the target cloud.
    pub ks_samples: usize,
    /// Latent draws per correlation estimate.
    pub correlation_draws: usize,
    pub sweep_segments: usize,
    pub sweep_draws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub mode: Mode,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub epochs: usize,
    pub layers: usize,
    pub noise_dim: usize,
    pub code_dim: usize,
    pub batch_fraction: f64,
    /// Optimizer steps per epoch come from splitting the epoch's subset into
    /// chunks of this size; 0 means one step on the whole subset.
    pub minibatch_size: usize,
    pub beta: f64,
    pub init_scale: f64,
    pub generator_lr: Schedule,
    pub discriminator_lr: Schedule,
    pub mine_lr: Schedule,
    pub target: TargetConfig,
    pub finance: FinanceConfig,
    pub eval: EvalConfig,
}

impl RunConfig {
    /// Settings of the published experiment tables for `experiment` and `mode`.
    pub fn defaults(experiment: Experiment, mode: Mode) -> Self {
        let info = mode == Mode::Infoqgan;
        let sched = |lr, gamma| Schedule { lr, step: 30, gamma };
        let (epochs, layers, beta, g_lr, d_lr, m_lr) = match experiment {
            Experiment::Circle2d => (300, 20, 0.5, sched(0.001, 0.7), sched(0.0003, 0.85), sched(0.001, 0.7)),
            Experiment::Square2d => (300, 5, 0.1, sched(0.001, 0.7), sched(0.0003, 0.85), sched(0.001, 0.7)),
            Experiment::Finance => (450, 5, 0.15, sched(0.0004, 0.7), sched(0.00004, 0.7), sched(0.001, 0.7)),
        };
        let (noise_dim, code_dim) = match (experiment, info) {
            (Experiment::Finance, true) => (3, 1),
            (Experiment::Finance, false) => (4, 0),
            (_, true) => (3, 2),
            (_, false) => (5, 0),
        };
        // Step granularity and init spread were tuned per experiment.
        let (minibatch_size, init_scale) = match experiment {
            Experiment::Circle2d => (16, std::f64::consts::PI),
            Experiment::Square2d => (16, 0.25),
            Experiment::Finance => (4, 0.25),
        };
        let center = match experiment {
            Experiment::Circle2d => (0.3, 0.3),
            _ => (0.5, 0.5),
        };
        Self {
            experiment,
            mode,
            seed: 0,
            out_dir: PathBuf::from(format!("runs/{experiment}-{}", mode_name(mode))),
            epochs,
            layers,
            noise_dim,
            code_dim,
            batch_fraction: 0.25,
            minibatch_size,
            beta: if info { beta } else { 0.0 },
            init_scale,
            generator_lr: g_lr,
            discriminator_lr: d_lr,
            mine_lr: m_lr,
            target: TargetConfig {
                points: 2000,
                center,
                radius: 0.25,
                side: 0.5,
            },
            finance: FinanceConfig {
                prices: None,
                asset_a: None,
                asset_b: None,
                synthetic: SyntheticPair {
                    mu_a: 0.0010,
                    sigma_a: 0.018,
                    mu_b: 0.0020,
                    sigma_b: 0.035,
                    cov: -0.3 * 0.018 * 0.035,
                },
                synthetic_days: 2800,
            },
            eval: EvalConfig {
                samples: 2000,
                ks_samples: 500,
                correlation_draws: 2000,
                sweep_segments: 16,
                sweep_draws: 512,
            },
        }
    }

    /// Resolves a configuration from an optional TOML file plus overrides.
    /// `experiment` and `mode` are read first (overrides win over the file,
    /// circle2d / infoqgan when neither says) and select the defaults that
    /// every other key is layered over.
    pub fn load(file: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match file {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot read config {}", path.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("invalid TOML in {}", path.display()))?
            }
            None => toml::Table::new(),
        };
        for ov in overrides {
            apply_override(&mut table, ov)?;
        }
        let pick = |key: &str, fallback: &str| -> Result<String> {
            match table.get(key) {
                None => Ok(fallback.to_string()),
                Some(toml::Value::String(s)) => Ok(s.clone()),
                Some(other) => bail!("{key} must be a string, got {other}"),
            }
        };
        let experiment: Experiment = toml::Value::String(pick("experiment", "circle2d")?)
            .try_into()
            .map_err(|_| anyhow!("experiment must be one of circle2d, square2d, finance"))?;
        let mode: Mode = toml::Value::String(pick("mode", "infoqgan")?)
            .try_into()
            .map_err(|_| anyhow!("mode must be qgan or infoqgan"))?;

        let toml::Value::Table(mut merged) = toml::Value::try_from(Self::defaults(experiment, mode))? else {
            unreachable!("a struct serializes to a table")
        };
        merge(&mut merged, table);
        let cfg: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e: toml::de::Error| anyhow!("bad config: {}", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.train_config().map(|_| ())?;
        if self.mode == Mode::Qgan && self.code_dim != 0 {
            bail!("code_dim: qgan runs have no code entries, got {}", self.code_dim);
        }
        let qubits = self.noise_dim + self.code_dim;
        let expected = match self.experiment.readout() {
            Readout::Point2d => None,
            Readout::Distribution => Some(4),
        };
        if let Some(q) = expected {
            if qubits != q {
                bail!("noise_dim + code_dim: finance runs need {q} latent entries (16 bins), got {qubits}");
            }
        }
        if self.eval.ks_samples > self.eval.samples {
            bail!("eval.ks_samples ({}) exceeds eval.samples ({})", self.eval.ks_samples, self.eval.samples);
        }
        Ok(())
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig {
            mode: self.mode,
            readout: self.experiment.readout(),
            layers: self.layers,
            noise_dim: self.noise_dim,
            code_dim: self.code_dim,
            epochs: self.epochs,
            batch_fraction: self.batch_fraction,
            minibatch_size: (self.minibatch_size > 0).then_some(self.minibatch_size),
            beta: self.beta,
            generator_schedule: self.generator_lr.build("generator_lr")?,
            discriminator_schedule: self.discriminator_lr.build("discriminator_lr")?,
            mine_schedule: self.mine_lr.build("mine_lr")?,
            init_scale: self.init_scale,
            seed: self.seed,
        };
        cfg.validate().context("invalid training settings")?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

pub fn mode_name(mode: Mode) -> &'static str {
    match mode {
        Mode::Qgan => "qgan",
        Mode::Infoqgan => "infoqgan",
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Sets a dotted key. The value is parsed as a TOML literal and falls back
/// to a bare string, so `mode=qgan` and `target.center=[0.4, 0.4]` both work.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override {spec:?} is not KEY=VALUE"))?;
    let key = key.trim();
    let value = format!("v = {}", raw.trim())
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key {key:?} is malformed");
    }
    let mut node = table;
    for part in &parts[..parts.len() - 1] {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override {key:?}: {part} is not a table"))?;
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}
