//! The four commands as library calls, so tests can drive them without a
//! subprocess.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use log::info;
use serde::{Deserialize, Serialize};

use infoqgan_core::eval::{self, FrontierPoint, KsResult, SweepSegment};
use infoqgan_core::finance::{self, PortfolioDistribution, ReturnSeries};
use infoqgan_core::generator::{GeneratorSpec, Readout};
use infoqgan_core::seed::{stream, Stream};
use infoqgan_core::targets::{self, PointCloud};
use infoqgan_core::training::{sample_outputs, EpochMetrics, Trainer};

use crate::checkpoint::Checkpoint;
use crate::config::{Experiment, RunConfig};
use crate::io::{self, fmt_f64, Table};

/// Price a synthetic series starts from when written as closes.
const SYNTHETIC_START_PRICE: f64 = 100.0;

/// Blend weights of the empirical frontier written next to a finance run.
const FRONTIER_GRID: usize = 101;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
    pub pass: bool,
}

impl From<KsResult> for KsReport {
    fn from(r: KsResult) -> Self {
        Self {
            statistic: r.statistic,
            p_value: r.p_value,
            n1: r.n1,
            n2: r.n2,
            pass: r.passes(),
        }
    }
}

/// Pearson correlation of one latent entry with each output axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub epoch: usize,
    pub latent: usize,
    pub x: f64,
    pub y: f64,
}

/// Training data for one experiment.
pub enum Dataset {
    Points(PointCloud),
    Portfolio {
        a: ReturnSeries,
        b: ReturnSeries,
        sets: Vec<PortfolioDistribution>,
    },
}

impl Dataset {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        match self {
            Dataset::Points(c) => c.points.iter().map(|&(x, y)| vec![x, y]).collect(),
            Dataset::Portfolio { sets, .. } => sets.iter().map(|d| d.bins.clone()).collect(),
        }
    }
}

pub fn target_cloud(cfg: &RunConfig) -> Result<PointCloud> {
    let t = &cfg.target;
    let mut rng = stream(cfg.seed, Stream::Data);
    Ok(match cfg.experiment {
        Experiment::Circle2d => targets::biased_circle(t.points, t.center, t.radius, &mut rng)?,
        Experiment::Square2d => targets::central_square(t.points, t.center, t.side, &mut rng)?,
        Experiment::Finance => bail!("finance runs have no target cloud"),
    })
}

/// The two assets of a finance run, from the price file or synthesized.
pub fn asset_pair(cfg: &RunConfig) -> Result<(ReturnSeries, ReturnSeries)> {
    let f = &cfg.finance;
    let Some(path) = &f.prices else {
        let mut rng = stream(cfg.seed, Stream::Data);
        return Ok(finance::synthetic_assets(&f.synthetic, f.synthetic_days, &mut rng)?);
    };
    if !path.exists() {
        bail!("finance.prices: {} does not exist", path.display());
    }
    let mut all = io::load_prices(path)?;
    let ids: Vec<String> = all.keys().cloned().collect();
    let a_id = f.asset_a.clone().or_else(|| ids.first().cloned());
    let b_id = f.asset_b.clone().or_else(|| ids.iter().find(|i| Some(*i) != a_id.as_ref()).cloned());
    let (Some(a_id), Some(b_id)) = (a_id, b_id) else {
        bail!("{}: need two assets, found {:?}", path.display(), ids);
    };
    let mut take = |id: &str| {
        all.remove(id)
            .ok_or_else(|| anyhow!("{}: no asset {id:?} (have {:?})", path.display(), ids))
    };
    Ok((take(&a_id)?, take(&b_id)?))
}

pub fn build_dataset(cfg: &RunConfig) -> Result<Dataset> {
    if cfg.experiment.is_2d() {
        return Ok(Dataset::Points(target_cloud(cfg)?));
    }
    let (a, b) = asset_pair(cfg)?;
    // Dataset weights draw after any synthetic returns on the same stream
    // would collide, so they get their own offset seed.
    let mut rng = stream(cfg.seed.wrapping_add(1), Stream::Data);
    let sets = finance::build_training_datasets(&a, &b, &mut rng)?;
    Ok(Dataset::Portfolio { a, b, sets })
}

/// Latent entries whose influence on the output is reported: the codes for
/// InfoQGAN, and the same number of trailing noise entries for the baseline.
pub fn tracked_latents(cfg: &RunConfig) -> Vec<usize> {
    let q = cfg.noise_dim + cfg.code_dim;
    let count = match (cfg.code_dim, cfg.experiment) {
        (0, Experiment::Finance) => 1,
        (0, _) => 2,
        (c, _) => c,
    };
    (q.saturating_sub(count)..q).collect()
}

pub fn correlations(
    generator: &GeneratorSpec,
    latents: &[usize],
    draws: usize,
    epoch: usize,
    rng: &mut impl rand::Rng,
) -> Result<Vec<Correlation>> {
    let m = eval::latent_output_correlations(generator, latents, draws, rng)?;
    Ok(latents
        .iter()
        .zip(m)
        .map(|(&latent, r)| Correlation {
            epoch,
            latent,
            x: r[0],
            y: r[1],
        })
        .collect())
}

fn write_correlations(path: &Path, rows: &[Correlation]) -> Result<()> {
    let mut t = Table::new(&["epoch", "latent", "corr_x", "corr_y"])?;
    for c in rows {
        t.row([c.epoch.to_string(), c.latent.to_string(), fmt_f64(c.x), fmt_f64(c.y)])?;
    }
    t.save(path)
}

/// Everything a training run produced, also written under `out_dir`.
pub struct TrainOutcome {
    pub history: Vec<EpochMetrics>,
    pub generator: GeneratorSpec,
    pub ks: Option<KsReport>,
    pub correlations: Vec<Correlation>,
    pub frontier: Option<Vec<FrontierPoint>>,
}

pub fn checkpoint_path(out: &Path, epoch: usize) -> PathBuf {
    out.join("checkpoints").join(format!("epoch_{epoch:04}.json"))
}

pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let out = &cfg.out_dir;
    io::write_atomic(&out.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    let dataset = build_dataset(cfg)?;
    match &dataset {
        Dataset::Points(cloud) => io::write_points(&out.join("target.csv"), &cloud.points)?,
        Dataset::Portfolio { sets, .. } => io::write_datasets(&out.join("datasets.csv"), sets)?,
    }

    let tracked = tracked_latents(cfg);
    let mut eval_rng = stream(cfg.seed, Stream::Eval);
    let mut corr_rows = Vec::new();
    let mut trainer = Trainer::new(cfg.train_config()?, dataset.rows())?;
    let history = trainer.run(|t, epoch| {
        let ck = Checkpoint::capture(t, cfg, epoch);
        ck.save(&checkpoint_path(out, epoch)).map_err(to_core)?;
        ck.save(&out.join("checkpoint.json")).map_err(to_core)?;
        if cfg.experiment.is_2d() {
            let rows = correlations(&t.generator, &tracked, cfg.eval.correlation_draws, epoch, &mut eval_rng)
                .map_err(to_core)?;
            corr_rows.extend(rows);
        }
        info!("{} {} epoch {epoch}", cfg.experiment, crate::config::mode_name(cfg.mode));
        Ok(())
    })?;
    io::write_metrics(&out.join("metrics.csv"), &history)?;

    let generator = trainer.generator.clone();
    let samples = sample_outputs(&generator, cfg.eval.samples, &mut eval_rng)?;
    let mut outcome = TrainOutcome {
        history,
        generator,
        ks: None,
        correlations: corr_rows,
        frontier: None,
    };
    match &dataset {
        Dataset::Points(cloud) => {
            let pts: Vec<(f64, f64)> = samples.iter().map(|o| (o[0], o[1])).collect();
            io::write_points(&out.join("samples.csv"), &pts)?;
            let ks: KsReport = eval::ks2d_points(&pts[..cfg.eval.ks_samples], &cloud.points)?.into();
            io::write_json(&out.join("ks.json"), &ks)?;
            write_correlations(&out.join("correlations.csv"), &outcome.correlations)?;
            outcome.ks = Some(ks);
        }
        Dataset::Portfolio { a, b, .. } => {
            let rows: Vec<(f64, &[f64])> = samples.iter().enumerate().map(|(i, s)| (i as f64, s.as_slice())).collect();
            io::write_distributions(&out.join("samples.csv"), "draw", &rows)?;
            let alphas: Vec<f64> = (0..FRONTIER_GRID).map(|k| k as f64 / (FRONTIER_GRID - 1) as f64).collect();
            io::write_frontier(&out.join("empirical_frontier.csv"), &finance::empirical_frontier(a, b, &alphas)?)?;
            let code = *tracked.last().expect("finance tracks one latent");
            let segs = eval::code_sweep(
                &outcome.generator,
                code,
                cfg.eval.sweep_segments,
                cfg.eval.sweep_draws,
                &mut eval_rng,
            )?;
            let frontier = write_sweep(out, &segs, Readout::Distribution)?;
            outcome.frontier = frontier;
        }
    }
    Ok(outcome)
}

fn to_core(e: anyhow::Error) -> infoqgan_core::Error {
    infoqgan_core::Error::Config(format!("{e:#}"))
}

/// Writes sweep results: `frontier.csv` and `sweep_histograms.csv` for a
/// distribution readout, `sweep_clouds.csv` for a point readout.
fn write_sweep(out: &Path, segs: &[SweepSegment], readout: Readout) -> Result<Option<Vec<FrontierPoint>>> {
    match readout {
        Readout::Distribution => {
            let frontier = eval::sweep_frontier(segs)?;
            io::write_frontier(&out.join("frontier.csv"), &frontier)?;
            let means: Vec<(f64, Vec<f64>)> = segs.iter().map(|s| (s.code, s.mean_output())).collect();
            let rows: Vec<(f64, &[f64])> = means.iter().map(|(c, m)| (*c, m.as_slice())).collect();
            io::write_distributions(&out.join("sweep_histograms.csv"), "code", &rows)?;
            Ok(Some(frontier))
        }
        Readout::Point2d => {
            let mut t = Table::new(&["segment", "code", "x", "y"])?;
            for (i, s) in segs.iter().enumerate() {
                for (x, y) in s.cloud() {
                    t.row([i.to_string(), fmt_f64(s.code), fmt_f64(x), fmt_f64(y)])?;
                }
            }
            t.save(&out.join("sweep_clouds.csv"))?;
            Ok(None)
        }
    }
}

pub struct SweepArgs {
    pub checkpoint: PathBuf,
    pub code_index: Option<usize>,
    pub segments: usize,
    pub draws: usize,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn sweep(args: &SweepArgs) -> Result<Vec<SweepSegment>> {
    let ck = Checkpoint::load(&args.checkpoint)?;
    let generator = ck.generator.to_spec()?;
    let code = args.code_index.unwrap_or(generator.qubits() - 1);
    let mut rng = stream(args.seed, Stream::Eval);
    let segs = eval::code_sweep(&generator, code, args.segments, args.draws, &mut rng)
        .with_context(|| format!("sweep of {}", args.checkpoint.display()))?;
    write_sweep(&args.out, &segs, generator.readout())?;
    Ok(segs)
}

/// KS test of a samples file against a target file or a configured cloud.
pub fn eval_files(samples: &Path, target: Option<&Path>, cfg: &RunConfig, out: &Path) -> Result<KsReport> {
    let pts = io::read_points(samples)?;
    let target = match target {
        Some(t) => io::read_points(t)?,
        None => target_cloud(cfg)?.points,
    };
    let ks: KsReport = eval::ks2d_points(&pts, &target)?.into();
    io::write_json(&out.join("ks.json"), &ks)?;
    Ok(ks)
}

/// Writes the experiment's input data: the target cloud, or synthetic
/// prices plus the training datasets.
pub fn gen_data(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let out = &cfg.out_dir;
    match build_dataset(cfg)? {
        Dataset::Points(cloud) => {
            let p = out.join("target.csv");
            io::write_points(&p, &cloud.points)?;
            Ok(vec![p])
        }
        Dataset::Portfolio { a, b, sets } => {
            let mut written = Vec::new();
            if cfg.finance.prices.is_none() {
                let p = out.join("prices.csv");
                io::write_prices(&p, &[&a, &b], SYNTHETIC_START_PRICE)?;
                written.push(p);
            }
            let p = out.join("datasets.csv");
            io::write_datasets(&p, &sets)?;
            written.push(p);
            Ok(written)
        }
    }
}
