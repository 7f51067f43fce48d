//! End-to-end train and sample runs writing artifacts to a directory.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::{json, Value};

use crate::data::{energy_distance, histogram_tv, Samples, TargetSpec};
use crate::error::{Error, Result};
use crate::finite::tv_distance;
use crate::io::{scatter_svg, torus_histogram, write_grid_csv, write_loss_csv, write_samples_csv, Bounds, CsvState};
use crate::nn::{config_hash, load_checkpoint, save_checkpoint, ScoreNet};
use crate::train::{infer, seed_stream, streams, train, AnyEngine, Engine, RunConfig, Sampler, TrajectoryBatch};

pub const MODEL_FILE: &str = "model.ckpt";
pub const LOSS_FILE: &str = "loss.csv";
pub const TRAIN_MANIFEST: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const DENSITY_FILE: &str = "density.csv";
pub const SAMPLE_MANIFEST: &str = "sample_manifest.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Bins per axis of torus histograms.
pub const TORUS_BINS: usize = 32;
/// Target samples drawn for torus histogram references.
pub const TORUS_REFERENCE: usize = 200_000;

/// Commit the binary was built from.
pub const GIT_HASH: &str = match option_env!("DMM_GIT_HASH") {
    Some(h) => h,
    None => "unknown",
};

/// Hash of the sections that define a trained model: everything but the
/// inference grid and the output directory.
pub fn model_hash(cfg: &RunConfig) -> Result<String> {
    config_hash(&json!({
        "schema_version": cfg.schema_version,
        "engine": cfg.engine,
        "target": cfg.target,
        "train": cfg.train,
    }))
}

/// Artifacts and summary of a training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainManifest {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub git_hash: String,
    pub metrics: Value,
    pub artifacts: Vec<PathBuf>,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Trains the configured model and writes the final checkpoint, periodic
/// checkpoints, the loss history and a manifest into `out`.
pub fn train_run(cfg: &RunConfig, out: &Path) -> Result<TrainManifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let hash = model_hash(cfg)?;
    let engine = AnyEngine::build(cfg)?;
    let net = engine.init_net(cfg)?;
    let mut rng = seed_stream(cfg.train.seed, streams::TRAIN);
    let epochs = cfg.train.epochs;
    let model = out.join(MODEL_FILE);
    let ckpt_dir = out.join(CHECKPOINT_DIR);
    let mut artifacts = Vec::new();
    let mut checkpoint = |epoch: usize, net: &ScoreNet| -> Result<()> {
        if epoch == epochs {
            save_checkpoint(&model, net, &hash, epoch)?;
        } else {
            std::fs::create_dir_all(&ckpt_dir)?;
            let p = ckpt_dir.join(format!("epoch-{epoch:06}.ckpt"));
            save_checkpoint(&p, net, &hash, epoch)?;
            artifacts.push(p);
        }
        Ok(())
    };
    let start = Instant::now();
    let outcome = match &engine {
        AnyEngine::Finite(e) => train(e, net, &cfg.train, &mut rng, &mut checkpoint)?,
        AnyEngine::Diffusion(e) => train(e, net, &cfg.train, &mut rng, &mut checkpoint)?,
        AnyEngine::Jump(e) => train(e, net, &cfg.train, &mut rng, &mut checkpoint)?,
    };
    let seconds = start.elapsed().as_secs_f64();
    let loss = out.join(LOSS_FILE);
    write_loss_csv(&loss, &outcome.history)?;
    let h = &outcome.history;
    let tail = &h[h.len().saturating_sub(100)..];
    let metrics = json!({
        "epochs": h.len(),
        "parameters": outcome.net.params().len(),
        "first_loss": h.first(),
        "final_loss": h.last(),
        "mean_loss_last_100": tail.iter().sum::<f64>() / tail.len().max(1) as f64,
        "train_seconds": seconds,
    });
    artifacts.splice(0..0, [model.clone(), crate::nn::sidecar_path(&model), loss]);
    let manifest = TrainManifest {
        command: "train".into(),
        config: cfg.clone(),
        config_hash: hash,
        seed: cfg.train.seed,
        git_hash: GIT_HASH.into(),
        metrics,
        artifacts,
    };
    write_json(&out.join(TRAIN_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Overrides applied by `dmm sample`.
#[derive(Debug, Clone, Default)]
pub struct SampleOptions {
    pub checkpoint: Option<PathBuf>,
    pub n: Option<usize>,
    pub steps: Option<usize>,
    pub snapshots: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SampleManifest {
    pub command: String,
    pub config: RunConfig,
    pub config_hash: String,
    pub seed: u64,
    pub git_hash: String,
    pub checkpoint: PathBuf,
    pub samples: usize,
    pub steps: usize,
    pub snapshots: Vec<f64>,
    pub metrics: Value,
    pub artifacts: Vec<PathBuf>,
}

/// Runs the backward sampler from a checkpoint and writes the snapshot CSV,
/// one SVG per snapshot and a manifest with distances to the target.
pub fn sample_run(cfg: &RunConfig, out: &Path, opts: &SampleOptions) -> Result<SampleManifest> {
    let mut cfg = cfg.clone();
    if let Some(n) = opts.n {
        cfg.grid.samples = n;
    }
    if let Some(l) = opts.steps {
        cfg.grid.steps = l;
    }
    if let Some(s) = &opts.snapshots {
        cfg.grid.snapshots = Some(s.clone());
    }
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let ckpt = opts.checkpoint.clone().unwrap_or_else(|| out.join(MODEL_FILE));
    let hash = model_hash(&cfg)?;
    let (net, meta) = load_checkpoint(&ckpt)?;
    if meta.config_hash != hash {
        return Err(Error::HashMismatch { expected: meta.config_hash, got: hash });
    }
    let engine = AnyEngine::build(&cfg)?;
    let grid = cfg.time_grid()?;
    let n = cfg.grid.samples;
    let snapshots = cfg.snapshot_times();
    let mut rng = seed_stream(cfg.train.seed, streams::INFER);
    let mut eval = seed_stream(cfg.train.seed, streams::EVAL);
    let start = Instant::now();
    let (artifacts, metrics) = match &engine {
        AnyEngine::Finite(e) => {
            let tb = run_infer(&grid, e, &net, n, &mut rng)?;
            let mut m = stats_json(&tb, start);
            let steps = snapshot_steps(&tb, &snapshots);
            let art = emit(out, e.space.dims, &tb, &steps, |states| finite_points(states, e.num_states()))?;
            if n > 0 {
                let p0 = cfg.target.finite_probs()?;
                let mut emp = vec![0.0; p0.len()];
                for &x in tb.terminal() {
                    emp[x] += 1.0 / n as f64;
                }
                m["tv_to_target"] = json!(tv_distance(&emp, &p0)?);
            }
            (art, m)
        }
        AnyEngine::Diffusion(e) => {
            let tb = run_infer(&grid, e, &net, n, &mut rng)?;
            let mut m = stats_json(&tb, start);
            let steps = snapshot_steps(&tb, &snapshots);
            let art = emit(out, e.dim(), &tb, &steps, continuous_points)?;
            if n > 0 {
                let target = cfg.target.sample(n, &mut eval)?.into_continuous()?;
                let term = tb.terminal();
                m["energy_distance"] = json!(energy_distance(term, &target)?);
                let pos = term.iter().filter(|x| x.iter().all(|v| *v > 0.0)).count();
                m["positive_fraction"] = json!(pos as f64 / n as f64);
            }
            (art, m)
        }
        AnyEngine::Jump(e) => {
            let tb = run_infer(&grid, e, &net, n, &mut rng)?;
            let mut m = stats_json(&tb, start);
            let steps = snapshot_steps(&tb, &snapshots);
            let mut art = emit(out, 2, &tb, &steps, |s: &[[f64; 2]]| (s.to_vec(), Bounds::UNIT))?;
            if n > 0 {
                let density = out.join(DENSITY_FILE);
                write_grid_csv(&density, &torus_histogram(tb.terminal(), TORUS_BINS))?;
                art.push(density);
                m["histogram_tv"] = json!(torus_tv(&cfg.target, tb.terminal(), &mut eval)?);
            }
            (art, m)
        }
    };
    let manifest = SampleManifest {
        command: "sample".into(),
        config: cfg.clone(),
        config_hash: hash,
        seed: cfg.train.seed,
        git_hash: GIT_HASH.into(),
        checkpoint: ckpt,
        samples: n,
        steps: grid.steps,
        snapshots,
        metrics,
        artifacts,
    };
    write_json(&out.join(SAMPLE_MANIFEST), &manifest)?;
    Ok(manifest)
}

/// Histogram TV on `[0, 1)²` between `points` and [`TORUS_REFERENCE`] target draws.
pub fn torus_tv(target: &TargetSpec, points: &[[f64; 2]], rng: &mut impl rand::Rng) -> Result<f64> {
    let reference = match target.sample(TORUS_REFERENCE, rng)? {
        Samples::Continuous(v) => v,
        Samples::Discrete(_) => return Err(Error::Config("torus metric needs a continuous target".into())),
    };
    let pts: Vec<Vec<f64>> = points.iter().map(|p| p.to_vec()).collect();
    histogram_tv(&pts, &reference, TORUS_BINS, 0.0, 1.0)
}

fn run_infer<E>(
    grid: &crate::time::TimeGrid,
    engine: &E,
    net: &ScoreNet,
    n: usize,
    rng: &mut rand_chacha::ChaCha8Rng,
) -> Result<TrajectoryBatch<<E as Engine>::State>>
where
    E: Engine + Sampler<ScoreNet, State = <E as Engine>::State>,
{
    let q0 = |r: &mut dyn rand::RngCore| engine.prior_sample(r);
    infer(grid, engine, net, &q0, n, rng)
}

fn stats_json<S>(tb: &TrajectoryBatch<S>, start: Instant) -> Value {
    json!({
        "jumps": tb.stats.jumps,
        "proposals": tb.stats.proposals,
        "sup_violations": tb.stats.sup_violations,
        "sample_seconds": start.elapsed().as_secs_f64(),
    })
}

/// Stored step nearest each snapshot time, in the order given.
pub fn snapshot_steps<S>(tb: &TrajectoryBatch<S>, snapshots: &[f64]) -> Vec<usize> {
    snapshots.iter().map(|t| tb.nearest(*t)).collect()
}

fn continuous_points(states: &[Vec<f64>]) -> (Vec<[f64; 2]>, Bounds) {
    let n = states.len().max(1) as f64;
    let pts: Vec<[f64; 2]> = states
        .iter()
        .enumerate()
        .map(|(i, x)| if x.len() >= 2 { [x[0], x[1]] } else { [x[0], (i as f64 + 0.5) / n] })
        .collect();
    let b = Bounds::fit(&pts);
    (pts, b)
}

fn finite_points(states: &[usize], num_states: usize) -> (Vec<[f64; 2]>, Bounds) {
    let mut freq = vec![0.0; num_states];
    for &x in states {
        freq[x] += 1.0 / states.len() as f64;
    }
    let pts: Vec<[f64; 2]> = freq.iter().enumerate().map(|(x, f)| [x as f64, *f]).collect();
    let top = freq.iter().fold(0.0_f64, |a, b| a.max(*b)).max(1e-12);
    (pts, Bounds { x: (-0.5, num_states as f64 - 0.5), y: (0.0, 1.05 * top) })
}

/// Snapshot CSV plus one SVG per snapshot (none when there are no samples).
fn emit<S: CsvState>(
    out: &Path,
    dim: usize,
    tb: &TrajectoryBatch<S>,
    steps: &[usize],
    project: impl Fn(&[S]) -> (Vec<[f64; 2]>, Bounds),
) -> Result<Vec<PathBuf>> {
    let csv = out.join(SAMPLES_FILE);
    write_samples_csv(&csv, dim, tb, steps)?;
    let mut art = vec![csv];
    if tb.states.first().is_none_or(|s| s.is_empty()) {
        return Ok(art);
    }
    for (k, &l) in steps.iter().enumerate() {
        let (pts, bounds) = project(&tb.states[l]);
        let t = tb.times[l];
        let path = out.join(format!("snapshot_{k:02}_t{t:.3}.svg"));
        std::fs::write(&path, scatter_svg(&pts, bounds, &format!("backward time {t:.3}")))?;
        art.push(path);
    }
    Ok(art)
}
