//! Minibatch training loop, checkpoints and ablation variants.

pub mod adam;
pub mod loss;

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use adam::{adam_step, AdamConfig, OptimState};
pub use loss::{loss_percep, loss_rr, loss_shade, top_k, total_loss, LossBreakdown, LossConfig, LossVars};

use crate::config::RunConfig;
use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::evaluation::{silhouette_mask, MaskConfig};
use crate::network::{checkpoint, forward, frame_batch, init_params, Params};
use crate::raster::GBufferFrame;
use crate::tensor::Graph;

pub const LOSS_TRACE: &str = "loss.txt";
pub const FINAL_CHECKPOINT: &str = "model.nist";

pub fn checkpoint_name(step: usize) -> String {
    format!("step_{step:06}.nist")
}

/// One line of the loss trace: `step total rr shade percep`.
pub fn trace_line(step: usize, l: &LossBreakdown) -> String {
    format!("{step} {:.8e} {:.8e} {:.8e} {:.8e}", l.total, l.rr, l.shade, l.percep)
}

#[derive(Clone, Debug)]
pub struct TrainSummary {
    pub steps: usize,
    pub last: Option<LossBreakdown>,
    pub model: PathBuf,
    pub checkpoints: Vec<PathBuf>,
    pub seconds: f64,
}

/// Crop sampler: epoch-shuffled frame order plus silhouette-biased windows.
struct Sampler<'a> {
    frames: &'a [GBufferFrame],
    /// Silhouette pixel indices per frame.
    edges: Vec<Vec<usize>>,
    order: Vec<usize>,
    cursor: usize,
    rng: ChaCha8Rng,
    crop: (usize, usize),
    silhouette_prob: f64,
}

impl<'a> Sampler<'a> {
    fn new(frames: &'a [GBufferFrame], cfg: &RunConfig) -> Self {
        let seam = MaskConfig {
            radius: 0,
            angle_deg: cfg.mask.angle_deg,
        };
        let edges = frames
            .iter()
            .map(|f| {
                silhouette_mask(&f.coverage, &f.gnormal, &seam)
                    .iter()
                    .enumerate()
                    .filter_map(|(i, &m)| m.then_some(i))
                    .collect()
            })
            .collect();
        let (w, h) = (frames[0].width(), frames[0].height());
        Sampler {
            frames,
            edges,
            order: Vec::new(),
            cursor: 0,
            rng: ChaCha8Rng::seed_from_u64(cfg.train.seed ^ 0x5eed_c0de),
            crop: (cfg.train.crop.min(w), cfg.train.crop.min(h)),
            silhouette_prob: cfg.train.crop_silhouette_prob,
        }
    }

    fn next_index(&mut self) -> usize {
        if self.cursor == self.order.len() {
            self.order = (0..self.frames.len()).collect();
            self.order.shuffle(&mut self.rng);
            self.cursor = 0;
        }
        self.cursor += 1;
        self.order[self.cursor - 1]
    }

    fn window(&mut self, i: usize) -> (usize, usize) {
        let f = &self.frames[i];
        let (w, h) = (f.width(), f.height());
        let (cw, ch) = self.crop;
        let edges = &self.edges[i];
        if !edges.is_empty() && self.rng.gen_bool(self.silhouette_prob) {
            let p = edges[self.rng.gen_range(0..edges.len())];
            let (x, y) = (p % w, p / w);
            (x.saturating_sub(cw / 2).min(w - cw), y.saturating_sub(ch / 2).min(h - ch))
        } else {
            (self.rng.gen_range(0..=w - cw), self.rng.gen_range(0..=h - ch))
        }
    }

    /// Distinct frames for one batch (an epoch boundary may fall inside).
    fn batch(&mut self, size: usize) -> Result<Vec<GBufferFrame>> {
        let mut picked: Vec<usize> = Vec::with_capacity(size);
        while picked.len() < size {
            let i = self.next_index();
            if !picked.contains(&i) {
                picked.push(i);
            }
        }
        let (cw, ch) = self.crop;
        picked
            .into_iter()
            .map(|i| {
                let (x0, y0) = self.window(i);
                self.frames[i].crop(x0, y0, cw, ch)
            })
            .collect()
    }
}

/// One forward/backward/update. Returns the loss before the update.
pub fn train_step(
    params: &mut Params<f32>,
    state: &mut OptimState,
    frames: &[&GBufferFrame],
    cfg: &RunConfig,
    step: usize,
) -> Result<LossBreakdown> {
    let batch = frame_batch(frames)?;
    let mut g = Graph::<f32>::new();
    let bound = params.bind(&mut g);
    let color = g.input(batch.color.clone());
    let geom = g.input(batch.geom);
    let feats = forward(&mut g, &bound, &params.config, color, geom)?;
    let losses = total_loss(&mut g, feats.output, &batch.label, &batch.color, &cfg.loss)?;
    let values = losses.values(&g);
    if !values.total.is_finite() {
        return Err(Error::NonFiniteLoss { step });
    }
    g.backward(losses.total)?;
    let grads: Vec<_> = bound.vars().iter().map(|&v| g.grad(v)).collect();
    if grads.iter().flatten().any(|t| !t.all_finite()) {
        return Err(Error::NonFiniteLoss { step });
    }
    adam_step(params, &grads, state, &cfg.optim)?;
    Ok(values)
}

/// Trains on in-memory frames, writing the trace and checkpoints to
/// `out_dir`. `on_step` sees every trace line.
pub fn train_frames(
    frames: &[GBufferFrame],
    cfg: &RunConfig,
    out_dir: &Path,
    mut on_step: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainSummary> {
    cfg.validate()?;
    if frames.is_empty() {
        return Err(Error::InvalidArgument("training set has no frames".into()));
    }
    if cfg.train.batch_size > frames.len() {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {} training frames",
            cfg.train.batch_size,
            frames.len()
        )));
    }
    let (w, h) = (frames[0].width(), frames[0].height());
    if frames.iter().any(|f| f.width() != w || f.height() != h) {
        return Err(Error::InvalidArgument("training frames differ in size".into()));
    }
    cfg.model.check_resolution(cfg.train.crop.min(w), cfg.train.crop.min(h))?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let cfg_path = out_dir.join("train_config.txt");
    std::fs::write(&cfg_path, cfg.training_kv()).map_err(|e| Error::io(&cfg_path, e))?;
    let trace_path = out_dir.join(LOSS_TRACE);
    let mut trace = std::io::BufWriter::new(std::fs::File::create(&trace_path).map_err(|e| Error::io(&trace_path, e))?);

    let start = Instant::now();
    let mut params = init_params(&cfg.model, cfg.train.seed)?;
    let mut state = OptimState::new(&params);
    let mut sampler = Sampler::new(frames, cfg);
    let mut checkpoints = Vec::new();
    let mut last = None;
    for step in 1..=cfg.train.steps {
        let batch = sampler.batch(cfg.train.batch_size)?;
        let refs: Vec<&GBufferFrame> = batch.iter().collect();
        let l = train_step(&mut params, &mut state, &refs, cfg, step)?;
        let line = trace_line(step, &l);
        writeln!(trace, "{line}").map_err(|e| Error::io(&trace_path, e))?;
        on_step(step, &l);
        last = Some(l);
        if cfg.train.checkpoint_every > 0 && step % cfg.train.checkpoint_every == 0 {
            trace.flush().map_err(|e| Error::io(&trace_path, e))?;
            let p = out_dir.join(checkpoint_name(step));
            checkpoint::save(&p, &params)?;
            checkpoints.push(p);
        }
    }
    trace.flush().map_err(|e| Error::io(&trace_path, e))?;
    let model = out_dir.join(FINAL_CHECKPOINT);
    checkpoint::save(&model, &params)?;
    Ok(TrainSummary {
        steps: cfg.train.steps,
        last,
        model,
        checkpoints,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Loads every frame of `manifest` and trains on them.
pub fn train(
    manifest: &Manifest,
    cfg: &RunConfig,
    out_dir: &Path,
    on_step: impl FnMut(usize, &LossBreakdown),
) -> Result<TrainSummary> {
    let frames = (0..manifest.len())
        .map(|i| manifest.load_frame(i))
        .collect::<Result<Vec<_>>>()?;
    train_frames(&frames, cfg, out_dir, on_step)
}

/// Variants compared by the ablation study.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Ablation {
    Full,
    NoDeform,
    NoWarp,
    NoPercep,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::Full, Ablation::NoDeform, Ablation::NoWarp, Ablation::NoPercep];

    /// `cfg` with this component removed.
    pub fn apply(self, cfg: &RunConfig) -> RunConfig {
        let mut c = cfg.clone();
        match self {
            Ablation::Full => {}
            Ablation::NoDeform => c.model.deform_module = false,
            Ablation::NoWarp => c.model.feature_warp = false,
            Ablation::NoPercep => c.loss.lambda_percep = 0.0,
        }
        c
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::NoDeform => "no_deform",
            Ablation::NoWarp => "no_warp",
            Ablation::NoPercep => "no_percep",
        })
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.to_string() == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation {s:?} (full, no_deform, no_warp, no_percep)")))
    }
}
