//! Run configuration: every tunable of the pipeline as `key=value` pairs.
//!
//! Files hold one `key=value` per line; `#` starts a comment. Unknown keys
//! are errors.

use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{DatasetSpec, OrbitConfig};
use crate::error::{Error, Result};
use crate::evaluation::MaskConfig;
use crate::mesh::{TessellationConfig, Vec3};
use crate::network::ModelConfig;
use crate::raster::{Material, SceneSpec, Shape};
use crate::training::{AdamConfig, LossConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub steps: usize,
    pub batch_size: usize,
    /// Seeds initialization, frame order and crops.
    pub seed: u64,
    /// Square crop side; frames no larger than this are used whole.
    pub crop: usize,
    /// Probability that a crop is centred on a silhouette pixel.
    pub crop_silhouette_prob: f64,
    /// 0 writes only the final checkpoint.
    pub checkpoint_every: usize,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            steps: 2000,
            batch_size: 2,
            seed: 7,
            crop: 128,
            crop_silhouette_prob: 0.8,
            checkpoint_every: 500,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSpec,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub tess: TessellationConfig,
    pub data_seed: u64,
    pub orbit: OrbitConfig,
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub optim: AdamConfig,
    pub train: TrainSettings,
    pub mask: MaskConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneSpec::new(Shape::Icosphere(1)),
            frames: 200,
            width: 128,
            height: 128,
            tess: TessellationConfig::default(),
            data_seed: 7,
            orbit: OrbitConfig::default(),
            model: ModelConfig::default(),
            loss: LossConfig::default(),
            optim: AdamConfig::default(),
            train: TrainSettings::default(),
            mask: MaskConfig::default(),
        }
    }
}

fn parse_vec3(s: &str) -> Option<Vec3> {
    let v: Vec<f64> = s.split(',').map(|t| t.trim().parse().ok()).collect::<Option<_>>()?;
    (v.len() == 3).then(|| Vec3::new(v[0], v[1], v[2]))
}

fn parse_rgb(s: &str) -> Option<[f64; 3]> {
    parse_vec3(s).map(|v| [v.x, v.y, v.z])
}

pub fn parse_res(s: &str) -> Option<(usize, usize)> {
    let (w, h) = s.split_once('x')?;
    Some((w.trim().parse().ok()?, h.trim().parse().ok()?))
}

impl RunConfig {
    /// Sets one key. Errors name the key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let value = value.trim();
        let bad = || Error::Config(format!("invalid value {value:?} for key {key}"));
        macro_rules! num {
            () => {
                value.parse().map_err(|_| bad())?
            };
        }
        match key {
            "scene" => self.scene.shape = value.parse().map_err(|_| bad())?,
            "material" => {
                self.scene.material = match value {
                    "flat" => Material::Flat([0.9, 0.6, 0.3]),
                    "checker" => Material::Checker {
                        scale: 4.0,
                        a: [0.9, 0.6, 0.3],
                        b: [0.3, 0.5, 0.8],
                        offset: [0.0; 3],
                    },
                    _ => return Err(bad()),
                }
            }
            "albedo" => self.scene.material = Material::Flat(parse_rgb(value).ok_or_else(bad)?),
            "light_dir" => self.scene.light_dir = parse_vec3(value).ok_or_else(bad)?.normalize(),
            "ambient" => self.scene.ambient = num!(),
            "scene_seed" => self.scene.rng_seed = num!(),
            "frames" => self.frames = num!(),
            "res" => (self.width, self.height) = parse_res(value).ok_or_else(bad)?,
            "tess_level" => self.tess.level = num!(),
            "alpha" => self.tess.alpha = num!(),
            "data_seed" => self.data_seed = num!(),
            "orbit_radius" => self.orbit.radius = num!(),
            "orbit_radius_jitter" => self.orbit.radius_jitter = num!(),
            "orbit_elevation" => self.orbit.elevation_max = num!(),
            "fov_deg" => self.orbit.vertical_fov = value.parse::<f64>().map_err(|_| bad())?.to_radians(),
            "epsilon" => self.loss.epsilon = num!(),
            "k_fraction" => self.loss.k_fraction = num!(),
            "lambda_rr" => self.loss.lambda_rr = num!(),
            "lambda_shade" => self.loss.lambda_shade = num!(),
            "lambda_percep" => self.loss.lambda_percep = num!(),
            "loss_preset" => {
                let eps_k = (self.loss.epsilon, self.loss.k_fraction);
                self.loss = match value {
                    "paper" => LossConfig::paper(),
                    "desk" => LossConfig::desk(),
                    _ => return Err(bad()),
                };
                (self.loss.epsilon, self.loss.k_fraction) = eps_k;
            }
            "lr" => self.optim.lr = num!(),
            "weight_decay" => self.optim.weight_decay = num!(),
            "beta1" => self.optim.beta1 = num!(),
            "beta2" => self.optim.beta2 = num!(),
            "steps" => self.train.steps = num!(),
            "batch_size" => self.train.batch_size = num!(),
            "seed" => self.train.seed = num!(),
            "crop" => self.train.crop = num!(),
            "crop_silhouette_prob" => self.train.crop_silhouette_prob = num!(),
            "checkpoint_every" => self.train.checkpoint_every = num!(),
            "mask_radius" => self.mask.radius = num!(),
            "mask_angle_deg" => self.mask.angle_deg = num!(),
            _ => {
                if !self.model.set(key, value)? {
                    return Err(Error::Config(format!("unknown config key {key:?}")));
                }
            }
        }
        Ok(())
    }

    /// Applies `key=value` lines; `source` names the origin in errors.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("{source}:{}: expected key=value, got {line:?}", no + 1)))?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("{source}:{}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = RunConfig::default();
        c.apply_text(&text, &path.display().to_string())?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        TessellationConfig::new(self.tess.level, self.tess.alpha)?;
        self.model.validate()?;
        self.loss.validate()?;
        self.optim.validate()?;
        if self.train.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.train.crop_silhouette_prob) {
            return Err(Error::Config("crop_silhouette_prob outside [0, 1]".into()));
        }
        if self.train.crop % self.model.divisor() != 0 || self.train.crop == 0 {
            return Err(Error::Config(format!(
                "crop {} must be a positive multiple of {} (working resolution divisibility)",
                self.train.crop,
                self.model.divisor()
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("res must be nonzero".into()));
        }
        Ok(())
    }

    pub fn dataset_spec(&self) -> DatasetSpec {
        DatasetSpec {
            scene: self.scene.clone(),
            frames: self.frames,
            seed: self.data_seed,
            tess: self.tess,
            width: self.width,
            height: self.height,
            orbit: self.orbit.clone(),
        }
    }

    /// Model, loss, optimizer and training keys as `key=value` text.
    pub fn training_kv(&self) -> String {
        let mut s = self.model.to_kv();
        let l = &self.loss;
        let o = &self.optim;
        let t = &self.train;
        for (k, v) in [
            ("epsilon", format!("{:?}", l.epsilon)),
            ("k_fraction", format!("{:?}", l.k_fraction)),
            ("lambda_rr", format!("{:?}", l.lambda_rr)),
            ("lambda_shade", format!("{:?}", l.lambda_shade)),
            ("lambda_percep", format!("{:?}", l.lambda_percep)),
            ("lr", format!("{:?}", o.lr)),
            ("weight_decay", format!("{:?}", o.weight_decay)),
            ("beta1", format!("{:?}", o.beta1)),
            ("beta2", format!("{:?}", o.beta2)),
            ("steps", t.steps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("seed", t.seed.to_string()),
            ("crop", t.crop.to_string()),
            ("crop_silhouette_prob", format!("{:?}", t.crop_silhouette_prob)),
            ("checkpoint_every", t.checkpoint_every.to_string()),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
