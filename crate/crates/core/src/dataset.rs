//! Seeded orbit-camera datasets on disk.
//!
//! Layout: `<root>/manifest.txt` and `<root>/frame_%05d/<channel>.pfm`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::{tessellate_phong, TessellationConfig, Vec3};
use crate::raster::scene::render_pair;
use crate::raster::{Camera, GBufferFrame, SceneSpec};

/// Orbit around the origin with per-frame jitter.
#[derive(Clone, Debug, PartialEq)]
pub struct OrbitConfig {
    pub radius: f64,
    pub radius_jitter: f64,
    /// Elevation is uniform in `[-max, max]` radians.
    pub elevation_max: f64,
    /// Look-at point is jittered uniformly in a cube of this half-size.
    pub target_jitter: f64,
    pub vertical_fov: f64,
    pub near: f64,
    pub far: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        OrbitConfig {
            radius: 3.6,
            radius_jitter: 0.4,
            elevation_max: 0.6,
            target_jitter: 0.12,
            vertical_fov: 40f64.to_radians(),
            near: 0.1,
            far: 10.0,
        }
    }
}

impl OrbitConfig {
    /// Camera for frame `index` of the path seeded by `seed`.
    pub fn camera(&self, seed: u64, index: usize, width: usize, height: usize) -> Result<Camera> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index as u64);
        let radius = self.radius + self.radius_jitter * rng.gen_range(-1.0..=1.0);
        let elevation = self.elevation_max * rng.gen_range(-1.0..=1.0);
        let azimuth = rng.gen_range(0.0..std::f64::consts::TAU);
        let target = Vec3::new(
            self.target_jitter * rng.gen_range(-1.0..=1.0),
            self.target_jitter * rng.gen_range(-1.0..=1.0),
            self.target_jitter * rng.gen_range(-1.0..=1.0),
        );
        let position = target
            + radius
                * Vec3::new(
                    elevation.cos() * azimuth.cos(),
                    elevation.sin(),
                    elevation.cos() * azimuth.sin(),
                );
        Camera::new(
            position,
            target,
            Vec3::new(0.0, 1.0, 0.0),
            self.vertical_fov,
            (self.near, self.far),
            (width, height),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub scene: SceneSpec,
    pub frames: usize,
    pub seed: u64,
    pub tess: TessellationConfig,
    pub width: usize,
    pub height: usize,
    pub orbit: OrbitConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifest {
    /// Directory the frame paths are relative to.
    pub root: PathBuf,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub frames: Vec<PathBuf>,
}

pub const MANIFEST: &str = "manifest.txt";

pub fn frame_name(index: usize) -> String {
    format!("frame_{index:05}")
}

impl Manifest {
    pub fn to_text(&self) -> String {
        let mut s = format!(
            "seed={}\ncount={}\nres={}x{}\n",
            self.seed,
            self.frames.len(),
            self.width,
            self.height
        );
        for f in &self.frames {
            let _ = writeln!(s, "{}", f.display());
        }
        s
    }

    pub fn parse(root: &Path, source: &Path, text: &str) -> Result<Self> {
        let err = |detail: String| Error::Format {
            path: source.to_path_buf(),
            what: "manifest",
            detail,
        };
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let mut header = |key: &str| -> Result<String> {
            let line = lines.next().ok_or_else(|| err(format!("missing {key}= header")))?;
            line.trim()
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .map(str::to_owned)
                .ok_or_else(|| err(format!("expected {key}=..., found {line:?}")))
        };
        let seed: u64 = header("seed")?.parse().map_err(|_| err("bad seed".into()))?;
        let count: usize = header("count")?.parse().map_err(|_| err("bad count".into()))?;
        let res = header("res")?;
        let (w, h) = res
            .split_once('x')
            .and_then(|(w, h)| Some((w.parse().ok()?, h.parse().ok()?)))
            .ok_or_else(|| err(format!("bad res {res:?}")))?;
        let frames: Vec<PathBuf> = lines.map(|l| PathBuf::from(l.trim())).collect();
        if frames.len() != count {
            return Err(err(format!("count={count} but {} frame lines", frames.len())));
        }
        Ok(Manifest {
            root: root.to_path_buf(),
            seed,
            width: w,
            height: h,
            frames,
        })
    }

    /// Reads `path`, or `path/manifest.txt` when given a directory.
    pub fn read(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(MANIFEST) } else { path.to_path_buf() };
        let text = std::fs::read_to_string(&file).map_err(|e| Error::io(&file, e))?;
        let root = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Manifest::parse(&root, &file, &text)
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn frame_dir(&self, i: usize) -> PathBuf {
        self.root.join(&self.frames[i])
    }

    pub fn load_frame(&self, i: usize) -> Result<GBufferFrame> {
        let frame = GBufferFrame::read_dir(&self.frame_dir(i))?;
        if frame.width() != self.width || frame.height() != self.height {
            return Err(Error::Format {
                path: self.frame_dir(i),
                what: "frame directory",
                detail: format!(
                    "frame is {}x{} but manifest says {}x{}",
                    frame.width(),
                    frame.height(),
                    self.width,
                    self.height
                ),
            });
        }
        Ok(frame)
    }
}

/// Renders `spec.frames` pairs into `out_dir` and writes the manifest.
/// Frames are rendered in parallel; output is identical for any thread count.
pub fn generate_dataset(spec: &DatasetSpec, out_dir: &Path) -> Result<Manifest> {
    spec.scene.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let coarse = spec.scene.shape.mesh()?;
    let fine = tessellate_phong(&coarse, &spec.tess);
    let shading = spec.scene.shading();
    (0..spec.frames).into_par_iter().try_for_each(|i| -> Result<()> {
        let cam = spec.orbit.camera(spec.seed, i, spec.width, spec.height)?;
        let frame = render_pair(&coarse, &fine, &cam, &shading)?;
        frame.write_dir(&out_dir.join(frame_name(i)))
    })?;
    let manifest = Manifest {
        root: out_dir.to_path_buf(),
        seed: spec.seed,
        width: spec.width,
        height: spec.height,
        frames: (0..spec.frames).map(|i| PathBuf::from(frame_name(i))).collect(),
    };
    let path = out_dir.join(MANIFEST);
    std::fs::write(&path, manifest.to_text()).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}
