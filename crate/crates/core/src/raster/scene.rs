//! Procedural scenes and input/label frame pairs.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{rasterize, Camera, Shading};
use crate::error::{Error, Result};
use crate::image::{read_pfm, write_pfm, Image};
use crate::mesh::{shapes, tessellate_phong, Mesh, TessellationConfig, Vec3};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Shape {
    Icosphere(u32),
    Torus(u32, u32),
    Cylinder(u32),
    Capsule(u32),
    BarGrid,
}

impl Shape {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Shape::Torus(u, v) => u >= 3 && v >= 3,
            Shape::Cylinder(s) | Shape::Capsule(s) => s >= 3,
            Shape::Icosphere(_) | Shape::BarGrid => true,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("{self}: segment counts must be at least 3")))
        }
    }

    pub fn mesh(&self) -> Result<Mesh> {
        self.validate()?;
        Ok(match *self {
            Shape::Icosphere(s) => shapes::icosphere(s),
            Shape::Torus(u, v) => shapes::torus(u, v),
            Shape::Cylinder(s) => shapes::cylinder(s),
            Shape::Capsule(s) => shapes::capsule(s),
            Shape::BarGrid => shapes::bar_grid(),
        })
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Icosphere(s) => write!(f, "icosphere{s}"),
            Shape::Torus(u, v) => write!(f, "torus{u}x{v}"),
            Shape::Cylinder(s) => write!(f, "cylinder{s}"),
            Shape::Capsule(s) => write!(f, "capsule{s}"),
            Shape::BarGrid => write!(f, "bar_grid"),
        }
    }
}

/// Accepts `icosphere<N>`, `torus` / `torus<U>x<V>`, `cylinder[<N>]`,
/// `capsule[<N>]` and `bar_grid`.
impl FromStr for Shape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown scene {s:?}"));
        let num = |t: &str, default: u32| -> Result<u32> {
            if t.is_empty() {
                Ok(default)
            } else {
                t.parse().map_err(|_| bad())
            }
        };
        let shape = if s == "bar_grid" {
            Shape::BarGrid
        } else if let Some(rest) = s.strip_prefix("icosphere") {
            Shape::Icosphere(num(rest, 1)?)
        } else if let Some(rest) = s.strip_prefix("torus") {
            if rest.is_empty() {
                Shape::Torus(12, 8)
            } else {
                let (u, v) = rest.split_once('x').ok_or_else(bad)?;
                Shape::Torus(num(u, 12)?, num(v, 8)?)
            }
        } else if let Some(rest) = s.strip_prefix("cylinder") {
            Shape::Cylinder(num(rest, 8)?)
        } else if let Some(rest) = s.strip_prefix("capsule") {
            Shape::Capsule(num(rest, 8)?)
        } else {
            return Err(bad());
        };
        shape.validate()?;
        Ok(shape)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Material {
    Flat([f64; 3]),
    /// 3D checkerboard of cell size `1 / scale` in world space.
    Checker { scale: f64, a: [f64; 3], b: [f64; 3], offset: [f64; 3] },
}

impl Material {
    pub fn albedo(&self, p: &Vec3) -> [f64; 3] {
        match self {
            Material::Flat(c) => *c,
            Material::Checker { scale, a, b, offset } => {
                let cell: i64 = (0..3).map(|k| ((p[k] + offset[k]) * scale).floor() as i64).sum();
                if cell.rem_euclid(2) == 0 {
                    *a
                } else {
                    *b
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SceneSpec {
    pub shape: Shape,
    pub material: Material,
    pub light_dir: Vec3,
    pub ambient: f64,
    /// Seeds procedural material variation (checker phase).
    pub rng_seed: u64,
}

pub const BACKGROUND: f64 = 0.5;

impl SceneSpec {
    /// Warm flat albedo, key light from the upper front right.
    pub fn new(shape: Shape) -> Self {
        SceneSpec {
            shape,
            material: Material::Flat([0.9, 0.6, 0.3]),
            light_dir: Vec3::new(0.4, 0.7, 0.6).normalize(),
            ambient: 0.25,
            rng_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if (self.light_dir.norm() - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument("light_dir must be unit length".into()));
        }
        if !(0.0..=1.0).contains(&self.ambient) {
            return Err(Error::InvalidArgument(format!("ambient {} outside [0, 1]", self.ambient)));
        }
        Ok(())
    }

    pub fn shading(&self) -> Shading {
        let material = match &self.material {
            Material::Checker { scale, a, b, .. } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.rng_seed);
                let offset = std::array::from_fn(|_| rng.gen::<f64>() / scale);
                Material::Checker {
                    scale: *scale,
                    a: *a,
                    b: *b,
                    offset,
                }
            }
            m => m.clone(),
        };
        Shading {
            material,
            light_dir: self.light_dir,
            ambient: self.ambient,
            background: BACKGROUND,
        }
    }
}

/// Input G-buffer plus the tessellated-geometry label, all `H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct GBufferFrame {
    pub color: Image,
    pub depth: Image,
    pub gnormal: Image,
    pub snormal: Image,
    pub coverage: Image,
    pub label: Image,
}

const CHANNELS: [(&str, usize); 6] = [
    ("color", 3),
    ("depth", 1),
    ("gnormal", 3),
    ("snormal", 3),
    ("coverage", 1),
    ("label", 3),
];

impl GBufferFrame {
    pub fn width(&self) -> usize {
        self.color.width()
    }

    pub fn height(&self) -> usize {
        self.color.height()
    }

    fn channels(&self) -> [&Image; 6] {
        [&self.color, &self.depth, &self.gnormal, &self.snormal, &self.coverage, &self.label]
    }

    pub fn validate(&self) -> Result<()> {
        for (img, (name, ch)) in self.channels().iter().zip(CHANNELS) {
            if img.width() != self.width() || img.height() != self.height() || img.channels() != ch {
                return Err(Error::InvalidArgument(format!(
                    "channel {name} is {}x{}x{}, expected {}x{}x{ch}",
                    img.width(),
                    img.height(),
                    img.channels(),
                    self.width(),
                    self.height()
                )));
            }
        }
        Ok(())
    }

    /// Same window of every channel.
    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> Result<Self> {
        Ok(GBufferFrame {
            color: self.color.crop(x0, y0, w, h)?,
            depth: self.depth.crop(x0, y0, w, h)?,
            gnormal: self.gnormal.crop(x0, y0, w, h)?,
            snormal: self.snormal.crop(x0, y0, w, h)?,
            coverage: self.coverage.crop(x0, y0, w, h)?,
            label: self.label.crop(x0, y0, w, h)?,
        })
    }

    /// Writes `<name>.pfm` for every channel into `dir` (created if needed).
    pub fn write_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (img, (name, _)) in self.channels().iter().zip(CHANNELS) {
            write_pfm(&dir.join(format!("{name}.pfm")), img)?;
        }
        Ok(())
    }

    pub fn read_dir(dir: &Path) -> Result<Self> {
        let mut imgs = CHANNELS
            .iter()
            .map(|(name, _)| read_pfm(&dir.join(format!("{name}.pfm"))))
            .collect::<Result<Vec<_>>>()?
            .into_iter();
        let mut next = || imgs.next().expect("six channels");
        let frame = GBufferFrame {
            color: next(),
            depth: next(),
            gnormal: next(),
            snormal: next(),
            coverage: next(),
            label: next(),
        };
        frame.validate().map_err(|e| Error::Format {
            path: dir.to_path_buf(),
            what: "frame directory",
            detail: e.to_string(),
        })?;
        Ok(frame)
    }
}

/// Renders the low-poly input and its Phong-tessellated label.
pub fn make_pair(spec: &SceneSpec, camera: &Camera, tess: &TessellationConfig) -> Result<GBufferFrame> {
    spec.validate()?;
    let mesh = spec.shape.mesh()?;
    let fine = tessellate_phong(&mesh, tess);
    render_pair(&mesh, &fine, camera, &spec.shading())
}

pub(crate) fn render_pair(coarse: &Mesh, fine: &Mesh, camera: &Camera, shading: &Shading) -> Result<GBufferFrame> {
    let input = rasterize(coarse, camera, shading)?;
    let label = rasterize(fine, camera, shading)?;
    Ok(GBufferFrame {
        color: input.color,
        depth: input.depth,
        gnormal: input.gnormal,
        snormal: input.snormal,
        coverage: input.coverage,
        label: label.color,
    })
}
