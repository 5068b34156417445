//! The multi-scale tessellation network: configuration, parameter layout,
//! initialization and checkpoints. The forward pass lives in [`forward`].

pub mod checkpoint;
pub mod forward;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};
pub use forward::{deformation_step, encode_guidance, forward, frame_batch, warp_step, Batch, Features, WarpOut};

/// Input channels of the geometry stack: gnormal, snormal, depth, coverage.
pub const GUIDANCE_INPUTS: usize = 8;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Number of scales T (scale 1 is the coarsest).
    pub scales: usize,
    /// Full resolution / working resolution (a power of two).
    pub working_factor: usize,
    pub c_g: usize,
    pub c_d: usize,
    pub c_c: usize,
    /// Maximum per-scale displacement in normalized units.
    pub flow_scale: f64,
    pub leaky_slope: f64,
    /// Attention + 7x7 deformation block; otherwise a plain 3x3 block on z_g.
    pub deform_module: bool,
    /// Flow prediction and feature warping; otherwise all flows are zero.
    pub feature_warp: bool,
    /// Resample the previous cumulative flow at the displaced positions
    /// instead of adding it pointwise.
    pub compose_flows: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            scales: 3,
            working_factor: 2,
            c_g: 32,
            c_d: 32,
            c_c: 32,
            flow_scale: 0.05,
            leaky_slope: 0.2,
            deform_module: true,
            feature_warp: true,
            compose_flows: false,
        }
    }
}

/// How a parameter tensor is initialized.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Init {
    /// Normal with std `gain * sqrt(2 / ((1 + slope^2) fan_in))`.
    He { fan_in: usize, gain: f64 },
    Const(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub init: Init,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.scales == 0 {
            return bad("scales must be at least 1".into());
        }
        if self.working_factor == 0 || !self.working_factor.is_power_of_two() {
            return bad(format!("working_factor {} must be a power of two", self.working_factor));
        }
        if self.c_g == 0 || self.c_d == 0 || self.c_c == 0 {
            return bad("channel counts must be positive".into());
        }
        if !(self.flow_scale > 0.0 && self.flow_scale <= 1.0) {
            return bad(format!("flow_scale {} outside (0, 1]", self.flow_scale));
        }
        if !(self.leaky_slope >= 0.0 && self.leaky_slope < 1.0) {
            return bad(format!("leaky_slope {} outside [0, 1)", self.leaky_slope));
        }
        Ok(())
    }

    /// Full-resolution sizes must be divisible by this.
    pub fn divisor(&self) -> usize {
        self.working_factor << (self.scales - 1)
    }

    pub fn check_resolution(&self, width: usize, height: usize) -> Result<()> {
        let d = self.divisor();
        if width % d != 0 || height % d != 0 || width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "input {width}x{height} incompatible with working resolution: both sides must be \
                 divisible by working_factor * 2^(scales-1) = {d}"
            )));
        }
        Ok(())
    }

    /// Parameter layout in a fixed order (also the initialization order).
    pub fn param_specs(&self) -> Vec<ParamSpec> {
        let mut s = Vec::new();
        let (cg, cd, cc) = (self.c_g, self.c_d, self.c_c);
        double(&mut s, "enc_c0", 3, cc, 3);
        for t in (1..=self.scales).rev() {
            let c_in = if t == self.scales { 3 } else { cc };
            double(&mut s, &format!("enc_c.{t}"), c_in, cc, 3);
        }
        for t in (1..=self.scales).rev() {
            let c_in = if t == self.scales { GUIDANCE_INPUTS } else { cg };
            double(&mut s, &format!("enc_g.{t}"), c_in, cg, 3);
        }
        for t in 1..=self.scales {
            if self.deform_module {
                let kin = if t == 1 { cg } else { cd };
                double(&mut s, &format!("s{t}.fq"), cg, cd, 3);
                double(&mut s, &format!("s{t}.fk"), kin, cd, 3);
                double(&mut s, &format!("s{t}.fv"), kin, cd, 3);
                double(&mut s, &format!("s{t}.fa"), 2 * cd, cd, 3);
                double(&mut s, &format!("s{t}.deform"), cd, cd, 7);
            } else {
                double(&mut s, &format!("s{t}.plain"), cg, cd, 3);
            }
            if self.feature_warp {
                conv(&mut s, &format!("s{t}.fw.0"), cd, cd, 3, Some(1.0), 0.0);
                // zero output layer: training starts from the identity warp
                conv(&mut s, &format!("s{t}.fw.1"), cd, 2, 3, None, 0.0);
            }
            let c_in = if t == 1 { cc } else { 2 * cc };
            double(&mut s, &format!("s{t}.refine"), c_in, cc, 3);
        }
        double(&mut s, "dec", 2 * cc + cd, cc, 3);
        conv(&mut s, "out", cc, 3, 3, Some(1.0), 0.5);
        s
    }

    pub fn param_count(&self) -> usize {
        self.param_specs()
            .iter()
            .map(|s| s.shape.iter().product::<usize>())
            .sum()
    }

    /// `key=value` lines, the form stored in checkpoints.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("scales", self.scales.to_string()),
            ("working_factor", self.working_factor.to_string()),
            ("c_g", self.c_g.to_string()),
            ("c_d", self.c_d.to_string()),
            ("c_c", self.c_c.to_string()),
            ("flow_scale", format!("{:?}", self.flow_scale)),
            ("leaky_slope", format!("{:?}", self.leaky_slope)),
            ("deform_module", self.deform_module.to_string()),
            ("feature_warp", self.feature_warp.to_string()),
            ("compose_flows", self.compose_flows.to_string()),
        ]
    }

    /// Applies one `key=value` setting; returns `false` for unknown keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let parse_err = || Error::Config(format!("invalid value {value:?} for {key}"));
        macro_rules! parse {
            () => {
                value.trim().parse().map_err(|_| parse_err())?
            };
        }
        match key {
            "scales" => self.scales = parse!(),
            "working_factor" => self.working_factor = parse!(),
            "c_g" => self.c_g = parse!(),
            "c_d" => self.c_d = parse!(),
            "c_c" => self.c_c = parse!(),
            "channels" => {
                let c: usize = parse!();
                (self.c_g, self.c_d, self.c_c) = (c, c, c);
            }
            "flow_scale" => self.flow_scale = parse!(),
            "leaky_slope" => self.leaky_slope = parse!(),
            "deform_module" => self.deform_module = parse!(),
            "feature_warp" => self.feature_warp = parse!(),
            "compose_flows" => self.compose_flows = parse!(),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut c = ModelConfig::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("expected key=value, got {line:?}")))?;
            if !c.set(k.trim(), v)? {
                return Err(Error::Config(format!("unknown model key {k:?}")));
            }
        }
        c.validate()?;
        Ok(c)
    }
}

/// Weight and bias of one convolution; `gain: None` zero-initializes.
fn conv(specs: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize, k: usize, gain: Option<f64>, bias: f64) {
    specs.push(ParamSpec {
        name: format!("{name}.weight"),
        shape: vec![c_out, c_in, k, k],
        init: match gain {
            Some(gain) => Init::He { fan_in: c_in * k * k, gain },
            None => Init::Const(0.0),
        },
    });
    specs.push(ParamSpec {
        name: format!("{name}.bias"),
        shape: vec![c_out],
        init: Init::Const(bias),
    });
}

/// Two convolutions; the first has a `k_first` kernel, the second 3x3.
fn double(specs: &mut Vec<ParamSpec>, name: &str, c_in: usize, c_out: usize, k_first: usize) {
    conv(specs, &format!("{name}.0"), c_in, c_out, k_first, Some(1.0), 0.0);
    conv(specs, &format!("{name}.1"), c_out, c_out, 3, Some(1.0), 0.0);
}

/// Named parameter tensors in [`ModelConfig::param_specs`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Real> Params<T> {
    pub fn from_parts(config: ModelConfig, named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let specs = config.param_specs();
        if specs.len() != named.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors for this config, got {}",
                specs.len(),
                named.len()
            )));
        }
        for (s, (n, t)) in specs.iter().zip(&named) {
            if &s.name != n || s.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "tensor {n} {:?} does not match expected {} {:?}",
                    t.shape(),
                    s.name,
                    s.shape
                )));
            }
        }
        let (names, tensors) = named.into_iter().unzip();
        Ok(Params { config, names, tensors })
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor<T>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.names.iter().position(|n| n == name).map(move |i| &mut self.tensors[i])
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    pub fn cast<U: Real>(&self) -> Params<U> {
        Params {
            config: self.config.clone(),
            names: self.names.clone(),
            tensors: self.tensors.iter().map(Tensor::cast).collect(),
        }
    }

    /// Records every tensor as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        let vars = self.tensors.iter().map(|t| g.param(t.clone())).collect::<Vec<_>>();
        Bound {
            index: self.names.iter().cloned().zip(vars.iter().copied()).collect(),
            vars,
        }
    }

    /// Binds vars already in a graph, one per tensor in layout order.
    pub fn bind_vars(&self, vars: &[Var]) -> Result<Bound> {
        if vars.len() != self.tensors.len() {
            return Err(Error::InvalidArgument(format!(
                "{} vars for {} parameter tensors",
                vars.len(),
                self.tensors.len()
            )));
        }
        Ok(Bound {
            index: self.names.iter().cloned().zip(vars.iter().copied()).collect(),
            vars: vars.to_vec(),
        })
    }
}

/// Parameters recorded on a graph, addressable by name.
pub struct Bound {
    index: HashMap<String, Var>,
    vars: Vec<Var>,
}

impl Bound {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| Error::MissingGrad(format!("no parameter named {name}")))
    }

    /// Vars in parameter order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

/// Deterministic He-style initialization.
pub fn init_params(config: &ModelConfig, seed: u64) -> Result<Params<f32>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let named = config
        .param_specs()
        .into_iter()
        .map(|s| {
            let n: usize = s.shape.iter().product();
            let data = match s.init {
                Init::Const(v) => vec![v as f32; n],
                Init::He { fan_in, gain } => {
                    let std = gain * (2.0 / ((1.0 + config.leaky_slope.powi(2)) * fan_in as f64)).sqrt();
                    let dist = Normal::new(0.0, std).expect("finite std");
                    (0..n).map(|_| dist.sample(&mut rng) as f32).collect()
                }
            };
            Ok((s.name, Tensor::from_vec(&s.shape, data)?))
        })
        .collect::<Result<Vec<_>>>()?;
    Params::from_parts(config.clone(), named)
}

/// Model output for one frame.
#[derive(Clone, Debug)]
pub struct Prediction {
    pub image: crate::image::Image,
    /// Largest |component| of the full-resolution cumulative flow.
    pub max_flow: f64,
}

/// Runs the model on a single frame.
pub fn predict(params: &Params<f32>, frame: &crate::raster::GBufferFrame) -> Result<Prediction> {
    let batch = frame_batch(&[frame])?;
    let mut g = Graph::new();
    let bound = params.bind(&mut g);
    let color = g.input(batch.color);
    let geom = g.input(batch.geom);
    let f = forward(&mut g, &bound, &params.config, color, geom)?;
    let max_flow = f.full_flow.map_or(0.0, |v| g.value(v).max_abs() as f64);
    let out = g.value(f.output);
    let (_, _, h, w) = out.dims4()?;
    Ok(Prediction {
        image: crate::image::Image::from_planar(w, h, 3, out.data())?,
        max_flow,
    })
}
