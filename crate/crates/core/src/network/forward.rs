//! Forward pass, recorded on a [`Graph`] so it can be differentiated.
//!
//! Scale 1 is the coarsest, scale T runs at the working resolution. State
//! moves to the next finer scale through `upsample2`.

use super::{Bound, ModelConfig};
use crate::error::{Error, Result};
use crate::raster::GBufferFrame;
use crate::tensor::{Graph, Real, Tensor, Var};

/// Batched network inputs and targets, `N x C x H x W`.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch<T> {
    pub color: Tensor<T>,
    /// gnormal, snormal, depth, coverage.
    pub geom: Tensor<T>,
    pub label: Tensor<T>,
}

impl<T: Real> Batch<T> {
    pub fn cast<U: Real>(&self) -> Batch<U> {
        Batch {
            color: self.color.cast(),
            geom: self.geom.cast(),
            label: self.label.cast(),
        }
    }

    pub fn len(&self) -> usize {
        self.color.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Stacks frames into a batch; all frames must share one size.
pub fn frame_batch(frames: &[&GBufferFrame]) -> Result<Batch<f32>> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty frame batch".into()))?;
    let (w, h) = (first.width(), first.height());
    let plane = w * h;
    let n = frames.len();
    let mut color = Vec::with_capacity(n * 3 * plane);
    let mut geom = Vec::with_capacity(n * 8 * plane);
    let mut label = Vec::with_capacity(n * 3 * plane);
    for f in frames {
        f.validate()?;
        if f.width() != w || f.height() != h {
            return Err(Error::InvalidArgument(format!(
                "frame {}x{} in a batch of {w}x{h} frames",
                f.width(),
                f.height()
            )));
        }
        color.extend(f.color.to_planar());
        for img in [&f.gnormal, &f.snormal, &f.depth, &f.coverage] {
            geom.extend(img.to_planar());
        }
        label.extend(f.label.to_planar());
    }
    Ok(Batch {
        color: Tensor::from_vec(&[n, 3, h, w], color)?,
        geom: Tensor::from_vec(&[n, 8, h, w], geom)?,
        label: Tensor::from_vec(&[n, 3, h, w], label)?,
    })
}

/// Every intermediate the invariants talk about.
#[derive(Clone, Debug)]
pub struct Features {
    /// Encoder guidance pyramid, index `t - 1`.
    pub guidance_pyramid: Vec<Var>,
    /// Guidance entering scale `t` (warped and carried from coarser scales).
    pub guidance: Vec<Var>,
    /// Channel-softmax gate per scale (absent without the deformation module).
    pub attention: Vec<Option<Var>>,
    pub deform: Vec<Var>,
    /// `v^(t)`; absent when feature warping is disabled.
    pub flow: Vec<Option<Var>>,
    /// Cumulative flow at scale `t`.
    pub cum_flow: Vec<Option<Var>>,
    /// Final cumulative flow at full resolution.
    pub full_flow: Option<Var>,
    pub output: Var,
}

fn conv<T: Real>(g: &mut Graph<T>, p: &Bound, name: &str, x: Var) -> Result<Var> {
    let w = p.var(&format!("{name}.weight"))?;
    let b = p.var(&format!("{name}.bias"))?;
    g.conv2d(x, w, Some(b))
}

/// conv, leaky, conv.
fn double_conv<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, name: &str, x: Var) -> Result<Var> {
    let h = conv(g, p, &format!("{name}.0"), x)?;
    let h = g.leaky_relu(h, cfg.leaky_slope);
    conv(g, p, &format!("{name}.1"), h)
}

fn activated<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, name: &str, x: Var) -> Result<Var> {
    let h = double_conv(g, p, cfg, name, x)?;
    Ok(g.leaky_relu(h, cfg.leaky_slope))
}

fn downsample_by<T: Real>(g: &mut Graph<T>, mut x: Var, factor: usize) -> Result<Var> {
    let mut f = factor;
    while f > 1 {
        x = g.downsample2(x)?;
        f /= 2;
    }
    Ok(x)
}

fn upsample_by<T: Real>(g: &mut Graph<T>, mut x: Var, factor: usize) -> Result<Var> {
    let mut f = factor;
    while f > 1 {
        x = g.upsample2(x)?;
        f /= 2;
    }
    Ok(x)
}

fn spatial<T: Real>(g: &Graph<T>, v: Var) -> (usize, usize) {
    let s = g.shape(v);
    (s[2], s[3])
}

fn at_scale(t: usize, e: Error) -> Error {
    match e {
        Error::Shape { op, detail } => Error::Shape {
            op,
            detail: format!("scale {t}: {detail}"),
        },
        other => other,
    }
}

/// Guidance pyramid from the full-resolution geometry stack; index 0 is
/// scale 1 (coarsest).
pub fn encode_guidance<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, geom: Var) -> Result<Vec<Var>> {
    let (h, w) = spatial(g, geom);
    cfg.check_resolution(w, h)?;
    let mut x = downsample_by(g, geom, cfg.working_factor)?;
    let mut levels = Vec::with_capacity(cfg.scales);
    for t in (1..=cfg.scales).rev() {
        if t != cfg.scales {
            x = g.downsample2(x)?;
        }
        x = activated(g, p, cfg, &format!("enc_g.{t}"), x)?;
        levels.push(x);
    }
    levels.reverse();
    Ok(levels)
}

/// Full-resolution color features and the working-resolution pyramid.
fn encode_color<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, color: Var) -> Result<(Var, Vec<Var>)> {
    let z0 = activated(g, p, cfg, "enc_c0", color)?;
    let mut x = downsample_by(g, color, cfg.working_factor)?;
    let mut levels = Vec::with_capacity(cfg.scales);
    for t in (1..=cfg.scales).rev() {
        if t != cfg.scales {
            x = g.downsample2(x)?;
        }
        x = activated(g, p, cfg, &format!("enc_c.{t}"), x)?;
        levels.push(x);
    }
    levels.reverse();
    Ok((z0, levels))
}

/// Implicit deformation at scale `t`. `z_prev` is the guidance itself at
/// `t = 1` and the upsampled previous state otherwise.
///
/// Returns `z_d^(t)` and the attention gate.
pub fn deformation_step<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    t: usize,
    z_g: Var,
    z_prev: Var,
) -> Result<(Var, Option<Var>)> {
    if spatial(g, z_g) != spatial(g, z_prev) {
        return Err(Error::shape(
            "deformation_step",
            format!(
                "scale {t}: guidance is {:?} but previous state is {:?}",
                spatial(g, z_g),
                spatial(g, z_prev)
            ),
        ));
    }
    let run = |g: &mut Graph<T>| -> Result<(Var, Option<Var>)> {
        if !cfg.deform_module {
            return Ok((double_conv(g, p, cfg, &format!("s{t}.plain"), z_g)?, None));
        }
        let q = double_conv(g, p, cfg, &format!("s{t}.fq"), z_g)?;
        let k = double_conv(g, p, cfg, &format!("s{t}.fk"), z_prev)?;
        let v = double_conv(g, p, cfg, &format!("s{t}.fv"), z_prev)?;
        let qk = g.concat(&[q, k], 1)?;
        let logits = double_conv(g, p, cfg, &format!("s{t}.fa"), qk)?;
        let a = g.softmax(logits, 1)?;
        let gated = g.mul(a, v)?;
        let z_d = double_conv(g, p, cfg, &format!("s{t}.deform"), gated)?;
        Ok((z_d, Some(a)))
    };
    run(g).map_err(|e| at_scale(t, e))
}

#[derive(Clone, Copy, Debug)]
pub struct WarpOut {
    pub flow: Option<Var>,
    pub cum_flow: Option<Var>,
    /// Guidance warped by `v^(t)`.
    pub guidance: Var,
    /// Refined color features `ẑ_c^(t)`.
    pub color: Var,
}

/// Flow prediction and feature warping at scale `t`. Inputs from the
/// previous scale must already be resampled to this scale.
#[allow(clippy::too_many_arguments)]
pub fn warp_step<T: Real>(
    g: &mut Graph<T>,
    p: &Bound,
    cfg: &ModelConfig,
    t: usize,
    z_d: Var,
    z_g: Var,
    zc_hat_prev: Option<Var>,
    z_c: Var,
    cum_prev: Option<Var>,
) -> Result<WarpOut> {
    let run = |g: &mut Graph<T>| -> Result<WarpOut> {
        let (flow, cum, guidance, zc_hat, zc) = if cfg.feature_warp {
            let h = conv(g, p, &format!("s{t}.fw.0"), z_d)?;
            let h = g.leaky_relu(h, cfg.leaky_slope);
            let h = conv(g, p, &format!("s{t}.fw.1"), h)?;
            let h = g.tanh(h);
            let v = g.scale(h, cfg.flow_scale);
            let cum = match cum_prev {
                None => v,
                Some(c) if cfg.compose_flows => {
                    let moved = g.grid_sample(c, v)?;
                    g.add(v, moved)?
                }
                Some(c) => g.add(v, c)?,
            };
            let guidance = g.grid_sample(z_g, v)?;
            let zc_hat = zc_hat_prev.map(|z| g.grid_sample(z, v)).transpose()?;
            let zc = g.grid_sample(z_c, cum)?;
            (Some(v), Some(cum), guidance, zc_hat, zc)
        } else {
            (None, None, z_g, zc_hat_prev, z_c)
        };
        let merged = match zc_hat {
            Some(prev) => g.concat(&[prev, zc], 1)?,
            None => zc,
        };
        let color = activated(g, p, cfg, &format!("s{t}.refine"), merged)?;
        Ok(WarpOut {
            flow,
            cum_flow: cum,
            guidance,
            color,
        })
    };
    run(g).map_err(|e| at_scale(t, e))
}

/// Full network: `color` is `N x 3 x H x W`, `geom` is `N x 8 x H x W`.
pub fn forward<T: Real>(g: &mut Graph<T>, p: &Bound, cfg: &ModelConfig, color: Var, geom: Var) -> Result<Features> {
    cfg.validate()?;
    let (h, w) = spatial(g, color);
    cfg.check_resolution(w, h)?;
    if spatial(g, geom) != (h, w) {
        return Err(Error::shape(
            "forward",
            format!("color is {h}x{w} but geometry is {:?}", spatial(g, geom)),
        ));
    }
    let pyramid = encode_guidance(g, p, cfg, geom)?;
    let (z_c0, color_levels) = encode_color(g, p, cfg, color)?;

    let mut f = Features {
        guidance_pyramid: pyramid.clone(),
        guidance: Vec::new(),
        attention: Vec::new(),
        deform: Vec::new(),
        flow: Vec::new(),
        cum_flow: Vec::new(),
        full_flow: None,
        output: z_c0,
    };
    let mut prev: Option<(Var, Var, Option<Var>, Var)> = None; // (z_d, warped z_g, cum, ẑ_c)
    for t in 1..=cfg.scales {
        let (z_g, z_prev, cum_in, zc_hat_in) = match prev {
            None => (pyramid[0], pyramid[0], None, None),
            Some((zd, zg_warped, cum, zc_hat)) => {
                let carried = g.upsample2(zg_warped)?;
                let cum_in = cum.map(|c| g.upsample2(c)).transpose()?;
                let skip = match cum_in {
                    Some(c) => g.grid_sample(pyramid[t - 1], c)?,
                    None => pyramid[t - 1],
                };
                let z_g = g.add(carried, skip).map_err(|e| at_scale(t, e))?;
                (z_g, g.upsample2(zd)?, cum_in, Some(g.upsample2(zc_hat)?))
            }
        };
        let (z_d, att) = deformation_step(g, p, cfg, t, z_g, z_prev)?;
        let out = warp_step(g, p, cfg, t, z_d, z_g, zc_hat_in, color_levels[t - 1], cum_in)?;
        f.guidance.push(z_g);
        f.attention.push(att);
        f.deform.push(z_d);
        f.flow.push(out.flow);
        f.cum_flow.push(out.cum_flow);
        prev = Some((z_d, out.guidance, out.cum_flow, out.color));
    }
    let (z_d, _, cum, zc_hat) = prev.expect("at least one scale");
    let full_flow = cum.map(|c| upsample_by(g, c, cfg.working_factor)).transpose()?;
    let z_c0w = match full_flow {
        Some(flow) => g.grid_sample(z_c0, flow)?,
        None => z_c0,
    };
    let zd_full = upsample_by(g, z_d, cfg.working_factor)?;
    let zc_full = upsample_by(g, zc_hat, cfg.working_factor)?;
    let dec_in = g.concat(&[z_c0w, zd_full, zc_full], 1)?;
    let h = activated(g, p, cfg, "dec", dec_in)?;
    let out = conv(g, p, "out", h)?;
    f.full_flow = full_flow;
    f.output = g.clamp(out, 0.0, 1.0);
    Ok(f)
}
