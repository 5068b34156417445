//! Residual-relative, top-k shading and gradient-domain losses.

use crate::error::{Error, Result};
use crate::tensor::{Graph, Real, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct LossConfig {
    pub epsilon: f64,
    /// Fraction of pixels per image that enter the top-k shading term.
    pub k_fraction: f64,
    pub lambda_rr: f64,
    pub lambda_shade: f64,
    pub lambda_percep: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig::desk()
    }
}

impl LossConfig {
    /// Weights 0.1 / 10 / 1 (the gradient substitute is rescaled).
    pub fn desk() -> Self {
        LossConfig {
            epsilon: 1e-6,
            k_fraction: 0.01,
            lambda_rr: 0.1,
            lambda_shade: 10.0,
            lambda_percep: 1.0,
        }
    }

    /// Weights 0.1 / 10 / 30.
    pub fn paper() -> Self {
        LossConfig {
            lambda_percep: 30.0,
            ..LossConfig::desk()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) {
            return Err(Error::Config(format!("epsilon {} must be positive", self.epsilon)));
        }
        if !(self.k_fraction > 0.0 && self.k_fraction <= 1.0) {
            return Err(Error::Config(format!("k_fraction {} outside (0, 1]", self.k_fraction)));
        }
        for (name, v) in [
            ("lambda_rr", self.lambda_rr),
            ("lambda_shade", self.lambda_shade),
            ("lambda_percep", self.lambda_percep),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} {v} must be a nonnegative number")));
            }
        }
        Ok(())
    }

    /// k for an image of `pixels` pixels (at least 1, at most `pixels`).
    pub fn k_for(&self, pixels: usize) -> usize {
        ((self.k_fraction * pixels as f64).round() as usize).clamp(1, pixels.max(1))
    }
}

fn check_same(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::Shape {
            op,
            detail: format!("{a:?} vs {b:?}"),
        });
    }
    Ok(())
}

/// `mean_i |pred_i - label_i| / (|label_i - input_i| + epsilon)` over every
/// element (pixels and channels).
pub fn loss_rr<T: Real>(g: &mut Graph<T>, pred: Var, label: &Tensor<T>, input: &Tensor<T>, epsilon: f64) -> Result<Var> {
    check_same("loss_rr", g.shape(pred), label.shape())?;
    check_same("loss_rr", label.shape(), input.shape())?;
    let n = T::from_usize(label.numel().max(1)).unwrap();
    let eps = T::lit(epsilon);
    let weight: Vec<T> = label
        .data()
        .iter()
        .zip(input.data())
        .map(|(&l, &i)| T::one() / (((l - i).abs() + eps) * n))
        .collect();
    g.weighted_abs(pred, label, &weight)
}

/// Indices of the `k` largest values, ties broken by lower index.
pub fn top_k(residuals: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..residuals.len()).collect();
    idx.sort_by(|&a, &b| residuals[b].total_cmp(&residuals[a]).then(a.cmp(&b)));
    idx.truncate(k.min(residuals.len()));
    idx
}

/// Mean over the `k` pixels with the largest channel-mean absolute error,
/// per image, averaged over the batch. `k` is clamped to the pixel count.
pub fn loss_shade<T: Real>(g: &mut Graph<T>, pred: Var, label: &Tensor<T>, k: usize) -> Result<Var> {
    check_same("loss_shade", g.shape(pred), label.shape())?;
    let (n, c, h, w) = label.dims4()?;
    let plane = h * w;
    let k = k.clamp(1, plane.max(1));
    let p = g.value(pred).data();
    let l = label.data();
    let mut weight = vec![T::zero(); label.numel()];
    let wt = T::one() / T::from_usize(k * c * n).unwrap();
    for b in 0..n {
        let base = b * c * plane;
        let residual: Vec<f64> = (0..plane)
            .map(|px| {
                (0..c)
                    .map(|ch| (p[base + ch * plane + px] - l[base + ch * plane + px]).abs().as_f64())
                    .sum::<f64>()
                    / c as f64
            })
            .collect();
        for px in top_k(&residual, k) {
            for ch in 0..c {
                weight[base + ch * plane + px] = wt;
            }
        }
    }
    g.weighted_abs(pred, label, &weight)
}

/// Gradient-domain substitute for a learned perceptual metric: sum over up
/// to three pyramid levels of `mean|dx(pred - label)| + mean|dy(pred - label)|`.
/// Levels stop early when a side becomes odd.
pub fn loss_percep<T: Real>(g: &mut Graph<T>, pred: Var, label: &Tensor<T>) -> Result<Var> {
    check_same("loss_percep", g.shape(pred), label.shape())?;
    let l = g.input(label.clone());
    let mut diff = g.sub(pred, l)?;
    let mut total = g.gradient_l1(diff)?;
    for _ in 1..3 {
        let s = g.shape(diff);
        if s[2] % 2 != 0 || s[3] % 2 != 0 || s[2] < 2 || s[3] < 2 {
            break;
        }
        diff = g.downsample2(diff)?;
        let term = g.gradient_l1(diff)?;
        total = g.add(total, term)?;
    }
    Ok(total)
}

/// Weighted total and unweighted terms.
#[derive(Clone, Copy, Debug)]
pub struct LossVars {
    pub total: Var,
    pub rr: Var,
    pub shade: Var,
    pub percep: Var,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub rr: f64,
    pub shade: f64,
    pub percep: f64,
}

impl LossVars {
    pub fn values<T: Real>(&self, g: &Graph<T>) -> LossBreakdown {
        let v = |x: Var| g.value(x).data()[0].as_f64();
        LossBreakdown {
            total: v(self.total),
            rr: v(self.rr),
            shade: v(self.shade),
            percep: v(self.percep),
        }
    }
}

pub fn total_loss<T: Real>(
    g: &mut Graph<T>,
    pred: Var,
    label: &Tensor<T>,
    input: &Tensor<T>,
    cfg: &LossConfig,
) -> Result<LossVars> {
    cfg.validate()?;
    let (_, _, h, w) = label.dims4()?;
    let rr = loss_rr(g, pred, label, input, cfg.epsilon)?;
    let shade = loss_shade(g, pred, label, cfg.k_for(h * w))?;
    let percep = loss_percep(g, pred, label)?;
    let a = g.scale(rr, cfg.lambda_rr);
    let b = g.scale(shade, cfg.lambda_shade);
    let c = g.scale(percep, cfg.lambda_percep);
    let ab = g.add(a, b)?;
    let total = g.add(ab, c)?;
    Ok(LossVars { total, rr, shade, percep })
}
