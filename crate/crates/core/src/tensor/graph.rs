use super::fault::{self, FaultOp};
use super::{conv, dims4, sample, Real, Tensor};
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Option<Var> },
    LeakyRelu { x: Var, slope: T },
    Tanh { x: Var },
    Softmax { x: Var, axis: usize },
    GridSample { x: Var, flow: Var },
    Down2 { x: Var },
    Up2 { x: Var },
    Concat { xs: Vec<Var>, axis: usize },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Scale { x: Var, s: T },
    Clamp { x: Var, lo: T, hi: T },
    Sum { x: Var },
    Mean { x: Var },
    /// Scalar `sum(coef * |x - target|)`; `coef` holds `d/dx` per element.
    WeightedAbs { x: Var, dcoef: Vec<T> },
    /// Scalar `mean|dx/dx| + mean|dx/dy|` of forward differences.
    GradientL1 { x: Var },
}

struct Node<T> {
    value: Tensor<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
    op: Op<T>,
}

/// Tape of recorded operations in execution order.
///
/// [`Graph::backward`] walks the tape in exact reverse order. Gradients of
/// leaf nodes accumulate across repeated `backward` calls until
/// [`Graph::zero_grad`].
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<()> {
    if a != b {
        return Err(Error::shape(op, format!("{a:?} vs {b:?}")));
    }
    Ok(())
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; no gradient is tracked.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Trainable leaf whose gradient is kept after `backward`.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Same-padded, stride-1 cross-correlation. Kernel size is taken from
    /// `w` (`c_out x c_in x k x k`, `k` odd).
    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (n, c_in, h, wd) = dims4(self.shape(x), "conv2d")?;
        let (c_out, wc_in, kh, kw) = dims4(self.shape(w), "conv2d weight")?;
        if wc_in != c_in {
            return Err(Error::shape(
                "conv2d",
                format!("input has {c_in} channels but weight expects {wc_in}"),
            ));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::shape(
                "conv2d",
                format!("kernel must be square and odd, got {kh}x{kw}"),
            ));
        }
        if let Some(b) = b {
            if self.shape(b) != [c_out] {
                return Err(Error::shape(
                    "conv2d",
                    format!("bias shape {:?} for {c_out} output channels", self.shape(b)),
                ));
            }
        }
        let geom = conv::ConvGeom {
            batch: n,
            c_in,
            c_out,
            h,
            w: wd,
            k: kh,
        };
        let mut out = Tensor::zeros(&[n, c_out, h, wd]);
        conv::forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            out.data_mut(),
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        Ok(self.push(out, Op::Conv2d { x, w, b }, rg))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::lit(slope);
        let out = self.value(x).map(|v| if v > T::zero() { v } else { v * s });
        let rg = self.rg(x);
        self.push(out, Op::LeakyRelu { x, slope: s }, rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let rg = self.rg(x);
        self.push(out, Op::Tanh { x }, rg)
    }

    /// Numerically stable softmax along `axis`.
    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {axis} out of range for {shape:?}"),
            ));
        }
        let (outer, len, inner) = axis_split(&shape, axis);
        let src = self.value(x).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let mut m = T::neg_infinity();
                for k in 0..len {
                    m = m.max(src[at(k)]);
                }
                let mut total = T::zero();
                for k in 0..len {
                    let e = (src[at(k)] - m).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[at(k)] = out[at(k)] / total;
                }
            }
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::from_vec(&shape, out)?, Op::Softmax { x, axis }, rg))
    }

    /// Backward warp: `out(p) = x(p + flow(p))` with bilinear interpolation
    /// and clamp-to-border. `flow` is `n x 2 x h x w` in normalized
    /// coordinates (`-1` / `+1` at the first / last pixel centre).
    pub fn grid_sample(&mut self, x: Var, flow: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.shape(x), "grid_sample")?;
        let (fnb, fc, fh, fw) = dims4(self.shape(flow), "grid_sample flow")?;
        if fc != 2 {
            return Err(Error::shape(
                "grid_sample",
                format!("flow must have 2 channels, got {fc}"),
            ));
        }
        if (fnb, fh, fw) != (n, h, w) {
            return Err(Error::shape(
                "grid_sample",
                format!("flow {:?} does not match features {:?}", self.shape(flow), self.shape(x)),
            ));
        }
        let plane = h * w;
        let mut out = Tensor::zeros(&[n, c, h, w]);
        {
            let xs = self.value(x).data();
            let fs = self.value(flow).data();
            let od = out.data_mut();
            for b in 0..n {
                let taps = sample::taps(&fs[b * 2 * plane..(b + 1) * 2 * plane], h, w);
                sample::grid_sample_forward(
                    &taps,
                    &xs[b * c * plane..(b + 1) * c * plane],
                    c,
                    &mut od[b * c * plane..(b + 1) * c * plane],
                );
            }
        }
        let rg = self.rg(x) || self.rg(flow);
        Ok(self.push(out, Op::GridSample { x, flow }, rg))
    }

    /// 2x2 average pooling.
    pub fn downsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.shape(x), "downsample2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::shape(
                "downsample2",
                format!("spatial size {h}x{w} is not even"),
            ));
        }
        let mut out = Tensor::zeros(&[n, c, h / 2, w / 2]);
        sample::down2_forward(self.value(x).data(), n * c, h, w, out.data_mut());
        let rg = self.rg(x);
        Ok(self.push(out, Op::Down2 { x }, rg))
    }

    /// Bilinear 2x upsampling (half-pixel centres, edge clamp).
    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.shape(x), "upsample2")?;
        let mut out = Tensor::zeros(&[n, c, 2 * h, 2 * w]);
        sample::up2_forward(self.value(x).data(), n * c, h, w, out.data_mut());
        let rg = self.rg(x);
        Ok(self.push(out, Op::Up2 { x }, rg))
    }

    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = xs
            .first()
            .ok_or_else(|| Error::shape("concat", "no inputs"))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(Error::shape("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let mut total = 0;
        for &v in xs {
            let s = self.shape(v);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (a, b))| i == axis || a == b);
            if !ok {
                return Err(Error::shape(
                    "concat",
                    format!("ragged inputs {base:?} and {s:?} along axis {axis}"),
                ));
            }
            total += s[axis];
        }
        let mut shape = base.clone();
        shape[axis] = total;
        let (outer, _, inner) = axis_split(&shape, axis);
        let mut out = Vec::with_capacity(shape.iter().product());
        for o in 0..outer {
            for &v in xs {
                let len = self.shape(v)[axis];
                let d = self.value(v).data();
                out.extend_from_slice(&d[o * len * inner..(o + 1) * len * inner]);
            }
        }
        let rg = xs.iter().any(|&v| self.rg(v));
        Ok(self.push(
            Tensor::from_vec(&shape, out)?,
            Op::Concat {
                xs: xs.to_vec(),
                axis,
            },
            rg,
        ))
    }

    fn zip_with(&mut self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        same_shape(op, self.shape(a), self.shape(b))?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::from_vec(va.shape(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("add", a, b, |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Add { a, b }, rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("sub", a, b, |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Sub { a, b }, rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.zip_with("mul", a, b, |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(out, Op::Mul { a, b }, rg))
    }

    pub fn scale(&mut self, x: Var, s: f64) -> Var {
        let s = T::lit(s);
        let out = self.value(x).map(|v| v * s);
        let rg = self.rg(x);
        self.push(out, Op::Scale { x, s }, rg)
    }

    pub fn clamp(&mut self, x: Var, lo: f64, hi: f64) -> Var {
        let (lo, hi) = (T::lit(lo), T::lit(hi));
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        let rg = self.rg(x);
        self.push(out, Op::Clamp { x, lo, hi }, rg)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().copied().sum::<T>();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Sum { x }, rg)
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let total = v.data().iter().copied().sum::<T>() / T::from_usize(v.numel().max(1)).unwrap();
        let rg = self.rg(x);
        self.push(Tensor::scalar(total), Op::Mean { x }, rg)
    }

    /// Scalar `sum_i weight_i * |x_i - target_i|`.
    pub fn weighted_abs(&mut self, x: Var, target: &Tensor<T>, weight: &[T]) -> Result<Var> {
        same_shape("weighted_abs", self.shape(x), target.shape())?;
        if weight.len() != target.numel() {
            return Err(Error::shape(
                "weighted_abs",
                format!("{} weights for {} elements", weight.len(), target.numel()),
            ));
        }
        let xs = self.value(x).data();
        let mut total = T::zero();
        let mut dcoef = Vec::with_capacity(xs.len());
        for ((&p, &t), &wt) in xs.iter().zip(target.data()).zip(weight) {
            let d = p - t;
            total += wt * d.abs();
            let sign = if d > T::zero() {
                T::one()
            } else if d < T::zero() {
                -T::one()
            } else {
                T::zero()
            };
            dcoef.push(wt * sign);
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(total), Op::WeightedAbs { x, dcoef }, rg))
    }

    /// Scalar `mean|x[.., j+1] - x[.., j]| + mean|x[i+1, ..] - x[i, ..]|`.
    pub fn gradient_l1(&mut self, x: Var) -> Result<Var> {
        let (n, c, h, w) = dims4(self.shape(x), "gradient_l1")?;
        let xs = self.value(x).data();
        let (sx, sy) = gradient_abs_sums(xs, n * c, h, w);
        let (cx, cy) = gradient_counts(n * c, h, w);
        let mut total = T::zero();
        if cx > 0 {
            total += sx / T::from_usize(cx).unwrap();
        }
        if cy > 0 {
            total += sy / T::from_usize(cy).unwrap();
        }
        let rg = self.rg(x);
        Ok(self.push(Tensor::scalar(total), Op::GradientL1 { x }, rg))
    }

    /// Reverse-mode sweep from a scalar `loss`.
    ///
    /// Leaf gradients are added to any gradient already stored, so calling
    /// this twice without [`Graph::zero_grad`] doubles them.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.value(loss).numel() != 1 {
            return Err(Error::shape(
                "backward",
                format!("loss must be scalar, got shape {:?}", self.shape(loss)),
            ));
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if let Op::Leaf = self.nodes[i].op {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(acc) => acc.data_mut().iter_mut().zip(&g).for_each(|(a, &b)| *a += b),
                    None => node.grad = Some(Tensor::from_vec(node.value.shape(), g)?),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        // Lazily allocated gradient slot for an input that needs one.
        fn slot<'a, T: Real>(
            graph: &Graph<T>,
            grads: &'a mut [Option<Vec<T>>],
            v: Var,
        ) -> Option<&'a mut Vec<T>> {
            if !graph.rg(v) {
                return None;
            }
            let n = graph.value(v).numel();
            Some(grads[v.0].get_or_insert_with(|| vec![T::zero(); n]))
        }
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b } => {
                let (n, c_in, h, wd) = self.value(*x).dims4()?;
                let (c_out, _, k, _) = self.value(*w).dims4()?;
                let geom = conv::ConvGeom {
                    batch: n,
                    c_in,
                    c_out,
                    h,
                    w: wd,
                    k,
                };
                // Three distinct slots: take them out to satisfy the borrow checker.
                let mut gx = slot(self, grads, *x).map(std::mem::take);
                let mut gw = slot(self, grads, *w).map(std::mem::take);
                let mut gb = b.and_then(|b| slot(self, grads, b).map(std::mem::take));
                conv::backward(
                    &geom,
                    self.value(*x).data(),
                    self.value(*w).data(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                if fault::is_active(FaultOp::Conv2d) {
                    if let Some(gw) = gw.as_mut() {
                        for v in gw.iter_mut() {
                            *v = *v * T::lit(1.01) + T::lit(1e-3);
                        }
                    }
                }
                if let Some(v) = gx {
                    grads[x.0] = Some(v);
                }
                if let Some(v) = gw {
                    grads[w.0] = Some(v);
                }
                if let (Some(v), Some(b)) = (gb, b) {
                    grads[b.0] = Some(v);
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xs = self.value(*x).data();
                if let Some(gx) = slot(self, grads, *x) {
                    for ((a, &gv), &v) in gx.iter_mut().zip(g).zip(xs) {
                        *a += if v > T::zero() { gv } else { gv * *slope };
                    }
                }
            }
            Op::Tanh { x } => {
                let ys = node.value.data();
                if let Some(gx) = slot(self, grads, *x) {
                    for ((a, &gv), &y) in gx.iter_mut().zip(g).zip(ys) {
                        *a += gv * (T::one() - y * y);
                    }
                }
            }
            Op::Softmax { x, axis } => {
                let ys = node.value.data();
                let (outer, len, inner) = axis_split(node.value.shape(), *axis);
                if let Some(gx) = slot(self, grads, *x) {
                    for o in 0..outer {
                        for ii in 0..inner {
                            let at = |k: usize| (o * len + k) * inner + ii;
                            let dot: T = (0..len).map(|k| g[at(k)] * ys[at(k)]).sum();
                            for k in 0..len {
                                gx[at(k)] += ys[at(k)] * (g[at(k)] - dot);
                            }
                        }
                    }
                    if fault::is_active(FaultOp::Softmax) {
                        gx.iter_mut().for_each(|v| *v = *v * T::lit(1.01));
                    }
                }
            }
            Op::GridSample { x, flow } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let plane = h * w;
                let xs = self.value(*x).data();
                let fs = self.value(*flow).data();
                let mut gx = slot(self, grads, *x).map(std::mem::take);
                let mut gf = slot(self, grads, *flow).map(std::mem::take);
                for b in 0..n {
                    let taps = sample::taps(&fs[b * 2 * plane..(b + 1) * 2 * plane], h, w);
                    sample::grid_sample_backward(
                        &taps,
                        &xs[b * c * plane..(b + 1) * c * plane],
                        c,
                        &g[b * c * plane..(b + 1) * c * plane],
                        gx.as_mut().map(|v| &mut v[b * c * plane..(b + 1) * c * plane]),
                        gf.as_mut().map(|v| &mut v[b * 2 * plane..(b + 1) * 2 * plane]),
                    );
                }
                if fault::is_active(FaultOp::GridSample) {
                    if let Some(gf) = gf.as_mut() {
                        gf.iter_mut().for_each(|v| *v = *v * T::lit(1.01));
                    }
                }
                if let Some(v) = gx {
                    grads[x.0] = Some(v);
                }
                if let Some(v) = gf {
                    grads[flow.0] = Some(v);
                }
            }
            Op::Down2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                if let Some(gx) = slot(self, grads, *x) {
                    sample::down2_backward(g, n * c, h, w, gx);
                }
            }
            Op::Up2 { x } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                if let Some(gx) = slot(self, grads, *x) {
                    sample::up2_backward(g, n * c, h, w, gx);
                }
            }
            Op::Concat { xs, axis } => {
                let (outer, _, inner) = axis_split(node.value.shape(), *axis);
                let mut offset = 0;
                let total = node.value.shape()[*axis];
                for &v in xs {
                    let len = self.shape(v)[*axis];
                    if let Some(gv) = slot(self, grads, v) {
                        for o in 0..outer {
                            let src = &g[(o * total + offset) * inner..(o * total + offset + len) * inner];
                            let dst = &mut gv[o * len * inner..(o + 1) * len * inner];
                            dst.iter_mut().zip(src).for_each(|(a, &b)| *a += b);
                        }
                    }
                    offset += len;
                }
            }
            Op::Add { a, b } | Op::Sub { a, b } => {
                let negate = matches!(node.op, Op::Sub { .. });
                if let Some(ga) = slot(self, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                }
                if let Some(gb) = slot(self, grads, *b) {
                    if negate {
                        gb.iter_mut().zip(g).for_each(|(x, &y)| *x -= y);
                    } else {
                        gb.iter_mut().zip(g).for_each(|(x, &y)| *x += y);
                    }
                }
            }
            Op::Mul { a, b } => {
                let va = self.value(*a).data();
                let vb = self.value(*b).data();
                if let Some(ga) = slot(self, grads, *a) {
                    for ((x, &gv), &o) in ga.iter_mut().zip(g).zip(vb) {
                        *x += gv * o;
                    }
                }
                if let Some(gb) = slot(self, grads, *b) {
                    for ((x, &gv), &o) in gb.iter_mut().zip(g).zip(va) {
                        *x += gv * o;
                    }
                }
            }
            Op::Scale { x, s } => {
                if let Some(gx) = slot(self, grads, *x) {
                    gx.iter_mut().zip(g).for_each(|(a, &b)| *a += b * *s);
                }
            }
            Op::Clamp { x, lo, hi } => {
                let xs = self.value(*x).data();
                if let Some(gx) = slot(self, grads, *x) {
                    for ((a, &gv), &v) in gx.iter_mut().zip(g).zip(xs) {
                        if v >= *lo && v <= *hi {
                            *a += gv;
                        }
                    }
                }
            }
            Op::Sum { x } => {
                if let Some(gx) = slot(self, grads, *x) {
                    gx.iter_mut().for_each(|a| *a += g[0]);
                }
            }
            Op::Mean { x } => {
                if let Some(gx) = slot(self, grads, *x) {
                    let d = g[0] / T::from_usize(gx.len().max(1)).unwrap();
                    gx.iter_mut().for_each(|a| *a += d);
                }
            }
            Op::WeightedAbs { x, dcoef } => {
                if let Some(gx) = slot(self, grads, *x) {
                    gx.iter_mut().zip(dcoef).for_each(|(a, &c)| *a += g[0] * c);
                }
            }
            Op::GradientL1 { x } => {
                let (n, c, h, w) = self.value(*x).dims4()?;
                let xs = self.value(*x).data();
                let (cx, cy) = gradient_counts(n * c, h, w);
                if let Some(gx) = slot(self, grads, *x) {
                    let kx = if cx > 0 { g[0] / T::from_usize(cx).unwrap() } else { T::zero() };
                    let ky = if cy > 0 { g[0] / T::from_usize(cy).unwrap() } else { T::zero() };
                    let sgn = |d: T| {
                        if d > T::zero() {
                            T::one()
                        } else if d < T::zero() {
                            -T::one()
                        } else {
                            T::zero()
                        }
                    };
                    for p in 0..n * c {
                        let base = p * h * w;
                        for y in 0..h {
                            for xx in 0..w {
                                let i = base + y * w + xx;
                                if xx + 1 < w {
                                    let s = sgn(xs[i + 1] - xs[i]) * kx;
                                    gx[i + 1] += s;
                                    gx[i] -= s;
                                }
                                if y + 1 < h {
                                    let s = sgn(xs[i + w] - xs[i]) * ky;
                                    gx[i + w] += s;
                                    gx[i] -= s;
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// `(outer, len, inner)` strides for reducing along `axis`.
fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn gradient_counts(planes: usize, h: usize, w: usize) -> (usize, usize) {
    (planes * h * w.saturating_sub(1), planes * h.saturating_sub(1) * w)
}

fn gradient_abs_sums<T: Real>(xs: &[T], planes: usize, h: usize, w: usize) -> (T, T) {
    let mut sx = T::zero();
    let mut sy = T::zero();
    for p in 0..planes {
        let base = p * h * w;
        for y in 0..h {
            for x in 0..w {
                let i = base + y * w + x;
                if x + 1 < w {
                    sx += (xs[i + 1] - xs[i]).abs();
                }
                if y + 1 < h {
                    sy += (xs[i + w] - xs[i]).abs();
                }
            }
        }
    }
    (sx, sy)
}
