//! Resampling kernels: bilinear backward warping and the 2x pyramid steps.

use super::Real;

/// Bilinear taps for one output pixel of a backward warp.
#[derive(Clone, Copy)]
pub(crate) struct Tap<T> {
    idx: [usize; 4],
    wt: [T; 4],
    ax: T,
    ay: T,
    /// `d(sample position)/d(flow)`; zero where the sample was clamped.
    sx: T,
    sy: T,
}

/// Sample positions for `flow` of shape `2 x h x w` (one batch element).
///
/// Flow is in normalized coordinates: a displacement of 2 spans the image,
/// so one pixel pitch is `2 / (w - 1)` horizontally.
pub(crate) fn taps<T: Real>(flow: &[T], h: usize, w: usize) -> Vec<Tap<T>> {
    let plane = h * w;
    let half = T::lit(0.5);
    let scale_x = T::from_usize(w.saturating_sub(1)).unwrap() * half;
    let scale_y = T::from_usize(h.saturating_sub(1)).unwrap() * half;
    let axis = |pos: T, len: usize| -> (usize, usize, T, bool) {
        let hi = T::from_usize(len - 1).unwrap();
        let inside = pos >= T::zero() && pos <= hi;
        let p = pos.max(T::zero()).min(hi);
        let mut i0 = p.floor().to_usize().unwrap_or(0);
        if len >= 2 {
            i0 = i0.min(len - 2);
        } else {
            i0 = 0;
        }
        let i1 = (i0 + 1).min(len - 1);
        let a = p - T::from_usize(i0).unwrap();
        (i0, i1, a, inside)
    };
    let mut out = Vec::with_capacity(plane);
    for y in 0..h {
        for x in 0..w {
            let p = y * w + x;
            let px = T::from_usize(x).unwrap() + flow[p] * scale_x;
            let py = T::from_usize(y).unwrap() + flow[plane + p] * scale_y;
            let (x0, x1, ax, in_x) = axis(px, w);
            let (y0, y1, ay, in_y) = axis(py, h);
            let one = T::one();
            out.push(Tap {
                idx: [y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1],
                wt: [
                    (one - ay) * (one - ax),
                    (one - ay) * ax,
                    ay * (one - ax),
                    ay * ax,
                ],
                ax,
                ay,
                sx: if in_x { scale_x } else { T::zero() },
                sy: if in_y { scale_y } else { T::zero() },
            });
        }
    }
    out
}

/// Warps every channel plane of one batch element.
pub(crate) fn grid_sample_forward<T: Real>(taps: &[Tap<T>], x: &[T], channels: usize, out: &mut [T]) {
    let plane = taps.len();
    let one = T::one();
    for c in 0..channels {
        let src = &x[c * plane..(c + 1) * plane];
        let dst = &mut out[c * plane..(c + 1) * plane];
        for (d, t) in dst.iter_mut().zip(taps) {
            let top = (one - t.ax) * src[t.idx[0]] + t.ax * src[t.idx[1]];
            let bottom = (one - t.ax) * src[t.idx[2]] + t.ax * src[t.idx[3]];
            *d = (one - t.ay) * top + t.ay * bottom;
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn grid_sample_backward<T: Real>(
    taps: &[Tap<T>],
    x: &[T],
    channels: usize,
    gout: &[T],
    gx: Option<&mut [T]>,
    gflow: Option<&mut [T]>,
) {
    let plane = taps.len();
    let one = T::one();
    if let Some(gx) = gx {
        for c in 0..channels {
            let g = &gout[c * plane..(c + 1) * plane];
            let dst = &mut gx[c * plane..(c + 1) * plane];
            for (t, &gv) in taps.iter().zip(g) {
                for k in 0..4 {
                    dst[t.idx[k]] += gv * t.wt[k];
                }
            }
        }
    }
    if let Some(gflow) = gflow {
        let (gfx, gfy) = gflow.split_at_mut(plane);
        for c in 0..channels {
            let src = &x[c * plane..(c + 1) * plane];
            let g = &gout[c * plane..(c + 1) * plane];
            for (p, t) in taps.iter().enumerate() {
                let (v00, v01, v10, v11) = (src[t.idx[0]], src[t.idx[1]], src[t.idx[2]], src[t.idx[3]]);
                let dpx = (one - t.ay) * (v01 - v00) + t.ay * (v11 - v10);
                let dpy = (one - t.ax) * (v10 - v00) + t.ax * (v11 - v01);
                gfx[p] += g[p] * dpx * t.sx;
                gfy[p] += g[p] * dpy * t.sy;
            }
        }
    }
}

/// 2x2 average pooling over `planes` planes of `h x w` (both even).
pub(crate) fn down2_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize, out: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::lit(0.25);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let a = src[2 * y * w + 2 * xx];
                let b = src[2 * y * w + 2 * xx + 1];
                let c = src[(2 * y + 1) * w + 2 * xx];
                let d = src[(2 * y + 1) * w + 2 * xx + 1];
                dst[y * ow + xx] = (a + b + c + d) * q;
            }
        }
    }
}

pub(crate) fn down2_backward<T: Real>(gout: &[T], planes: usize, h: usize, w: usize, gx: &mut [T]) {
    let (oh, ow) = (h / 2, w / 2);
    let q = T::lit(0.25);
    for p in 0..planes {
        let g = &gout[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for y in 0..oh {
            for xx in 0..ow {
                let v = g[y * ow + xx] * q;
                dst[2 * y * w + 2 * xx] += v;
                dst[2 * y * w + 2 * xx + 1] += v;
                dst[(2 * y + 1) * w + 2 * xx] += v;
                dst[(2 * y + 1) * w + 2 * xx + 1] += v;
            }
        }
    }
}

/// Half-pixel-centred bilinear taps for doubling an axis of length `len`.
fn up2_axis<T: Real>(len: usize) -> Vec<(usize, T, usize, T)> {
    let near = T::lit(0.75);
    let far = T::lit(0.25);
    (0..2 * len)
        .map(|o| {
            let i = o / 2;
            let j = if o % 2 == 0 {
                i.saturating_sub(1)
            } else {
                (i + 1).min(len - 1)
            };
            (i, near, j, far)
        })
        .collect()
}

pub(crate) fn up2_forward<T: Real>(x: &[T], planes: usize, h: usize, w: usize, out: &mut [T]) {
    let ty = up2_axis::<T>(h);
    let tx = up2_axis::<T>(w);
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * oh * ow..(p + 1) * oh * ow];
        for (oy, &(ya, wa, yb, wb)) in ty.iter().enumerate() {
            for (ox, &(xa, va, xb, vb)) in tx.iter().enumerate() {
                let top = va * src[ya * w + xa] + vb * src[ya * w + xb];
                let bottom = va * src[yb * w + xa] + vb * src[yb * w + xb];
                dst[oy * ow + ox] = wa * top + wb * bottom;
            }
        }
    }
}

pub(crate) fn up2_backward<T: Real>(gout: &[T], planes: usize, h: usize, w: usize, gx: &mut [T]) {
    let ty = up2_axis::<T>(h);
    let tx = up2_axis::<T>(w);
    let (oh, ow) = (2 * h, 2 * w);
    for p in 0..planes {
        let g = &gout[p * oh * ow..(p + 1) * oh * ow];
        let dst = &mut gx[p * h * w..(p + 1) * h * w];
        for (oy, &(ya, wa, yb, wb)) in ty.iter().enumerate() {
            for (ox, &(xa, va, xb, vb)) in tx.iter().enumerate() {
                let gv = g[oy * ow + ox];
                dst[ya * w + xa] += gv * wa * va;
                dst[ya * w + xb] += gv * wa * vb;
                dst[yb * w + xa] += gv * wb * va;
                dst[yb * w + xb] += gv * wb * vb;
            }
        }
    }
}
