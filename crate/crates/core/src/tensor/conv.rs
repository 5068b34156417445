//! Same-padded stride-1 convolution via im2col + GEMM.

use super::{matmul, MatRef, Real};

#[derive(Clone, Copy, Debug)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        self.k / 2
    }

    fn col_rows(&self) -> usize {
        self.c_in * self.k * self.k
    }

    fn plane(&self) -> usize {
        self.h * self.w
    }
}

/// Unfolds one image (`c_in x h x w`) into `(c_in*k*k) x (h*w)` columns.
fn im2col<T: Real>(g: &ConvGeom, img: &[T], cols: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad() as isize);
    let plane = g.plane();
    for ci in 0..g.c_in {
        let src = &img[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut cols[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                // valid output x range where 0 <= x + dx < w
                let x_lo = (-dx).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                for y in 0..h {
                    let sy = y as isize + dy;
                    let out_row = &mut dst[y * w..(y + 1) * w];
                    if sy < 0 || sy >= h as isize || x_lo >= x_hi {
                        out_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src_row = &src[sy as usize * w..(sy as usize + 1) * w];
                    out_row[..x_lo].iter_mut().for_each(|v| *v = T::zero());
                    out_row[x_hi..].iter_mut().for_each(|v| *v = T::zero());
                    let s0 = (x_lo as isize + dx) as usize;
                    out_row[x_lo..x_hi].copy_from_slice(&src_row[s0..s0 + (x_hi - x_lo)]);
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters columns back into `img` (accumulating).
fn col2im<T: Real>(g: &ConvGeom, cols: &[T], img: &mut [T]) {
    let (h, w, k, pad) = (g.h, g.w, g.k, g.pad() as isize);
    let plane = g.plane();
    for ci in 0..g.c_in {
        let dst = &mut img[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &cols[row * plane..(row + 1) * plane];
                let dx = kx as isize - pad;
                let dy = ky as isize - pad;
                let x_lo = (-dx).clamp(0, w as isize) as usize;
                let x_hi = (w as isize - dx).clamp(0, w as isize) as usize;
                if x_lo >= x_hi {
                    continue;
                }
                for y in 0..h {
                    let sy = y as isize + dy;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let s0 = (x_lo as isize + dx) as usize;
                    let d = &mut dst[sy as usize * w + s0..sy as usize * w + s0 + (x_hi - x_lo)];
                    let s = &src[y * w + x_lo..y * w + x_hi];
                    for (a, &b) in d.iter_mut().zip(s) {
                        *a += b;
                    }
                }
            }
        }
    }
}

pub(crate) fn forward<T: Real>(g: &ConvGeom, x: &[T], weight: &[T], bias: Option<&[T]>, out: &mut [T]) {
    let plane = g.plane();
    let kk = g.col_rows();
    let mut cols = if g.k == 1 { Vec::new() } else { vec![T::zero(); kk * plane] };
    for n in 0..g.batch {
        let img = &x[n * g.c_in * plane..(n + 1) * g.c_in * plane];
        let o = &mut out[n * g.c_out * plane..(n + 1) * g.c_out * plane];
        let b_mat = if g.k == 1 {
            MatRef::new(img, kk, plane)
        } else {
            im2col(g, img, &mut cols);
            MatRef::new(&cols, kk, plane)
        };
        matmul(MatRef::new(weight, g.c_out, kk), b_mat, o, false);
        if let Some(bias) = bias {
            for (co, &b) in bias.iter().enumerate() {
                o[co * plane..(co + 1) * plane].iter_mut().for_each(|v| *v += b);
            }
        }
    }
}

/// Accumulates input, weight and bias gradients for one convolution.
#[allow(clippy::too_many_arguments)]
pub(crate) fn backward<T: Real>(
    g: &ConvGeom,
    x: &[T],
    weight: &[T],
    gout: &[T],
    mut gx: Option<&mut [T]>,
    mut gw: Option<&mut [T]>,
    mut gb: Option<&mut [T]>,
) {
    let plane = g.plane();
    let kk = g.col_rows();
    let need_cols = g.k != 1 && (gw.is_some() || gx.is_some());
    let mut cols = if need_cols { vec![T::zero(); kk * plane] } else { Vec::new() };
    let mut gcols = if g.k != 1 && gx.is_some() {
        vec![T::zero(); kk * plane]
    } else {
        Vec::new()
    };
    for n in 0..g.batch {
        let img = &x[n * g.c_in * plane..(n + 1) * g.c_in * plane];
        let go = &gout[n * g.c_out * plane..(n + 1) * g.c_out * plane];
        if let Some(gb) = gb.as_deref_mut() {
            for (co, acc) in gb.iter_mut().enumerate() {
                *acc += go[co * plane..(co + 1) * plane].iter().copied().sum::<T>();
            }
        }
        if let Some(gw) = gw.as_deref_mut() {
            let cols_ref = if g.k == 1 {
                MatRef::new(img, kk, plane)
            } else {
                im2col(g, img, &mut cols);
                MatRef::new(&cols, kk, plane)
            };
            matmul(MatRef::new(go, g.c_out, plane), cols_ref.t(), gw, true);
        }
        if let Some(gx) = gx.as_deref_mut() {
            let gimg = &mut gx[n * g.c_in * plane..(n + 1) * g.c_in * plane];
            let w_t = MatRef::new(weight, g.c_out, kk).t();
            if g.k == 1 {
                matmul(w_t, MatRef::new(go, g.c_out, plane), gimg, true);
            } else {
                matmul(w_t, MatRef::new(go, g.c_out, plane), &mut gcols, false);
                col2im(g, &gcols, gimg);
            }
        }
    }
}
