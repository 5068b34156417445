//! Built-in oracles: gradient checks for every operator, tessellation
//! invariants and warp/loss identities.
//!
//! Runs on the calling thread so thread-local fault injection is visible.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mesh::{phong_point, phong_project, shapes, tessellate_phong, TessellationConfig, Vec3};
use crate::network::{forward, init_params, ModelConfig};
use crate::tensor::{grad_check, GradCheck, Graph, Tensor, Var};
use crate::training::{loss_percep, loss_rr, loss_shade, total_loss, LossConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured value against its bound.
    pub detail: String,
}

#[derive(Clone, Debug, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
    pub seconds: f64,
}

impl SelftestReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> Vec<String> {
        self.checks.iter().filter(|c| !c.passed).map(|c| c.name.clone()).collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
        let failed = self.checks.iter().filter(|c| !c.passed).count();
        let _ = writeln!(
            s,
            "{} checks, {failed} failed, {:.1}s",
            self.checks.len(),
            self.seconds
        );
        s
    }
}

fn bound_check(name: &str, value: Result<f64>, bound: f64) -> Check {
    match value {
        Ok(v) => Check {
            name: name.into(),
            passed: v < bound && v.is_finite(),
            detail: format!("{v:.3e} < {bound:.0e}"),
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn exact_check(name: &str, ok: Result<bool>, what: &str) -> Check {
    match ok {
        Ok(p) => Check {
            name: name.into(),
            passed: p,
            detail: what.into(),
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn random(rng: &mut ChaCha8Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape matches")
}

/// Values bounded away from zero (for kinked ops).
fn away_from_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    random(rng, shape, 0.1, 1.0).map(|v| if rng_sign(v) { v } else { -v })
}

fn rng_sign(v: f64) -> bool {
    // deterministic sign pattern from the mantissa
    (v * 1e6) as i64 % 2 == 0
}

/// `sum(out * r)` for a fixed random `r`, so every output element matters.
fn project_scalar(g: &mut Graph<f64>, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random(&mut rng, g.shape(out), -1.0, 1.0);
    let r = g.input(r);
    let m = g.mul(out, r)?;
    Ok(g.sum(m))
}

const SMOOTH_TOL: f64 = 1e-5;
const BILINEAR_TOL: f64 = 1e-4;

/// Gradient checks for every differentiable operator and loss.
pub fn operator_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut out = Vec::new();
    let gc = GradCheck {
        eps: 1e-5,
        ..GradCheck::default()
    };

    for (k, name) in [(3, "conv2d_3x3"), (7, "conv2d_7x7"), (1, "conv2d_1x1")] {
        let x = random(&mut rng, &[2, 3, 9, 8], -1.0, 1.0);
        let w = random(&mut rng, &[4, 3, k, k], -0.5, 0.5);
        let b = random(&mut rng, &[4], -0.5, 0.5);
        let r = gc.run(
            |g, v| {
                let y = g.conv2d(v[0], v[1], Some(v[2]))?;
                project_scalar(g, y, 1)
            },
            &[x, w, b],
        );
        out.push(bound_check(name, r, SMOOTH_TOL));
    }

    let x = away_from_zero(&mut rng, &[2, 3, 5, 4]);
    let r = gc.run(
        |g, v| {
            let y = g.leaky_relu(v[0], 0.2);
            project_scalar(g, y, 2)
        },
        std::slice::from_ref(&x),
    );
    out.push(bound_check("leaky_relu", r, SMOOTH_TOL));

    let x = random(&mut rng, &[2, 3, 5, 4], -2.0, 2.0);
    let r = gc.run(
        |g, v| {
            let y = g.tanh(v[0]);
            project_scalar(g, y, 3)
        },
        &[x],
    );
    out.push(bound_check("tanh", r, SMOOTH_TOL));

    let x = random(&mut rng, &[2, 5, 4, 3], -2.0, 2.0);
    let r = gc.run(
        |g, v| {
            let y = g.softmax(v[0], 1)?;
            project_scalar(g, y, 4)
        },
        &[x],
    );
    out.push(bound_check("softmax", r, SMOOTH_TOL));

    // Flow keeps sample points between lattice lines: offsets of 0.2..0.8 px.
    let (h, w) = (6, 7);
    let x = random(&mut rng, &[2, 3, h, w], -1.0, 1.0);
    let mut flow = Tensor::zeros(&[2, 2, h, w]);
    for (i, f) in flow.data_mut().iter_mut().enumerate() {
        let side = if (i / (h * w)) % 2 == 0 { w } else { h };
        let px = rng.gen_range(0.2..0.8) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        *f = px * 2.0 / (side - 1) as f64;
    }
    let r = gc.run(
        |g, v| {
            let y = g.grid_sample(v[0], v[1])?;
            project_scalar(g, y, 5)
        },
        &[x, flow],
    );
    out.push(bound_check("grid_sample", r, BILINEAR_TOL));

    let x = random(&mut rng, &[2, 3, 6, 8], -1.0, 1.0);
    let r = gc.run(
        |g, v| {
            let y = g.downsample2(v[0])?;
            project_scalar(g, y, 6)
        },
        &[x],
    );
    out.push(bound_check("downsample2", r, SMOOTH_TOL));

    let x = random(&mut rng, &[2, 3, 3, 4], -1.0, 1.0);
    let r = gc.run(
        |g, v| {
            let y = g.upsample2(v[0])?;
            project_scalar(g, y, 7)
        },
        &[x],
    );
    out.push(bound_check("upsample2", r, SMOOTH_TOL));

    let a = random(&mut rng, &[2, 3, 4, 4], -1.0, 1.0);
    let b = random(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
    let r = gc.run(
        |g, v| {
            let y = g.concat(&[v[0], v[1]], 1)?;
            project_scalar(g, y, 8)
        },
        &[a, b],
    );
    out.push(bound_check("concat", r, SMOOTH_TOL));

    // Losses: predictions kept well away from the label so |.| is smooth.
    let label = random(&mut rng, &[2, 3, 8, 8], 0.2, 0.8);
    let input = random(&mut rng, &[2, 3, 8, 8], 0.0, 1.0);
    let offset = away_from_zero(&mut rng, &[2, 3, 8, 8]).map(|v| v * 0.3);
    let pred: Tensor<f64> = Tensor::from_vec(
        label.shape(),
        label.data().iter().zip(offset.data()).map(|(l, o)| l + o).collect(),
    )
    .expect("same shape");
    let r = grad_check(|g, v| loss_rr(g, v[0], &label, &input, 1e-6), std::slice::from_ref(&pred), 1e-6);
    out.push(bound_check("loss_rr", r, SMOOTH_TOL));
    let r = grad_check(|g, v| loss_shade(g, v[0], &label, 10), std::slice::from_ref(&pred), 1e-6);
    out.push(bound_check("loss_shade", r, SMOOTH_TOL));
    let r = grad_check(|g, v| loss_percep(g, v[0], &label), std::slice::from_ref(&pred), 1e-6);
    out.push(bound_check("loss_percep", r, SMOOTH_TOL));
    out
}

fn unit(rng: &mut ChaCha8Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if v.norm() > 0.1 {
            return v.normalize();
        }
    }
}

fn mean_radial_error(level: u32, alpha: f64) -> f64 {
    let m = tessellate_phong(&shapes::icosphere(1), &TessellationConfig { level, alpha });
    m.vertices().iter().map(|p| (p.norm() - 1.0).abs()).sum::<f64>() / m.num_vertices() as f64
}

/// Tangent-plane projection and tessellation invariants.
pub fn phong_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut residual: f64 = 0.0;
    let mut corners_exact = true;
    let mut planar: f64 = 0.0;
    for _ in 0..1000 {
        let p = Vec3::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = unit(&mut rng);
        match phong_project(p, v, n) {
            Ok(q) => residual = residual.max((q - v).dot(&n).abs()),
            Err(_) => residual = f64::INFINITY,
        }

        let tri = [0, 1, 2].map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let normals = [unit(&mut rng), unit(&mut rng), unit(&mut rng)];
        let alpha = rng.gen_range(0.0..1.0);
        for (c, uvw) in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]].into_iter().enumerate() {
            corners_exact &= phong_point(tri, normals, uvw, alpha) == tri[c];
        }

        // coplanar corners sharing the plane normal stay in the plane
        let face_n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
        if face_n.norm() < 1e-3 {
            continue;
        }
        let face_n = face_n.normalize();
        let u: f64 = rng.gen_range(0.0..1.0);
        let v: f64 = rng.gen_range(0.0..1.0 - u);
        let q = phong_point(tri, [face_n; 3], [u, v, 1.0 - u - v], alpha);
        planar = planar.max((q - tri[0]).dot(&face_n).abs());
    }
    let smooth = mean_radial_error(4, 0.75);
    let flat = mean_radial_error(4, 0.0);
    vec![
        bound_check("phong_plane_residual", Ok(residual), 1e-9),
        exact_check("phong_corner_fixed_points", Ok(corners_exact), "corners bit-exact"),
        bound_check("phong_planarity", Ok(planar), 1e-9),
        Check {
            name: "phong_sphere_error".into(),
            passed: smooth < flat,
            detail: format!("alpha=0.75 {smooth:.5} < alpha=0 {flat:.5}"),
        },
    ]
}

/// Constant flow of `(dx, dy)` pixels in normalized units.
pub fn constant_flow(n: usize, h: usize, w: usize, dx: f64, dy: f64) -> Tensor<f64> {
    let plane = h * w;
    let mut f = Tensor::zeros(&[n, 2, h, w]);
    for b in 0..n {
        let d = &mut f.data_mut()[b * 2 * plane..(b + 1) * 2 * plane];
        d[..plane].fill(dx * 2.0 / (w - 1) as f64);
        d[plane..].fill(dy * 2.0 / (h - 1) as f64);
    }
    f
}

fn warp(x: &Tensor<f64>, flow: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let fv = g.input(flow.clone());
    let y = g.grid_sample(xv, fv)?;
    Ok(g.value(y).clone())
}

/// Warp identities: zero flow, one-pixel roll, flow accumulation.
pub fn warp_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (n, c, h, w) = (2, 3, 8, 10);
    let x = random(&mut rng, &[n, c, h, w], -1.0, 1.0);

    let zero = warp(&x, &Tensor::zeros(&[n, 2, h, w])).map(|y| y == x);

    let roll = warp(&x, &constant_flow(n, h, w, 1.0, 0.0)).map(|y| {
        (0..n).all(|b| {
            (0..c).all(|ch| (0..h).all(|yy| (0..w - 1).all(|xx| y.at(b, ch, yy, xx) == x.at(b, ch, yy, xx + 1))))
        })
    });

    // Coarse flow carried up one scale and summed with a fine flow, as in
    // the cumulative-flow path, against a single warp by the summed flow.
    let accumulate = (|| -> Result<f64> {
        let (a, b) = ((0.35, -0.6), (-0.9, 0.45));
        let mut g = Graph::new();
        let coarse = g.input(constant_flow(n, h / 2, w / 2, a.0 * (w / 2 - 1) as f64 / (w - 1) as f64, a.1 * (h / 2 - 1) as f64 / (h - 1) as f64));
        let carried = g.upsample2(coarse)?;
        let fine = g.input(constant_flow(n, h, w, b.0, b.1));
        let cum = g.add(carried, fine)?;
        let xv = g.input(x.clone());
        let y = g.grid_sample(xv, cum)?;
        let oracle = warp(&x, &constant_flow(n, h, w, a.0 + b.0, a.1 + b.1))?;
        Ok(g.value(y).data().iter().zip(oracle.data()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max))
    })();

    vec![
        exact_check("warp_zero_flow_identity", zero, "bitwise on lattice"),
        exact_check("warp_one_pixel_roll", roll, "bitwise on interior"),
        bound_check("warp_flow_accumulation", accumulate, 1e-6),
    ]
}

/// Residual-relative, top-k and weighted-total identities.
pub fn loss_checks() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let label = random(&mut rng, &[2, 3, 4, 4], 0.0, 1.0);
    let input = random(&mut rng, &[2, 3, 4, 4], 0.0, 1.0);
    let pred = random(&mut rng, &[2, 3, 4, 4], 0.0, 1.0);
    let eval = |f: &dyn Fn(&mut Graph<f64>, Var) -> Result<Var>, p: &Tensor<f64>| -> Result<f64> {
        let mut g = Graph::new();
        let v = g.param(p.clone());
        let out = f(&mut g, v)?;
        Ok(g.value(out).data()[0])
    };

    let rr_zero = eval(&|g, v| loss_rr(g, v, &label, &input, 1e-6), &label).map(|v| v == 0.0);

    let shade_all = eval(&|g, v| loss_shade(g, v, &label, 16), &pred).map(|v| {
        let mean = pred.data().iter().zip(label.data()).map(|(p, l)| (p - l).abs()).sum::<f64>() / pred.numel() as f64;
        (v - mean).abs()
    });

    // Two pixels, one channel: |0.5-0.4|/(0.4+eps) and 0/(0.1+eps), averaged.
    let two = (|| -> Result<f64> {
        let l = Tensor::from_vec(&[1, 1, 1, 2], vec![0.4, 0.2])?;
        let i = Tensor::from_vec(&[1, 1, 1, 2], vec![0.0, 0.3])?;
        let p = Tensor::from_vec(&[1, 1, 1, 2], vec![0.5, 0.2])?;
        let v = eval(&|g, v| loss_rr(g, v, &l, &i, 1e-6), &p)?;
        Ok((v - 0.124_999_687_500_781_2).abs())
    })();

    let preset = (|| -> Result<f64> {
        let cfg = LossConfig::paper();
        let ok = (cfg.lambda_rr, cfg.lambda_shade, cfg.lambda_percep) == (0.1, 10.0, 30.0);
        let mut g = Graph::new();
        let v = g.param(pred.clone());
        let l = total_loss(&mut g, v, &label, &input, &cfg)?.values(&g);
        let combined = 0.1 * l.rr + 10.0 * l.shade + 30.0 * l.percep;
        Ok(if ok { (l.total - combined).abs() / combined.abs().max(1e-12) } else { f64::INFINITY })
    })();

    vec![
        exact_check("loss_rr_zero_at_label", rr_zero, "exactly 0"),
        bound_check("loss_shade_k_all_is_l1", shade_all, 1e-12),
        bound_check("loss_rr_two_pixel_case", two, 1e-6),
        bound_check("loss_paper_preset", preset, 1e-12),
    ]
}

/// Permuting color channels leaves every geometry-driven intermediate
/// bitwise unchanged.
pub fn invariance_check() -> Check {
    let r = (|| -> Result<bool> {
        let cfg = ModelConfig {
            c_g: 8,
            c_d: 8,
            c_c: 8,
            ..ModelConfig::default()
        };
        let params = init_params(&cfg, 3)?;
        // nonzero flow head so the warped paths are exercised
        let mut params = params;
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for t in 1..=cfg.scales {
            if let Some(w) = params.get_mut(&format!("s{t}.fw.1.weight")) {
                for v in w.data_mut() {
                    *v = rng.gen_range(-0.05..0.05);
                }
            }
        }
        let (h, w) = (16, 16);
        let color: Tensor<f32> = random(&mut rng, &[1, 3, h, w], 0.0, 1.0).cast();
        let geom: Tensor<f32> = random(&mut rng, &[1, 8, h, w], -1.0, 1.0).cast();
        let plane = h * w;
        let mut permuted = color.clone();
        for (dst, src) in [(0, 2), (1, 0), (2, 1)] {
            permuted.data_mut()[dst * plane..(dst + 1) * plane].copy_from_slice(&color.data()[src * plane..(src + 1) * plane]);
        }
        let run = |c: &Tensor<f32>| -> Result<Vec<Tensor<f32>>> {
            let mut g = Graph::new();
            let b = params.bind(&mut g);
            let cv = g.input(c.clone());
            let gv = g.input(geom.clone());
            let f = forward(&mut g, &b, &cfg, cv, gv)?;
            let mut vars: Vec<Var> = f.guidance.clone();
            vars.extend(&f.deform);
            vars.extend(f.flow.iter().flatten());
            vars.extend(f.cum_flow.iter().flatten());
            Ok(vars.into_iter().map(|v| g.value(v).clone()).collect())
        };
        Ok(run(&color)? == run(&permuted)?)
    })();
    exact_check("guidance_color_invariance", r, "z_g, z_d, v, cumulative v bitwise equal")
}

pub fn run() -> SelftestReport {
    let start = Instant::now();
    let mut checks = operator_checks();
    checks.extend(phong_checks());
    checks.extend(warp_checks());
    checks.extend(loss_checks());
    checks.push(invariance_check());
    SelftestReport {
        checks,
        seconds: start.elapsed().as_secs_f64(),
    }
}
