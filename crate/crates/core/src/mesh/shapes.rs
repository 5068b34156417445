//! Procedural low-poly meshes used as scene content.
//!
//! Smooth shapes carry analytic shading normals; flat features (cylinder
//! caps, boxes) use split vertices so their shading normals equal the
//! face normal.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use super::{Mesh, Vec3};

/// Flips faces whose winding disagrees with the mean of their corner normals.
fn orient(vertices: &[Vec3], triangles: &mut [[u32; 3]], normals: &[Vec3]) {
    for t in triangles.iter_mut() {
        let [a, b, c] = t.map(|i| vertices[i as usize]);
        let cr = (b - a).cross(&(c - a));
        let avg = normals[t[0] as usize] + normals[t[1] as usize] + normals[t[2] as usize];
        if cr.dot(&avg) < 0.0 {
            t.swap(1, 2);
        }
    }
}

fn build(vertices: Vec<Vec3>, mut triangles: Vec<[u32; 3]>, normals: Vec<Vec3>) -> Mesh {
    orient(&vertices, &mut triangles, &normals);
    Mesh::with_normals(vertices, triangles, normals).expect("procedural mesh is valid")
}

/// Regular icosahedron inscribed in the unit sphere (shared vertices,
/// radial normals).
pub fn icosahedron() -> Mesh {
    let (v, t) = icosahedron_raw();
    let n = v.clone();
    build(v, t, n)
}

fn icosahedron_raw() -> (Vec<Vec3>, Vec<[u32; 3]>) {
    let g = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, g, 0.0],
        [1.0, g, 0.0],
        [-1.0, -g, 0.0],
        [1.0, -g, 0.0],
        [0.0, -1.0, g],
        [0.0, 1.0, g],
        [0.0, -1.0, -g],
        [0.0, 1.0, -g],
        [g, 0.0, -1.0],
        [g, 0.0, 1.0],
        [-g, 0.0, -1.0],
        [-g, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|p| Vec3::new(p[0], p[1], p[2]).normalize()).collect();
    let triangles = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    (vertices, triangles)
}

/// Unit icosphere: icosahedron with `subdiv` rounds of 1-to-4 midpoint
/// splits projected onto the sphere. Normals are the exact sphere normals.
pub fn icosphere(subdiv: u32) -> Mesh {
    let (mut vertices, mut triangles) = icosahedron_raw();
    for _ in 0..subdiv {
        let mut mid: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vs: &mut Vec<Vec3>| -> u32 {
            let key = (a.min(b), a.max(b));
            *mid.entry(key).or_insert_with(|| {
                vs.push(((vs[a as usize] + vs[b as usize]) * 0.5).normalize());
                (vs.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend([[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    let normals = vertices.clone();
    build(vertices, triangles, normals)
}

/// Torus around the y axis (major radius 1, minor radius 0.4).
pub fn torus(seg_u: u32, seg_v: u32) -> Mesh {
    let (major, minor) = (1.0, 0.4);
    let (su, sv) = (seg_u.max(3), seg_v.max(3));
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    for i in 0..su {
        let u = TAU * i as f64 / su as f64;
        for j in 0..sv {
            let v = TAU * j as f64 / sv as f64;
            let n = Vec3::new(v.cos() * u.cos(), v.sin(), v.cos() * u.sin());
            let ring = major + minor * v.cos();
            vertices.push(Vec3::new(ring * u.cos(), minor * v.sin(), ring * u.sin()));
            normals.push(n);
        }
    }
    let idx = |i: u32, j: u32| (i % su) * sv + (j % sv);
    let mut triangles = Vec::new();
    for i in 0..su {
        for j in 0..sv {
            triangles.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            triangles.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    build(vertices, triangles, normals)
}

/// Capped cylinder along y (radius 0.6, height 1.6) with flat caps.
pub fn cylinder(segments: u32) -> Mesh {
    let seg = segments.max(3);
    let (r, half) = (0.6, 0.8);
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for i in 0..seg {
        let a = TAU * i as f64 / seg as f64;
        let n = Vec3::new(a.cos(), 0.0, a.sin());
        vertices.push(Vec3::new(r * a.cos(), -half, r * a.sin()));
        normals.push(n);
        vertices.push(Vec3::new(r * a.cos(), half, r * a.sin()));
        normals.push(n);
    }
    for i in 0..seg {
        let (b0, t0) = (2 * i, 2 * i + 1);
        let (b1, t1) = (2 * ((i + 1) % seg), 2 * ((i + 1) % seg) + 1);
        triangles.push([b0, t0, t1]);
        triangles.push([b0, t1, b1]);
    }
    for (y, ny) in [(-half, -1.0), (half, 1.0)] {
        let center = vertices.len() as u32;
        vertices.push(Vec3::new(0.0, y, 0.0));
        normals.push(Vec3::new(0.0, ny, 0.0));
        let ring0 = vertices.len() as u32;
        for i in 0..seg {
            let a = TAU * i as f64 / seg as f64;
            vertices.push(Vec3::new(r * a.cos(), y, r * a.sin()));
            normals.push(Vec3::new(0.0, ny, 0.0));
        }
        for i in 0..seg {
            triangles.push([center, ring0 + i, ring0 + (i + 1) % seg]);
        }
    }
    build(vertices, triangles, normals)
}

/// Capsule along y: cylinder of radius 0.5 and half-height 0.5 with
/// hemispherical ends, all with smooth normals.
pub fn capsule(segments: u32) -> Mesh {
    let seg = segments.max(3);
    let rings = (seg / 2).max(2);
    let (r, half) = (0.5, 0.5);
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    // latitude rings from the top pole to the bottom pole; the equator is
    // duplicated so the straight section sits between the hemispheres
    let mut lats: Vec<(f64, f64)> = Vec::new();
    for k in 1..=rings {
        let phi = PI / 2.0 * (1.0 - k as f64 / rings as f64);
        lats.push((phi, half));
    }
    for k in 0..rings {
        let phi = -PI / 2.0 * (k as f64 / rings as f64);
        lats.push((phi, -half));
    }
    let top = 0u32;
    vertices.push(Vec3::new(0.0, half + r, 0.0));
    normals.push(Vec3::new(0.0, 1.0, 0.0));
    for &(phi, offset) in &lats {
        for i in 0..seg {
            let a = TAU * i as f64 / seg as f64;
            let n = Vec3::new(phi.cos() * a.cos(), phi.sin(), phi.cos() * a.sin());
            vertices.push(Vec3::new(r * n.x, r * n.y + offset, r * n.z));
            normals.push(n);
        }
    }
    let bottom = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, -half - r, 0.0));
    normals.push(Vec3::new(0.0, -1.0, 0.0));
    let ring = |k: usize, i: u32| 1 + k as u32 * seg + i % seg;
    let mut triangles = Vec::new();
    for i in 0..seg {
        triangles.push([top, ring(0, i + 1), ring(0, i)]);
    }
    for k in 0..lats.len() - 1 {
        for i in 0..seg {
            triangles.push([ring(k, i), ring(k, i + 1), ring(k + 1, i + 1)]);
            triangles.push([ring(k, i), ring(k + 1, i + 1), ring(k + 1, i)]);
        }
    }
    let last = lats.len() - 1;
    for i in 0..seg {
        triangles.push([bottom, ring(last, i), ring(last, i + 1)]);
    }
    build(vertices, triangles, normals)
}

/// Axis-aligned box with split vertices (24 vertices, 12 faces).
pub fn cuboid(center: Vec3, half: Vec3) -> Mesh {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for axis in 0..3 {
        for sign in [-1.0, 1.0] {
            let mut n = Vec3::zeros();
            n[axis] = sign;
            let (a1, a2) = ((axis + 1) % 3, (axis + 2) % 3);
            let base = vertices.len() as u32;
            for (s1, s2) in [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)] {
                let mut p = center;
                p[axis] += sign * half[axis];
                p[a1] += s1 * half[a1];
                p[a2] += s2 * half[a2];
                vertices.push(p);
                normals.push(n);
            }
            triangles.push([base, base + 1, base + 2]);
            triangles.push([base, base + 2, base + 3]);
        }
    }
    build(vertices, triangles, normals)
}

/// 3 x 3 grid of boxes of varying heights standing on y = -0.6.
pub fn bar_grid() -> Mesh {
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for gx in 0..3 {
        for gz in 0..3 {
            let height = 0.3 + 0.25 * ((gx * 3 + gz) % 4) as f64;
            let center = Vec3::new(
                (gx as f64 - 1.0) * 0.55,
                -0.6 + height / 2.0,
                (gz as f64 - 1.0) * 0.55,
            );
            let b = cuboid(center, Vec3::new(0.2, height / 2.0, 0.2));
            let base = vertices.len() as u32;
            vertices.extend_from_slice(b.vertices());
            normals.extend_from_slice(b.vertex_normals());
            triangles.extend(b.triangles().iter().map(|t| t.map(|i| i + base)));
        }
    }
    build(vertices, triangles, normals)
}

/// Square in the z = `z` plane facing +z, spanning `[-half, half]^2`.
pub fn quad(half: f64, z: f64) -> Mesh {
    let vertices = vec![
        Vec3::new(-half, -half, z),
        Vec3::new(half, -half, z),
        Vec3::new(half, half, z),
        Vec3::new(-half, half, z),
    ];
    let n = Vec3::new(0.0, 0.0, 1.0);
    Mesh::with_normals(vertices, vec![[0, 1, 2], [0, 2, 3]], vec![n; 4]).expect("valid quad")
}
