//! Indexed triangle meshes, normals and Phong tessellation.
//!
//! Phong tessellation is the geometric oracle for the label renders: every
//! subdivided sample point is projected onto the tangent planes of the
//! triangle's three corners, the projections are blended barycentrically,
//! and the result is blended with the flat position by `alpha`.

pub mod obj;
pub mod shapes;

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type Vec3 = nalgebra::Vector3<f64>;

const UNIT_TOL: f64 = 1e-6;

/// Indexed triangle mesh with shading (per-vertex) and geometric
/// (per-face) normals.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vec3>,
    triangles: Vec<[u32; 3]>,
    vertex_normals: Vec<Vec3>,
    face_normals: Vec<Vec3>,
}

fn face_cross(vertices: &[Vec3], t: [u32; 3]) -> Vec3 {
    let [a, b, c] = t.map(|i| vertices[i as usize]);
    (b - a).cross(&(c - a))
}

fn check_indices(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Result<()> {
    for (f, t) in triangles.iter().enumerate() {
        if let Some(&bad) = t.iter().find(|&&i| i as usize >= vertices.len()) {
            return Err(Error::InvalidMesh(format!(
                "face {f} references vertex {bad} but mesh has {} vertices",
                vertices.len()
            )));
        }
    }
    Ok(())
}

/// Unit face normals from winding; rejects zero-area faces.
fn face_normals(vertices: &[Vec3], triangles: &[[u32; 3]]) -> Result<Vec<Vec3>> {
    triangles
        .iter()
        .enumerate()
        .map(|(f, &t)| {
            let cr = face_cross(vertices, t);
            let [a, b, c] = t.map(|i| vertices[i as usize]);
            let scale = (b - a).norm() * (c - a).norm();
            let len = cr.norm();
            if !(len > 1e-12 * scale) || !len.is_finite() {
                return Err(Error::DegenerateTriangle(f));
            }
            Ok(cr / len)
        })
        .collect()
}

impl Mesh {
    /// Builds a mesh with explicit shading normals; face normals are
    /// derived from the winding.
    pub fn with_normals(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>, vertex_normals: Vec<Vec3>) -> Result<Self> {
        if vertex_normals.len() != vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} vertex normals for {} vertices",
                vertex_normals.len(),
                vertices.len()
            )));
        }
        check_indices(&vertices, &triangles)?;
        for (i, n) in vertex_normals.iter().enumerate() {
            if (n.norm() - 1.0).abs() > UNIT_TOL {
                return Err(Error::InvalidMesh(format!(
                    "vertex normal {i} has length {}",
                    n.norm()
                )));
            }
        }
        let face_normals = face_normals(&vertices, &triangles)?;
        Ok(Mesh {
            vertices,
            triangles,
            vertex_normals,
            face_normals,
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn vertex_normals(&self) -> &[Vec3] {
        &self.vertex_normals
    }

    pub fn face_normals(&self) -> &[Vec3] {
        &self.face_normals
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Corner positions and shading normals of face `f`.
    pub fn face(&self, f: usize) -> ([Vec3; 3], [Vec3; 3]) {
        let t = self.triangles[f];
        (
            t.map(|i| self.vertices[i as usize]),
            t.map(|i| self.vertex_normals[i as usize]),
        )
    }

    /// Applies `f` to every position (normals are left untouched).
    pub fn transformed(&self, f: impl Fn(&Vec3) -> Vec3) -> Result<Self> {
        Mesh::with_normals(
            self.vertices.iter().map(f).collect(),
            self.triangles.clone(),
            self.vertex_normals.clone(),
        )
    }
}

/// Face normals from winding and area-weighted vertex normals.
pub fn compute_normals(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Mesh> {
    check_indices(&vertices, &triangles)?;
    let fnorm = face_normals(&vertices, &triangles)?;
    let mut acc = vec![Vec3::zeros(); vertices.len()];
    for &t in &triangles {
        // |cross| is twice the area, so the raw cross product is area-weighted.
        let cr = face_cross(&vertices, t);
        for i in t {
            acc[i as usize] += cr;
        }
    }
    let vertex_normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 {
                Ok(n / len)
            } else {
                Err(Error::InvalidMesh(format!(
                    "vertex {i} has no well-defined normal (unreferenced or cancelling faces)"
                )))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Mesh {
        vertices,
        triangles,
        vertex_normals,
        face_normals: fnorm,
    })
}

/// Barycentric location on a mesh face.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BaryPoint {
    pub face: usize,
    pub uvw: [f64; 3],
}

impl BaryPoint {
    pub fn new(face: usize, uvw: [f64; 3]) -> Result<Self> {
        if uvw.iter().any(|&c| !(c >= 0.0)) || (uvw.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "barycentric coordinates {uvw:?} must be nonnegative and sum to 1"
            )));
        }
        Ok(BaryPoint { face, uvw })
    }
}

/// Uniform subdivision level and flat/projected blend factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TessellationConfig {
    /// Each edge is split into `level + 1` segments.
    pub level: u32,
    /// 0 = flat subdivision, 1 = fully projected positions.
    pub alpha: f64,
}

impl Default for TessellationConfig {
    fn default() -> Self {
        TessellationConfig {
            level: 6,
            alpha: 0.75,
        }
    }
}

impl TessellationConfig {
    pub fn new(level: u32, alpha: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")));
        }
        Ok(TessellationConfig { level, alpha })
    }
}

/// Projects `p` onto the plane through `v` with unit normal `n`.
pub fn phong_project(p: Vec3, v: Vec3, n: Vec3) -> Result<Vec3> {
    if (n.norm() - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "plane normal must be unit length, got |n| = {}",
            n.norm()
        )));
    }
    Ok(project(p, v, n))
}

fn project(p: Vec3, v: Vec3, n: Vec3) -> Vec3 {
    p - (p - v).dot(&n) * n
}

/// Phong-tessellated position of barycentric point `uvw` on a triangle.
///
/// Corner normals are assumed unit length (as guaranteed by [`Mesh`]).
pub fn phong_point(tri_vertices: [Vec3; 3], tri_normals: [Vec3; 3], uvw: [f64; 3], alpha: f64) -> Vec3 {
    let [u, v, w] = uvw;
    let [vi, vj, vk] = tri_vertices;
    let [ni, nj, nk] = tri_normals;
    let p = u * vi + v * vj + w * vk;
    let projected = u * project(p, vi, ni) + v * project(p, vj, nj) + w * project(p, vk, nk);
    // p + alpha * (p* - p) keeps corners bit-exact for every alpha.
    p + alpha * (projected - p)
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum LatticeKey {
    Corner(u32),
    /// Edge `(lo, hi)` at `k` segments away from `lo`.
    Edge(u32, u32, u32),
    Interior(usize, u32, u32),
}

/// Uniformly subdivides every face into `(level + 1)^2` triangles and
/// places each sample with [`phong_point`].
///
/// Samples on edges shared by index are generated once, so the output is
/// crack-free wherever neighbouring faces share vertices (and thus
/// normals). Output order: input face order, then lattice order.
pub fn tessellate_phong(mesh: &Mesh, config: &TessellationConfig) -> Mesh {
    let segs = config.level + 1;
    let inv = 1.0 / segs as f64;
    let mut index: HashMap<LatticeKey, u32> = HashMap::new();
    let mut vertices = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::with_capacity(mesh.num_triangles() * (segs * segs) as usize);
    let mut local = vec![0u32; ((segs + 1) * (segs + 2) / 2) as usize];
    let lattice_slot = |a: u32, b: u32| -> usize {
        // rows by a: row a holds segs - a + 1 entries
        let before: u32 = (0..a).map(|r| segs - r + 1).sum();
        (before + b) as usize
    };

    for (f, &tri) in mesh.triangles().iter().enumerate() {
        let (pos, nrm) = mesh.face(f);
        let face_normal = mesh.face_normals()[f];
        for a in 0..=segs {
            for b in 0..=(segs - a) {
                let c = segs - a - b;
                let weights = [a, b, c];
                let key = if let Some(corner) = weights.iter().position(|&x| x == segs) {
                    LatticeKey::Corner(tri[corner])
                } else if let Some(zero) = weights.iter().position(|&x| x == 0) {
                    let (i1, i2) = ((zero + 1) % 3, (zero + 2) % 3);
                    let (lo, hi, k_hi) = if tri[i1] < tri[i2] {
                        (tri[i1], tri[i2], weights[i2])
                    } else {
                        (tri[i2], tri[i1], weights[i1])
                    };
                    LatticeKey::Edge(lo, hi, k_hi)
                } else {
                    LatticeKey::Interior(f, a, b)
                };
                let id = *index.entry(key).or_insert_with(|| {
                    let uvw = [a as f64 * inv, b as f64 * inv, c as f64 * inv];
                    let (p, n) = match key {
                        LatticeKey::Corner(v) => (mesh.vertices()[v as usize], mesh.vertex_normals()[v as usize]),
                        _ => {
                            let p = phong_point(pos, nrm, uvw, config.alpha);
                            (p, interpolate_normal(nrm, uvw, face_normal))
                        }
                    };
                    vertices.push(p);
                    normals.push(n);
                    (vertices.len() - 1) as u32
                });
                local[lattice_slot(a, b)] = id;
            }
        }
        for a in 0..segs {
            for b in 0..(segs - a) {
                triangles.push([
                    local[lattice_slot(a + 1, b)],
                    local[lattice_slot(a, b + 1)],
                    local[lattice_slot(a, b)],
                ]);
                if a + b + 2 <= segs {
                    triangles.push([
                        local[lattice_slot(a + 1, b + 1)],
                        local[lattice_slot(a, b + 1)],
                        local[lattice_slot(a + 1, b)],
                    ]);
                }
            }
        }
    }

    // Sub-triangles inherit the parent's winding. Drop any that an extreme
    // normal field collapsed to zero area.
    let fnorm: Vec<Vec3> = triangles
        .iter()
        .map(|&t| {
            let cr = face_cross(&vertices, t);
            let len = cr.norm();
            if len > 0.0 {
                cr / len
            } else {
                Vec3::zeros()
            }
        })
        .collect();
    let keep: Vec<bool> = fnorm.iter().map(|n| n.norm() > 0.5).collect();
    let (triangles, face_normals): (Vec<_>, Vec<_>) = triangles
        .into_iter()
        .zip(fnorm)
        .zip(keep)
        .filter_map(|(tn, k)| k.then_some(tn))
        .unzip();
    Mesh {
        vertices,
        triangles,
        vertex_normals: normals,
        face_normals,
    }
}

fn interpolate_normal(n: [Vec3; 3], uvw: [f64; 3], fallback: Vec3) -> Vec3 {
    if n[0] == n[1] && n[1] == n[2] {
        return n[0];
    }
    let s = uvw[0] * n[0] + uvw[1] * n[1] + uvw[2] * n[2];
    let len = s.norm();
    if len > 1e-12 {
        s / len
    } else {
        fallback
    }
}
