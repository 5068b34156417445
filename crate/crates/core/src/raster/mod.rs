//! Software G-buffer rasterizer.
//!
//! One sample per pixel at pixel centres, z-buffered, no culling. Camera
//! space is right-handed with the camera looking down -z; stored normals are
//! rotated into camera space.

pub mod scene;

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::image::Image;
use crate::mesh::{Mesh, Vec3};
pub use scene::{make_pair, GBufferFrame, Material, SceneSpec, Shape};

#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub position: Vec3,
    pub look_at: Vec3,
    pub up: Vec3,
    /// Radians.
    pub vertical_fov: f64,
    pub near: f64,
    pub far: f64,
    pub width: usize,
    pub height: usize,
}

impl Camera {
    pub fn new(
        position: Vec3,
        look_at: Vec3,
        up: Vec3,
        vertical_fov: f64,
        (near, far): (f64, f64),
        (width, height): (usize, usize),
    ) -> Result<Self> {
        let cam = Camera {
            position,
            look_at,
            up,
            vertical_fov,
            near,
            far,
            width,
            height,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.near > 0.0 && self.far > self.near) {
            return bad(format!("need 0 < near < far, got near={} far={}", self.near, self.far));
        }
        if !(self.vertical_fov > 0.0 && self.vertical_fov < std::f64::consts::PI) {
            return bad(format!("vertical fov {} outside (0, pi)", self.vertical_fov));
        }
        if self.width == 0 || self.height == 0 {
            return bad(format!("empty viewport {}x{}", self.width, self.height));
        }
        let fwd = self.look_at - self.position;
        if fwd.norm() == 0.0 {
            return bad("camera position equals look_at".into());
        }
        if fwd.normalize().cross(&self.up).norm() < 1e-9 {
            return bad("up vector parallel to view direction".into());
        }
        Ok(())
    }

    /// World-to-camera rotation; rows are the camera right, up and back axes.
    pub fn rotation(&self) -> Matrix3<f64> {
        let fwd = (self.look_at - self.position).normalize();
        let right = fwd.cross(&self.up).normalize();
        let up = right.cross(&fwd);
        Matrix3::from_rows(&[right.transpose(), up.transpose(), (-fwd).transpose()])
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation() * (p - self.position)
    }

    fn focal(&self) -> f64 {
        1.0 / (self.vertical_fov / 2.0).tan()
    }

    /// World-space ray through continuous pixel coordinate `(x, y)`
    /// (pixel centres sit at half-integers).
    pub fn pixel_ray(&self, x: f64, y: f64) -> (Vec3, Vec3) {
        let aspect = self.width as f64 / self.height as f64;
        let f = self.focal();
        let sx = (2.0 * x / self.width as f64 - 1.0) * aspect / f;
        let sy = (1.0 - 2.0 * y / self.height as f64) / f;
        let dir_cam = Vec3::new(sx, sy, -1.0);
        (self.position, (self.rotation().transpose() * dir_cam).normalize())
    }
}

/// Lighting parameters shared by input and label renders.
#[derive(Clone, Debug, PartialEq)]
pub struct Shading {
    pub material: Material,
    /// Unit vector pointing towards the light.
    pub light_dir: Vec3,
    pub ambient: f64,
    pub background: f64,
}

/// Rasterized G-buffer channels (no label).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub color: Image,
    pub depth: Image,
    pub gnormal: Image,
    pub snormal: Image,
    pub coverage: Image,
}

#[derive(Clone, Copy)]
struct ClipVert {
    cam: Vec3,
    bary: [f64; 3],
}

/// Clips a polygon against the near plane `z <= -near`.
fn clip_near(poly: &[ClipVert], near: f64) -> Vec<ClipVert> {
    let inside = |v: &ClipVert| v.cam.z <= -near;
    let mut out = Vec::with_capacity(4);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        if inside(&a) {
            out.push(a);
        }
        if inside(&a) != inside(&b) {
            let t = (-near - a.cam.z) / (b.cam.z - a.cam.z);
            out.push(ClipVert {
                cam: a.cam + t * (b.cam - a.cam),
                bary: std::array::from_fn(|k| a.bary[k] + t * (b.bary[k] - a.bary[k])),
            });
        }
    }
    out
}

#[derive(Clone, Copy)]
struct ScreenVert {
    x: f64,
    y: f64,
    inv_w: f64,
    bary: [f64; 3],
}

/// Winning fragment per pixel.
#[derive(Clone, Copy)]
struct Fragment {
    face: u32,
    bary: [f64; 3],
    dist: f64,
}

fn edge(ax: f64, ay: f64, bx: f64, by: f64, px: f64, py: f64) -> f64 {
    (bx - ax) * (py - ay) - (by - ay) * (px - ax)
}

fn is_top_left(ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let (dx, dy) = (bx - ax, by - ay);
    dy < 0.0 || (dy == 0.0 && dx > 0.0)
}

fn raster_triangle(cam: &Camera, face: u32, tri: [ScreenVert; 3], frags: &mut [Option<Fragment>]) {
    let [mut a, mut b, c] = tri;
    let mut area = edge(a.x, a.y, b.x, b.y, c.x, c.y);
    if !(area.abs() > 0.0) {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut a, &mut b);
        area = -area;
    }
    let (w, h) = (cam.width as f64, cam.height as f64);
    let min_x = a.x.min(b.x).min(c.x).floor().max(0.0);
    let max_x = a.x.max(b.x).max(c.x).ceil().min(w);
    let min_y = a.y.min(b.y).min(c.y).floor().max(0.0);
    let max_y = a.y.max(b.y).max(c.y).ceil().min(h);
    if min_x >= max_x || min_y >= max_y {
        return;
    }
    let tl = [
        is_top_left(b.x, b.y, c.x, c.y),
        is_top_left(c.x, c.y, a.x, a.y),
        is_top_left(a.x, a.y, b.x, b.y),
    ];
    for py in min_y as usize..max_y as usize {
        let yc = py as f64 + 0.5;
        for px in min_x as usize..max_x as usize {
            let xc = px as f64 + 0.5;
            let e = [
                edge(b.x, b.y, c.x, c.y, xc, yc),
                edge(c.x, c.y, a.x, a.y, xc, yc),
                edge(a.x, a.y, b.x, b.y, xc, yc),
            ];
            if (0..3).any(|k| e[k] < 0.0 || (e[k] == 0.0 && !tl[k])) {
                continue;
            }
            let l = e.map(|v| v / area);
            let inv_w = l[0] * a.inv_w + l[1] * b.inv_w + l[2] * c.inv_w;
            let dist = 1.0 / inv_w;
            let slot = &mut frags[py * cam.width + px];
            if slot.is_some_and(|f| f.dist <= dist) {
                continue;
            }
            let bary = std::array::from_fn(|k| {
                (l[0] * a.inv_w * a.bary[k] + l[1] * b.inv_w * b.bary[k] + l[2] * c.inv_w * c.bary[k]) * dist
            });
            *slot = Some(Fragment { face, bary, dist });
        }
    }
}

/// Renders color, depth, both normal buffers and coverage.
///
/// A mesh entirely outside the frustum yields an all-background frame.
pub fn rasterize(mesh: &Mesh, camera: &Camera, shading: &Shading) -> Result<Raster> {
    camera.validate()?;
    let rot = camera.rotation();
    let aspect = camera.width as f64 / camera.height as f64;
    let f = camera.focal();
    let (w, h) = (camera.width as f64, camera.height as f64);
    let cam_pos: Vec<Vec3> = mesh
        .vertices()
        .iter()
        .map(|p| rot * (p - camera.position))
        .collect();

    let mut frags: Vec<Option<Fragment>> = vec![None; camera.width * camera.height];
    for (fi, t) in mesh.triangles().iter().enumerate() {
        let poly: Vec<ClipVert> = (0..3)
            .map(|k| {
                let mut bary = [0.0; 3];
                bary[k] = 1.0;
                ClipVert {
                    cam: cam_pos[t[k] as usize],
                    bary,
                }
            })
            .collect();
        let clipped = if poly.iter().all(|v| v.cam.z <= -camera.near) {
            poly
        } else {
            clip_near(&poly, camera.near)
        };
        if clipped.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVert> = clipped
            .iter()
            .map(|v| {
                let depth = -v.cam.z;
                ScreenVert {
                    x: (v.cam.x / depth * f / aspect + 1.0) * 0.5 * w,
                    y: (1.0 - v.cam.y / depth * f) * 0.5 * h,
                    inv_w: 1.0 / depth,
                    bary: v.bary,
                }
            })
            .collect();
        for k in 1..screen.len() - 1 {
            raster_triangle(camera, fi as u32, [screen[0], screen[k], screen[k + 1]], &mut frags);
        }
    }

    let (cw, ch) = (camera.width, camera.height);
    let bg = shading.background as f32;
    let mut out = Raster {
        color: Image::filled(cw, ch, 3, bg),
        depth: Image::filled(cw, ch, 1, 1.0),
        gnormal: Image::new(cw, ch, 3),
        snormal: Image::new(cw, ch, 3),
        coverage: Image::new(cw, ch, 1),
    };
    for (i, frag) in frags.iter().enumerate() {
        let Some(frag) = frag else { continue };
        let (x, y) = (i % cw, i / cw);
        let fidx = frag.face as usize;
        let (pos, nrm) = mesh.face(fidx);
        let b = frag.bary;
        let world = b[0] * pos[0] + b[1] * pos[1] + b[2] * pos[2];
        let sn = if nrm[0] == nrm[1] && nrm[1] == nrm[2] {
            nrm[0]
        } else {
            let s = b[0] * nrm[0] + b[1] * nrm[1] + b[2] * nrm[2];
            let len = s.norm();
            if len > 1e-12 {
                s / len
            } else {
                mesh.face_normals()[fidx]
            }
        };
        let gn = mesh.face_normals()[fidx];
        let albedo = shading.material.albedo(&world);
        let lambert = sn.dot(&shading.light_dir).max(0.0);
        let intensity = (shading.ambient + (1.0 - shading.ambient) * lambert).clamp(0.0, 1.0);
        let depth = ((frag.dist - camera.near) / (camera.far - camera.near)).clamp(0.0, 1.0);
        let snc = rot * sn;
        let gnc = rot * gn;
        let px = out.color.pixel_mut(x, y);
        for c in 0..3 {
            px[c] = (intensity * albedo[c]) as f32;
        }
        out.depth.pixel_mut(x, y)[0] = depth as f32;
        out.coverage.pixel_mut(x, y)[0] = 1.0;
        out.snormal.pixel_mut(x, y).copy_from_slice(&[snc.x as f32, snc.y as f32, snc.z as f32]);
        out.gnormal.pixel_mut(x, y).copy_from_slice(&[gnc.x as f32, gnc.y as f32, gnc.z as f32]);
    }
    Ok(out)
}
