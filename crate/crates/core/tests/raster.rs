use nalgebra::{Isometry3, Point3};
use nist::dataset::OrbitConfig;
use nist::mesh::{compute_normals, shapes, tessellate_phong, Mesh, TessellationConfig, Vec3};
use nist::raster::{make_pair, rasterize, Camera, Material, SceneSpec, Shading, Shape};

fn head_on(w: usize, h: usize) -> Camera {
    Camera::new(
        Vec3::new(0.0, 0.0, 3.0),
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
        40f64.to_radians(),
        (0.1, 10.0),
        (w, h),
    )
    .unwrap()
}

fn white_headlight() -> Shading {
    Shading {
        material: Material::Flat([1.0, 1.0, 1.0]),
        light_dir: Vec3::new(0.0, 0.0, 1.0),
        ambient: 0.0,
        background: 0.5,
    }
}

fn default_shading() -> Shading {
    SceneSpec::new(Shape::Icosphere(1)).shading()
}

/// Moller-Trumbore; returns the ray parameter of the nearest hit.
fn ray_hit(mesh: &Mesh, o: Vec3, d: Vec3) -> Option<f64> {
    let mut best: Option<f64> = None;
    for f in 0..mesh.num_triangles() {
        let (p, _) = mesh.face(f);
        let e1 = p[1] - p[0];
        let e2 = p[2] - p[0];
        let pv = d.cross(&e2);
        let det = e1.dot(&pv);
        if det.abs() < 1e-14 {
            continue;
        }
        let tv = o - p[0];
        let u = tv.dot(&pv) / det;
        let qv = tv.cross(&e1);
        let v = d.dot(&qv) / det;
        let t = e2.dot(&qv) / det;
        if u >= 0.0 && v >= 0.0 && u + v <= 1.0 && t > 0.0 {
            best = Some(best.map_or(t, |b: f64| b.min(t)));
        }
    }
    best
}

#[test]
fn head_on_quad_is_uniformly_lit() {
    let cam = head_on(16, 16);
    let r = rasterize(&shapes::quad(5.0, 0.0), &cam, &white_headlight()).unwrap();
    for y in 0..16 {
        for x in 0..16 {
            assert_eq!(r.coverage.pixel(x, y), &[1.0]);
            assert_eq!(r.color.pixel(x, y), &[1.0, 1.0, 1.0]);
            for n in [r.gnormal.pixel(x, y), r.snormal.pixel(x, y)] {
                assert!((n[0]).abs() < 1e-6 && (n[1]).abs() < 1e-6 && (n[2] - 1.0).abs() < 1e-6, "{n:?}");
            }
        }
    }
}

#[test]
fn nearer_triangle_wins_the_overlap() {
    let big = |z: f64| vec![Vec3::new(-2.0, -2.0, z), Vec3::new(2.0, -2.0, z), Vec3::new(0.0, 2.0, z)];
    let mut v = big(0.0);
    v.extend(big(1.0));
    // far triangle listed after the near one and before it, both orders
    for tris in [vec![[0, 1, 2], [3, 4, 5]], vec![[3, 4, 5], [0, 1, 2]]] {
        let m = compute_normals(v.clone(), tris).unwrap();
        let r = rasterize(&m, &head_on(24, 24), &white_headlight()).unwrap();
        let near_depth = ((3.0 - 1.0) - 0.1) / 9.9;
        let c = r.depth.pixel(12, 12)[0];
        assert!((c as f64 - near_depth).abs() < 1e-6, "depth {c}");
    }
}

#[test]
fn coverage_matches_ray_casting_oracle() {
    let mesh = shapes::icosphere(1);
    let cam = Camera::new(
        Vec3::new(1.3, 0.9, 2.4),
        Vec3::new(0.05, -0.02, 0.0),
        Vec3::new(0.0, 1.0, 0.0),
        45f64.to_radians(),
        (0.1, 10.0),
        (64, 64),
    )
    .unwrap();
    let r = rasterize(&mesh, &cam, &default_shading()).unwrap();
    let mut count = 0;
    let mut oracle = 0;
    for y in 0..64 {
        for x in 0..64 {
            let (o, d) = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
            let hit = ray_hit(&mesh, o, d).is_some();
            let cov = r.coverage.pixel(x, y)[0] == 1.0;
            assert_eq!(hit, cov, "pixel ({x},{y})");
            oracle += hit as usize;
            count += cov as usize;
        }
    }
    assert_eq!(count, oracle);
    assert!(count > 500);
}

#[test]
fn depth_is_nearest_ray_hit() {
    let mesh = shapes::torus(16, 8);
    let cam = Camera::new(
        Vec3::new(0.3, 2.0, 2.2),
        Vec3::zeros(),
        Vec3::new(0.0, 1.0, 0.0),
        50f64.to_radians(),
        (0.1, 10.0),
        (40, 40),
    )
    .unwrap();
    let r = rasterize(&mesh, &cam, &default_shading()).unwrap();
    let rot = cam.rotation();
    for y in (0..40).step_by(3) {
        for x in (0..40).step_by(3) {
            let (o, d) = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
            if let Some(t) = ray_hit(&mesh, o, d) {
                if r.coverage.pixel(x, y)[0] == 0.0 {
                    continue;
                }
                let zc = -(rot * (o + t * d - cam.position)).z;
                let want = (zc - 0.1) / 9.9;
                assert!((r.depth.pixel(x, y)[0] as f64 - want).abs() < 1e-5);
            }
        }
    }
}

#[test]
fn normals_are_camera_space_and_unit() {
    let mesh = shapes::capsule(10);
    let cam = OrbitConfig::default().camera(3, 5, 48, 48).unwrap();
    let r = rasterize(&mesh, &cam, &default_shading()).unwrap();
    // independent path: nalgebra's right-handed view matrix
    let view = Isometry3::look_at_rh(
        &Point3::from(cam.position),
        &Point3::from(cam.look_at),
        &cam.up,
    );
    let rot = view.rotation.to_rotation_matrix();
    let mut checked = 0;
    for y in 0..48 {
        for x in 0..48 {
            if r.coverage.pixel(x, y)[0] == 0.0 {
                assert_eq!(r.gnormal.pixel(x, y), &[0.0; 3]);
                assert_eq!(r.snormal.pixel(x, y), &[0.0; 3]);
                assert_eq!(r.depth.pixel(x, y), &[1.0]);
                assert_eq!(r.color.pixel(x, y), &[0.5; 3]);
                continue;
            }
            for n in [r.gnormal.pixel(x, y), r.snormal.pixel(x, y)] {
                let len = (n.iter().map(|v| (*v as f64).powi(2)).sum::<f64>()).sqrt();
                assert!((len - 1.0).abs() < 1e-3);
            }
            // geometric normal must be one of the rotated face normals
            let g = Vec3::new(
                r.gnormal.pixel(x, y)[0] as f64,
                r.gnormal.pixel(x, y)[1] as f64,
                r.gnormal.pixel(x, y)[2] as f64,
            );
            let best = mesh
                .face_normals()
                .iter()
                .map(|n| (rot * n - g).norm())
                .fold(f64::INFINITY, f64::min);
            assert!(best < 1e-5);
            checked += 1;
        }
    }
    assert!(checked > 100);
}

#[test]
fn flat_faces_have_equal_normal_buffers() {
    let cam = OrbitConfig::default().camera(11, 0, 48, 48).unwrap();
    let r = rasterize(&shapes::bar_grid(), &cam, &default_shading()).unwrap();
    for (g, s) in r.gnormal.data().iter().zip(r.snormal.data()) {
        assert!((g - s).abs() < 1e-4);
    }
}

#[test]
fn mesh_outside_frustum_gives_background() {
    let mesh = shapes::icosphere(1).transformed(|p| p + Vec3::new(0.0, 0.0, 20.0)).unwrap();
    let r = rasterize(&mesh, &head_on(8, 8), &default_shading()).unwrap();
    assert!(r.coverage.data().iter().all(|&c| c == 0.0));
    assert!(r.color.data().iter().all(|&c| c == 0.5));
}

#[test]
fn near_plane_clipping_keeps_the_visible_part() {
    // triangle spanning from behind the camera to in front of it
    let m = compute_normals(
        vec![Vec3::new(-1.0, -0.5, 5.0), Vec3::new(1.0, -0.5, 5.0), Vec3::new(0.0, -0.5, -5.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    let cam = head_on(32, 32);
    let r = rasterize(&m, &cam, &default_shading()).unwrap();
    let covered: usize = r.coverage.data().iter().filter(|&&c| c == 1.0).count();
    assert!(covered > 0);
    for y in 0..32 {
        for x in 0..32 {
            let (o, d) = cam.pixel_ray(x as f64 + 0.5, y as f64 + 0.5);
            let visible = ray_hit(&m, o, d).is_some_and(|t| {
                let zc = -(cam.rotation() * (o + t * d - cam.position)).z;
                zc >= 0.1
            });
            assert_eq!(visible, r.coverage.pixel(x, y)[0] == 1.0, "({x},{y})");
        }
    }
}

#[test]
fn planar_bar_grid_label_equals_input() {
    let spec = SceneSpec::new(Shape::BarGrid);
    for i in 0..3 {
        let cam = OrbitConfig::default().camera(5, i, 64, 64).unwrap();
        let f = make_pair(&spec, &cam, &TessellationConfig::new(4, 0.75).unwrap()).unwrap();
        assert_eq!(f.label, f.color, "frame {i}");
    }
}

#[test]
fn identity_tessellation_label_equals_input() {
    for shape in [Shape::Icosphere(1), Shape::Torus(12, 8), Shape::Capsule(8)] {
        let cam = OrbitConfig::default().camera(9, 1, 48, 48).unwrap();
        let f = make_pair(&SceneSpec::new(shape), &cam, &TessellationConfig::new(0, 0.0).unwrap()).unwrap();
        assert_eq!(f.label, f.color, "{shape}");
    }
}

fn boundary(cov: &[bool], w: usize, h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            let c = cov[y * w + x];
            let mut diff = false;
            if x + 1 < w && cov[y * w + x + 1] != c {
                diff = true;
            }
            if x > 0 && cov[y * w + x - 1] != c {
                diff = true;
            }
            if y + 1 < h && cov[(y + 1) * w + x] != c {
                diff = true;
            }
            if y > 0 && cov[(y - 1) * w + x] != c {
                diff = true;
            }
            if diff {
                out.push((x, y));
            }
        }
    }
    out
}

#[test]
fn label_coverage_differs_only_near_silhouettes() {
    let spec = SceneSpec::new(Shape::Icosphere(1));
    let coarse = spec.shape.mesh().unwrap();
    let fine = tessellate_phong(&coarse, &TessellationConfig::new(6, 0.75).unwrap());
    let (w, h) = (96, 96);
    let mut differing = 0;
    for i in 0..4 {
        let cam = OrbitConfig::default().camera(21, i, w, h).unwrap();
        let a = rasterize(&coarse, &cam, &spec.shading()).unwrap();
        let b = rasterize(&fine, &cam, &spec.shading()).unwrap();
        let ca: Vec<bool> = a.coverage.data().iter().map(|&c| c == 1.0).collect();
        let cb: Vec<bool> = b.coverage.data().iter().map(|&c| c == 1.0).collect();
        let edge = boundary(&ca, w, h);
        for y in 0..h {
            for x in 0..w {
                if ca[y * w + x] != cb[y * w + x] {
                    differing += 1;
                    let d2 = edge
                        .iter()
                        .map(|&(bx, by)| (bx as f64 - x as f64).powi(2) + (by as f64 - y as f64).powi(2))
                        .fold(f64::INFINITY, f64::min);
                    assert!(d2.sqrt() <= 5.0, "pixel ({x},{y}) is {} px from the silhouette", d2.sqrt());
                }
            }
        }
        // background pixels agree exactly
        for p in 0..w * h {
            if !ca[p] && !cb[p] {
                assert_eq!(a.color.data()[3 * p..3 * p + 3], b.color.data()[3 * p..3 * p + 3]);
            }
        }
    }
    assert!(differing > 0, "tessellation should change the silhouette");
}

#[test]
fn camera_rejects_bad_parameters() {
    let ok = |near, far, up: Vec3| {
        Camera::new(Vec3::new(0.0, 0.0, 3.0), Vec3::zeros(), up, 1.0, (near, far), (8, 8)).is_ok()
    };
    assert!(ok(0.1, 10.0, Vec3::y()));
    assert!(!ok(0.0, 10.0, Vec3::y()));
    assert!(!ok(2.0, 1.0, Vec3::y()));
    assert!(!ok(0.1, 10.0, Vec3::z()));
}

#[test]
fn shape_names_round_trip() {
    for s in ["icosphere1", "icosphere3", "torus12x8", "cylinder8", "capsule6", "bar_grid"] {
        assert_eq!(s.parse::<Shape>().unwrap().to_string(), s);
    }
    assert_eq!("torus".parse::<Shape>().unwrap(), Shape::Torus(12, 8));
    assert!("cylinder2".parse::<Shape>().is_err());
    assert!("teapot".parse::<Shape>().is_err());
}
