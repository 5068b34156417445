use std::path::Path;

use nist::dataset::{frame_name, generate_dataset, DatasetSpec, Manifest, OrbitConfig, MANIFEST};
use nist::image::{decode_pfm, encode_pfm, read_pfm, write_pfm, Image};
use nist::mesh::TessellationConfig;
use nist::raster::{SceneSpec, Shape};
use nist::Error;
use proptest::prelude::*;

fn spec(frames: usize, seed: u64, res: usize) -> DatasetSpec {
    DatasetSpec {
        scene: SceneSpec::new(Shape::Icosphere(1)),
        frames,
        seed,
        tess: TessellationConfig::new(3, 0.75).unwrap(),
        width: res,
        height: res,
        orbit: OrbitConfig::default(),
    }
}

fn tree_bytes(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                out.push((rel, std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn pfm_layout_is_little_endian_bottom_up() {
    let img = Image::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let bytes = encode_pfm(&img).unwrap();
    let header = b"Pf\n2 2\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    let body: Vec<f32> = bytes[header.len()..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    // bottom row first
    assert_eq!(body, [3.0, 4.0, 1.0, 2.0]);
}

#[test]
fn colour_pfm_uses_pf_tag() {
    let img = Image::filled(3, 1, 3, 0.25);
    assert!(encode_pfm(&img).unwrap().starts_with(b"PF\n3 1\n"));
    assert!(encode_pfm(&Image::new(2, 2, 2)).is_err());
}

#[test]
fn big_endian_files_decode() {
    let mut bytes = b"Pf\n2 1\n1.0\n".to_vec();
    for v in [0.5f32, -7.25] {
        bytes.extend_from_slice(&v.to_be_bytes());
    }
    let img = decode_pfm(Path::new("be.pfm"), &bytes).unwrap();
    assert_eq!(img.data(), &[0.5, -7.25]);
}

#[test]
fn malformed_pfm_names_the_file() {
    let p = Path::new("broken.pfm");
    for bytes in [&b"P6\n1 1\n-1.0\n\0\0\0\0"[..], b"Pf\n2 2\n-1.0\n\0\0\0\0", b"Pf\n1 1\n0\n\0\0\0\0", b"Pf\n"] {
        match decode_pfm(p, bytes) {
            Err(e @ Error::Format { .. }) => assert!(e.to_string().contains("broken.pfm"), "{e}"),
            other => panic!("expected format error, got {other:?}"),
        }
    }
}

#[test]
fn missing_pfm_is_an_io_error() {
    assert!(matches!(read_pfm(Path::new("/nonexistent/x.pfm")), Err(Error::Io { .. })));
}

#[test]
fn image_crop_and_planar_round_trip() {
    let data: Vec<f32> = (0..4 * 3 * 3).map(|v| v as f32).collect();
    let img = Image::from_vec(4, 3, 3, data).unwrap();
    let c = img.crop(1, 1, 2, 2).unwrap();
    assert_eq!(c.pixel(0, 0), img.pixel(1, 1));
    assert_eq!(c.pixel(1, 1), img.pixel(2, 2));
    assert!(img.crop(3, 0, 2, 1).is_err());
    let back = Image::from_planar(4, 3, 3, &img.to_planar()).unwrap();
    assert_eq!(back, img);
}

#[test]
fn empty_manifest_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_dataset(&spec(0, 3, 16), dir.path()).unwrap();
    assert!(m.is_empty());
    let text = std::fs::read_to_string(dir.path().join(MANIFEST)).unwrap();
    assert_eq!(text, "seed=3\ncount=0\nres=16x16\n");
    assert_eq!(Manifest::read(dir.path()).unwrap(), m);
}

#[test]
fn manifest_header_errors() {
    let p = Path::new("m.txt");
    for text in [
        "count=0\nres=1x1\n",
        "seed=1\ncount=2\nres=4x4\nframe_00000\n",
        "seed=1\ncount=0\nres=4by4\n",
        "seed=x\ncount=0\nres=4x4\n",
    ] {
        assert!(matches!(Manifest::parse(Path::new("."), p, text), Err(Error::Format { .. })), "{text}");
    }
}

#[test]
fn frame_names_are_zero_padded() {
    assert_eq!(frame_name(7), "frame_00007");
    assert_eq!(frame_name(12345), "frame_12345");
}

#[test]
fn generation_is_deterministic_across_thread_counts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let many = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    one.install(|| generate_dataset(&spec(6, 11, 24), a.path())).unwrap();
    many.install(|| generate_dataset(&spec(6, 11, 24), b.path())).unwrap();
    assert_eq!(tree_bytes(a.path()), tree_bytes(b.path()));
}

#[test]
fn different_seeds_give_different_cameras() {
    let o = OrbitConfig::default();
    assert_ne!(o.camera(1, 0, 8, 8).unwrap().position, o.camera(2, 0, 8, 8).unwrap().position);
    assert_ne!(o.camera(1, 0, 8, 8).unwrap().position, o.camera(1, 1, 8, 8).unwrap().position);
    assert_eq!(o.camera(1, 5, 8, 8).unwrap(), o.camera(1, 5, 8, 8).unwrap());
}

#[test]
fn two_hundred_frames_round_trip_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let s = spec(200, 7, 16);
    let m = generate_dataset(&s, dir.path()).unwrap();
    let read = Manifest::read(&dir.path().join(MANIFEST)).unwrap();
    assert_eq!(read.len(), 200);
    assert_eq!((read.width, read.height, read.seed), (16, 16, 7));
    for i in [0, 1, 99, 199] {
        let f = read.load_frame(i).unwrap();
        let again = tempfile::tempdir().unwrap();
        f.write_dir(again.path()).unwrap();
        assert_eq!(tree_bytes(again.path()), tree_bytes(&m.frame_dir(i)));
    }
}

#[test]
fn frame_size_must_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    generate_dataset(&spec(1, 1, 16), dir.path()).unwrap();
    std::fs::write(dir.path().join(MANIFEST), "seed=1\ncount=1\nres=32x32\nframe_00000\n").unwrap();
    let m = Manifest::read(dir.path()).unwrap();
    let err = m.load_frame(0).unwrap_err().to_string();
    assert!(err.contains("16x16") && err.contains("32x32"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn pfm_round_trip_is_bitwise(w in 1usize..9, h in 1usize..9, rgb in any::<bool>(), seed in any::<u32>()) {
        let c = if rgb { 3 } else { 1 };
        let data: Vec<f32> = (0..w * h * c)
            .map(|i| f32::from_bits((i as u32).wrapping_mul(2654435761) ^ seed) )
            .map(|v| if v.is_finite() { v } else { 0.0 })
            .collect();
        let img = Image::from_vec(w, h, c, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.pfm");
        write_pfm(&p, &img).unwrap();
        let back = read_pfm(&p).unwrap();
        prop_assert_eq!(back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                        img.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }
}
