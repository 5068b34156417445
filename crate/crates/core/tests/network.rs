use nist::mesh::{TessellationConfig, Vec3};
use nist::network::{checkpoint, forward, frame_batch, init_params, predict, ModelConfig, Params};
use nist::raster::{make_pair, Camera, GBufferFrame, SceneSpec, Shape};
use nist::tensor::{GradCheck, Graph, Tensor};
use nist::Error;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ModelConfig {
    ModelConfig {
        c_g: 4,
        c_d: 4,
        c_c: 4,
        ..ModelConfig::default()
    }
}

fn frame(res: usize) -> GBufferFrame {
    let cam = Camera::new(
        Vec3::new(0.5, 0.8, 3.0),
        Vec3::zeros(),
        Vec3::y(),
        40f64.to_radians(),
        (0.1, 10.0),
        (res, res),
    )
    .unwrap();
    make_pair(&SceneSpec::new(Shape::Icosphere(1)), &cam, &TessellationConfig::new(3, 0.75).unwrap()).unwrap()
}

/// Parameters with a small random flow head so warps are off-lattice.
fn with_live_flow(mut p: Params<f32>, seed: u64) -> Params<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for t in 1..=p.config.scales {
        if let Some(w) = p.get_mut(&format!("s{t}.fw.1.weight")) {
            for v in w.data_mut() {
                *v = rng.gen_range(-0.3..0.3);
            }
        }
    }
    p
}

fn conv_count(c_in: usize, c_out: usize, k: usize) -> usize {
    c_out * c_in * k * k + c_out
}

fn double_count(c_in: usize, c_out: usize, k: usize) -> usize {
    conv_count(c_in, c_out, k) + conv_count(c_out, c_out, 3)
}

fn expected_count(cfg: &ModelConfig) -> usize {
    let (cg, cd, cc, t) = (cfg.c_g, cfg.c_d, cfg.c_c, cfg.scales);
    let mut n = double_count(3, cc, 3);
    n += double_count(3, cc, 3) + (t - 1) * double_count(cc, cc, 3);
    n += double_count(8, cg, 3) + (t - 1) * double_count(cg, cg, 3);
    for s in 1..=t {
        if cfg.deform_module {
            let kin = if s == 1 { cg } else { cd };
            n += double_count(cg, cd, 3) + 2 * double_count(kin, cd, 3) + double_count(2 * cd, cd, 3) + double_count(cd, cd, 7);
        } else {
            n += double_count(cg, cd, 3);
        }
        if cfg.feature_warp {
            n += conv_count(cd, cd, 3) + conv_count(cd, 2, 3);
        }
        n += double_count(if s == 1 { cc } else { 2 * cc }, cc, 3);
    }
    n + double_count(2 * cc + cd, cc, 3) + conv_count(cc, 3, 3)
}

#[test]
fn parameter_count_has_closed_form() {
    for cfg in [
        ModelConfig::default(),
        small(),
        ModelConfig { scales: 1, ..small() },
        ModelConfig { deform_module: false, ..ModelConfig::default() },
        ModelConfig { feature_warp: false, ..ModelConfig::default() },
    ] {
        assert_eq!(cfg.param_count(), expected_count(&cfg), "{cfg:?}");
        assert_eq!(init_params(&cfg, 0).unwrap().count(), cfg.param_count());
    }
}

#[test]
fn removing_deformation_drops_exactly_its_blocks() {
    let full = ModelConfig::default();
    let plain = ModelConfig { deform_module: false, ..full.clone() };
    let (cg, cd) = (full.c_g, full.c_d);
    let mut removed = 0;
    for s in 1..=full.scales {
        let kin = if s == 1 { cg } else { cd };
        removed += double_count(cg, cd, 3) + 2 * double_count(kin, cd, 3) + double_count(2 * cd, cd, 3) + double_count(cd, cd, 7);
        removed -= double_count(cg, cd, 3);
    }
    assert_eq!(full.param_count() - plain.param_count(), removed);
}

#[test]
fn feature_shapes_follow_the_pyramid() {
    let cfg = small();
    let p = init_params(&cfg, 3).unwrap();
    let f = frame(32);
    let b = frame_batch(&[&f, &f]).unwrap();
    let mut g = Graph::new();
    let bound = p.bind(&mut g);
    let (c, geo) = (g.input(b.color), g.input(b.geom));
    let out = forward(&mut g, &bound, &cfg, c, geo).unwrap();
    assert_eq!(out.guidance.len(), 3);
    for (t, side) in [(0, 4), (1, 8), (2, 16)] {
        assert_eq!(g.shape(out.guidance[t]), &[2, cfg.c_g, side, side]);
        assert_eq!(g.shape(out.deform[t]), &[2, cfg.c_d, side, side]);
        assert_eq!(g.shape(out.flow[t].unwrap()), &[2, 2, side, side]);
        assert!(out.attention[t].is_some());
    }
    assert_eq!(g.shape(out.full_flow.unwrap()), &[2, 2, 32, 32]);
    assert_eq!(g.shape(out.output), &[2, 3, 32, 32]);
}

#[test]
fn fresh_flow_head_is_identity_warp() {
    let p = init_params(&small(), 9).unwrap();
    let pred = predict(&p, &frame(32)).unwrap();
    assert_eq!(pred.max_flow, 0.0);
    assert!(pred.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn disabled_warp_never_moves_pixels() {
    let cfg = ModelConfig { feature_warp: false, ..small() };
    let p = init_params(&cfg, 9).unwrap();
    assert!(p.names().iter().all(|n| !n.contains(".fw.")));
    assert_eq!(predict(&p, &frame(32)).unwrap().max_flow, 0.0);
}

#[test]
fn live_flow_is_bounded_by_flow_scale() {
    let cfg = small();
    let p = with_live_flow(init_params(&cfg, 2).unwrap(), 4);
    let m = predict(&p, &frame(32)).unwrap().max_flow;
    assert!(m > 0.0);
    assert!(m <= cfg.flow_scale * cfg.scales as f64 + 1e-6, "{m}");
}

#[test]
fn incompatible_resolution_is_rejected_by_name() {
    let p = init_params(&small(), 0).unwrap();
    let err = predict(&p, &frame(20)).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)));
    assert!(err.to_string().contains("working resolution"), "{err}");
}

#[test]
fn bad_configs_are_rejected() {
    for cfg in [
        ModelConfig { scales: 0, ..small() },
        ModelConfig { working_factor: 3, ..small() },
        ModelConfig { c_d: 0, ..small() },
        ModelConfig { flow_scale: 0.0, ..small() },
    ] {
        assert!(matches!(init_params(&cfg, 0), Err(Error::Config(_))), "{cfg:?}");
    }
}

#[test]
fn single_and_double_precision_agree() {
    let p = with_live_flow(init_params(&small(), 5).unwrap(), 6);
    let f = frame(16);
    let b = frame_batch(&[&f]).unwrap();
    let run32 = {
        let mut g = Graph::<f32>::new();
        let bound = p.bind(&mut g);
        let (c, geo) = (g.input(b.color.clone()), g.input(b.geom.clone()));
        let o = forward(&mut g, &bound, &p.config, c, geo).unwrap().output;
        g.value(o).clone()
    };
    let p64 = p.cast::<f64>();
    let b64 = b.cast::<f64>();
    let mut g = Graph::<f64>::new();
    let bound = p64.bind(&mut g);
    let (c, geo) = (g.input(b64.color), g.input(b64.geom));
    let o = forward(&mut g, &bound, &p64.config, c, geo).unwrap().output;
    for (a, b) in run32.data().iter().zip(g.value(o).data()) {
        assert!((*a as f64 - b).abs() < 1e-4);
    }
}

#[test]
fn network_gradients_match_finite_differences() {
    let p = with_live_flow(init_params(&small(), 8).unwrap(), 10).cast::<f64>();
    let b = frame_batch(&[&frame(16)]).unwrap().cast::<f64>();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let probe = Tensor::from_vec(&[1, 3, 16, 16], (0..768).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let check = GradCheck {
        eps: 1e-6,
        max_elements: 400,
        seed: 3,
        ..GradCheck::default()
    };
    let err = check
        .run(
            |g, vars| {
                let bound = p.bind_vars(vars)?;
                let (c, geo) = (g.input(b.color.clone()), g.input(b.geom.clone()));
                let out = forward(g, &bound, &p.config, c, geo)?.output;
                let r = g.input(probe.clone());
                let m = g.mul(out, r)?;
                Ok(g.sum(m))
            },
            p.tensors(),
        )
        .unwrap();
    assert!(err < 1e-3, "{err}");
}

#[test]
fn checkpoint_round_trip_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nist");
    let p = with_live_flow(init_params(&small(), 1).unwrap(), 2);
    checkpoint::save(&path, &p).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back, p);
    assert_eq!(checkpoint::encode(&back), std::fs::read(&path).unwrap());
    assert!(!path.with_extension("tmp").exists());
    let expected = checkpoint::load_expecting(&path, &small()).unwrap();
    assert_eq!(expected, p);
}

#[test]
fn checkpoint_header_is_documented_layout() {
    let bytes = checkpoint::encode(&init_params(&small(), 0).unwrap());
    assert_eq!(&bytes[..4], b"NIST");
    assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), checkpoint::VERSION);
    let len = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
    let text = std::str::from_utf8(&bytes[12..12 + len]).unwrap();
    assert!(text.contains("c_g=4\n") && text.contains("scales=3\n"), "{text}");
}

#[test]
fn corrupt_checkpoints_fail_cleanly() {
    let good = checkpoint::encode(&init_params(&small(), 0).unwrap());
    let mut bad_version = good.clone();
    bad_version[4] = 9;
    let mut bad_shape = good.clone();
    // first tensor rank field sits after the first name
    let cfg_len = u32::from_le_bytes(good[8..12].try_into().unwrap()) as usize;
    let name_at = 12 + cfg_len + 4;
    let name_len = u32::from_le_bytes(good[name_at..name_at + 4].try_into().unwrap()) as usize;
    let dim0 = name_at + 4 + name_len + 4;
    bad_shape[dim0] += 1;
    let cases: Vec<(&str, Vec<u8>)> = vec![
        ("magic", b"NOPE".to_vec()),
        ("version", bad_version),
        ("truncated", good[..good.len() - 3].to_vec()),
        ("", bad_shape),
        ("trailing", [good.clone(), vec![0]].concat()),
    ];
    for (needle, bytes) in cases {
        match checkpoint::decode(&bytes) {
            Err(Error::Checkpoint(m)) => assert!(m.contains(needle), "{needle}: {m}"),
            other => panic!("{needle}: expected checkpoint error, got {:?}", other.map(|p| p.count())),
        }
    }
}

#[test]
fn config_mismatch_lists_the_differing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.nist");
    checkpoint::save(&path, &init_params(&small(), 0).unwrap()).unwrap();
    let err = checkpoint::load_expecting(&path, &ModelConfig::default()).unwrap_err().to_string();
    assert!(err.contains("c_g: checkpoint 4, expected 32"), "{err}");
}

#[test]
fn initialization_is_seeded() {
    let a = init_params(&small(), 4).unwrap();
    assert_eq!(a, init_params(&small(), 4).unwrap());
    assert_ne!(a, init_params(&small(), 5).unwrap());
    assert!(a.get("s1.fw.1.weight").unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn colour_does_not_reach_the_guidance_path() {
    let c = nist::selftest::invariance_check();
    assert!(c.passed, "{}", c.detail);
}
