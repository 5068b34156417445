use std::path::Path;
use std::process::{Command, Output};

use nist::config::RunConfig;
use nist::network::{checkpoint, init_params, ModelConfig};
use nist::Error;

fn nist(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nist"))
        .args(args)
        .env_remove("NIST_THREADS")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn gen(dir: &Path, extra: &[&str]) -> Output {
    gen_at(dir, "64x64", extra)
}

fn gen_at(dir: &Path, res: &str, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["gen", "--scene", "icosphere1", "--frames", "4", "--res", res, "--tess-level", "4", "--seed", "7", "--out", out];
    args.extend_from_slice(extra);
    nist(&args)
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for e in walk(root) {
        out.push((e.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&e).unwrap()));
    }
    out.sort();
    out
}

fn walk(d: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in std::fs::read_dir(d).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn gen_writes_frames_and_manifest_deterministically() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    let o = gen(&a, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&gen(&b, &[])), 0);
    let manifest = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(manifest.starts_with("seed=7\ncount=4\nres=64x64\n"), "{manifest}");
    for i in 0..4 {
        for ch in ["color", "depth", "gnormal", "snormal", "coverage", "label"] {
            assert!(a.join(format!("frame_{i:05}/{ch}.pfm")).is_file());
        }
    }
    assert_eq!(files(&a), files(&b));
}

#[test]
fn missing_required_flag_is_a_usage_error() {
    let o = nist(&["gen", "--frames", "2"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("--out"));
    assert_eq!(code(&nist(&["frobnicate"])), 2);
}

#[test]
fn unknown_config_key_is_a_usage_error_naming_the_key() {
    let t = tempfile::tempdir().unwrap();
    let o = gen(&t.path().join("d"), &["--set", "tesselation=4"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("tesselation"), "{}", stderr(&o));

    let cfg = t.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nframes=2\nlambda_perecp=1\n").unwrap();
    let o = gen(&t.path().join("e"), &["--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("lambda_perecp") && err.contains(":3"), "{err}");
}

#[test]
fn bad_thread_count_is_a_usage_error() {
    let o = Command::new(env!("CARGO_BIN_EXE_nist"))
        .args(["selftest"])
        .env("NIST_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("NIST_THREADS"));
}

#[test]
fn infer_rejects_incompatible_resolution() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    let o = nist(&["gen", "--frames", "1", "--res", "36x36", "--tess-level", "2", "--out", data.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ck = t.path().join("m.nist");
    checkpoint::save(&ck, &init_params(&ModelConfig { c_g: 4, c_d: 4, c_c: 4, ..ModelConfig::default() }, 0).unwrap()).unwrap();
    let o = nist(&[
        "infer",
        "--checkpoint",
        ck.to_str().unwrap(),
        "--frame",
        data.join("frame_00000").to_str().unwrap(),
        "--out",
        t.path().join("p").to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("working resolution"), "{}", stderr(&o));
}

#[test]
fn missing_checkpoint_names_the_path() {
    let t = tempfile::tempdir().unwrap();
    let o = nist(&["infer", "--checkpoint", "/nonexistent/m.nist", "--frame", ".", "--out", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("/nonexistent/m.nist"));
}

#[test]
fn train_infer_eval_round_trip() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    assert_eq!(code(&gen_at(&data, "32x32", &[])), 0);
    let run = t.path().join("run");
    let o = nist(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--steps",
        "2",
        "--seed",
        "3",
        "--set",
        "c_g=4",
        "--set",
        "c_d=4",
        "--set",
        "c_c=4",
        "--set",
        "crop=32",
        "--out",
        run.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.lines().next().unwrap().starts_with("1 "), "{stdout}");
    let trace = std::fs::read_to_string(run.join("loss.txt")).unwrap();
    assert_eq!(trace.lines().count(), 2);
    let model = run.join("model.nist");

    let pred = t.path().join("pred");
    let o = nist(&[
        "infer",
        "--checkpoint",
        model.to_str().unwrap(),
        "--frame",
        data.join("frame_00001").to_str().unwrap(),
        "--out",
        pred.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(pred.join("pred.pfm").is_file() && pred.join("pred.png").is_file());
    let img = nist::image::read_pfm(&pred.join("pred.pfm")).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (32, 32, 3));

    let rep = t.path().join("rep");
    let o = nist(&["eval", "--checkpoint", model.to_str().unwrap(), "--data", data.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn oracle_eval_reports_zero_ratio() {
    let t = tempfile::tempdir().unwrap();
    let data = t.path().join("d");
    assert_eq!(code(&gen(&data, &[])), 0);
    let rep = t.path().join("rep");
    let o = nist(&["eval", "--oracle-label", "--data", data.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = std::fs::read_to_string(rep.join("report.csv")).unwrap();
    let mean = csv.lines().last().unwrap();
    assert!(mean.starts_with("mean, ") && mean.ends_with(", 0.000000"), "{mean}");
    let o = nist(&["eval", "--data", data.to_str().unwrap(), "--out", rep.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ablate_rejects_unknown_variant() {
    let t = tempfile::tempdir().unwrap();
    let o = nist(&["ablate", "--data", "x", "--test", "y", "--variants", "full,no_magic", "--out", t.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no_magic"));
}

#[test]
fn selftest_passes_and_detects_injected_faults() {
    let o = nist(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = nist(&["selftest", "--fault", "conv2d"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("conv2d"), "{}", stderr(&o));
}

#[test]
fn config_text_parsing() {
    let mut c = RunConfig::default();
    c.apply_text("steps = 10 # short\n\nres=64x32\nloss_preset=paper\nc_g=8\n", "t").unwrap();
    assert_eq!((c.train.steps, c.width, c.height, c.model.c_g), (10, 64, 32, 8));
    assert_eq!(c.loss.lambda_percep, 30.0);
    for bad in ["nope=1", "steps", "steps=ten", "res=64"] {
        let e = RunConfig::default().apply_text(bad, "t").unwrap_err();
        assert!(matches!(e, Error::Config(_)), "{bad}: {e}");
    }
    let mut c = RunConfig::default();
    c.train.crop = 100;
    assert!(c.validate().is_err());
}
