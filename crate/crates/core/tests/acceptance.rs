//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 1-5 run live and must pass. The training criteria (6, 7 and the
//! full-size half of 8) need hours of CPU. They are scored from recorded
//! run artifacts under `acceptance/` at the workspace root. Set
//! `NIST_ACCEPTANCE_FULL=1` to regenerate those artifacts here first (see
//! `acceptance/run.sh` for the equivalent CLI sequence). Red training
//! criteria are reported, not asserted.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nist::config::RunConfig;
use nist::dataset::{generate_dataset, Manifest};
use nist::evaluation::evaluate;
use nist::network::checkpoint;
use nist::selftest::{self, Check};
use nist::training::{train, train_frames, Ablation, LOSS_TRACE};

const TEST_SEED: u64 = 1007;

fn line(n: u32, pass: Option<bool>, what: &str, detail: &str) {
    let tag = match pass {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "NOT RUN",
    };
    // straight to the handle so the lines survive libtest output capture
    let _ = writeln!(std::io::stderr(), "criterion {n}: {tag:7} {what} | {detail}");
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let detail = if failed.is_empty() {
        format!("{} checks", checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    (failed.is_empty(), detail)
}

fn artifacts() -> PathBuf {
    let ws = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    ws.canonicalize().unwrap_or(ws).join("acceptance")
}

/// Aggregate row of a `report.csv`: (l1_sil, baseline_l1_sil, ratio).
fn report_means(dir: &Path) -> Option<(f64, f64, f64)> {
    let csv = std::fs::read_to_string(dir.join("report.csv")).ok()?;
    let mean = csv.lines().find(|l| l.starts_with("mean,"))?;
    let v: Vec<f64> = mean.split(", ").skip(1).map(|s| s.parse().ok()).collect::<Option<_>>()?;
    Some((v[2], v[3], v[4]))
}

fn report_max_flow(dir: &Path) -> Option<f64> {
    let txt = std::fs::read_to_string(dir.join("report.txt")).ok()?;
    txt.lines().find_map(|l| l.strip_prefix("max_flow")?.trim().parse().ok())
}

/// Means of the first and last 100 total losses.
fn loss_window_means(dir: &Path) -> Option<(f64, f64, usize)> {
    let txt = std::fs::read_to_string(dir.join(LOSS_TRACE)).ok()?;
    let totals: Vec<f64> = txt
        .lines()
        .map(|l| l.split(' ').nth(1)?.parse().ok())
        .collect::<Option<_>>()?;
    if totals.len() < 200 {
        return None;
    }
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    Some((mean(&totals[..100]), mean(&totals[totals.len() - 100..]), totals.len()))
}

fn variant_dir(root: &Path, name: &str) -> PathBuf {
    root.join(name)
}

/// Regenerates every training artifact under `root`.
fn regenerate(root: &Path) {
    let base = RunConfig::default();
    let mut spec = base.dataset_spec();
    let train_set = generate_dataset(&spec, &root.join("data/train")).unwrap();
    spec.frames = 20;
    spec.seed = TEST_SEED;
    let test_set = generate_dataset(&spec, &root.join("data/test")).unwrap();
    let mut runs: Vec<(String, RunConfig)> = Ablation::ALL.iter().map(|a| (a.to_string(), a.apply(&base))).collect();
    runs.push(("full_rerun".into(), base.clone()));
    for (name, cfg) in runs {
        let dir = variant_dir(root, &name);
        let s = train(&train_set, &cfg, &dir, |_, _| {}).unwrap();
        let params = checkpoint::load(&s.model).unwrap();
        evaluate(&params, &test_set, &cfg.mask, false).unwrap().write(&dir).unwrap();
    }
}

#[test]
fn acceptance() {
    let _ = writeln!(std::io::stderr());
    let t = Instant::now();
    let (ok1, d1) = summarize(&selftest::operator_checks());
    let secs = t.elapsed().as_secs_f64();
    let ok1 = ok1 && secs < 300.0;
    line(1, Some(ok1), "operator gradient checks", &format!("{d1}, {secs:.1}s"));

    let t = Instant::now();
    let (ok2, d2) = summarize(&selftest::phong_checks());
    line(2, Some(ok2), "Phong tessellation oracle", &format!("{d2}, {:.1}s", t.elapsed().as_secs_f64()));

    let (ok3, d3) = summarize(&selftest::warp_checks());
    line(3, Some(ok3), "warp semantics", &d3);

    let (ok4, d4) = summarize(&selftest::loss_checks());
    line(4, Some(ok4), "loss identities", &d4);

    let c5 = selftest::invariance_check();
    line(5, Some(c5.passed), "guidance colour invariance", &c5.detail);

    let root = match std::env::var("NIST_ACCEPTANCE_DIR") {
        Ok(d) => PathBuf::from(d),
        Err(_) => artifacts(),
    };
    if std::env::var("NIST_ACCEPTANCE_FULL").is_ok_and(|v| v == "1") {
        regenerate(&root);
    }

    // 6: held-out silhouette error and loss decrease of the default run
    let full = variant_dir(&root, "full");
    match (report_means(&full), loss_window_means(&full)) {
        (Some((l1, base, ratio)), Some((first, last, steps))) => {
            let pass = ratio <= 0.7 && last < 0.5 * first;
            line(
                6,
                Some(pass),
                "desk-scale training outcome (recorded)",
                &format!(
                    "l1_sil {l1:.5} vs baseline {base:.5} ratio {ratio:.3} (need <= 0.7); \
                     loss first100 {first:.2} last100 {last:.2} ({:.3}x, need < 0.5) over {steps} steps",
                    last / first
                ),
            );
        }
        _ => line(6, None, "desk-scale training outcome", &format!("no artifacts under {}", full.display())),
    }

    // 7: ablation ordering
    let l1 = |name: &str| report_means(&variant_dir(&root, name)).map(|m| m.0);
    match (l1("full"), l1("no_percep"), l1("no_deform"), report_max_flow(&variant_dir(&root, "no_warp"))) {
        (Some(f), Some(p), Some(d), Some(flow)) => {
            let margin = (d - f) / d;
            let pass = f <= p && p < d && margin >= 0.05 && flow == 0.0;
            line(
                7,
                Some(pass),
                "ablation direction (recorded)",
                &format!(
                    "l1_sil full {f:.5} no_percep {p:.5} no_deform {d:.5}; margin {:.1}% (need >= 5%); no_warp max|v| {flow}",
                    100.0 * margin
                ),
            );
        }
        _ => line(7, None, "ablation direction", &format!("incomplete artifacts under {}", root.display())),
    }

    // 8: live short rerun plus the recorded full-size rerun
    let live = short_determinism();
    let rerun = variant_dir(&root, "full_rerun");
    // checkpoints are compared directly when present, else by recorded digest
    let model_id = |d: &Path| -> Option<Vec<u8>> {
        std::fs::read(d.join("model.nist")).ok().or_else(|| {
            let s = std::fs::read_to_string(d.join("model.sha256")).ok()?;
            Some(s.split_whitespace().next()?.as_bytes().to_vec())
        })
    };
    let recorded = match (
        std::fs::read(full.join(LOSS_TRACE)),
        std::fs::read(rerun.join(LOSS_TRACE)),
        model_id(&full),
        model_id(&rerun),
    ) {
        (Ok(a), Ok(b), Some(ma), Some(mb)) => Some(a == b && ma == mb),
        _ => None,
    };
    let pass = live && recorded.unwrap_or(true);
    let detail = format!(
        "live 2x20-step rerun identical: {live}; recorded 2000-step rerun identical: {}",
        recorded.map_or("not recorded".to_string(), |r| r.to_string())
    );
    line(8, Some(pass), "determinism", &detail);

    assert!(ok1 && ok2 && ok3 && ok4 && c5.passed, "operator-level criteria must pass");
    assert!(live, "short determinism rerun diverged");
    if let Some(r) = recorded {
        assert!(r, "recorded full-size rerun diverged");
    }
}

/// Two 20-step runs of the default model on a small dataset, compared bitwise.
fn short_determinism() -> bool {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    (cfg.width, cfg.height, cfg.frames) = (64, 64, 6);
    cfg.tess.level = 4;
    cfg.train.steps = 20;
    cfg.train.checkpoint_every = 10;
    let manifest = generate_dataset(&cfg.dataset_spec(), &dir.path().join("data")).unwrap();
    let frames: Vec<_> = (0..manifest.len()).map(|i| manifest.load_frame(i).unwrap()).collect();
    let run = |name: &str| {
        let out = dir.path().join(name);
        train_frames(&frames, &cfg, &out, |_, _| {}).unwrap();
        ["loss.txt", "step_000010.nist", "step_000020.nist", "model.nist"]
            .map(|f| std::fs::read(out.join(f)).unwrap())
    };
    let same = run("a") == run("b");
    same && Manifest::read(&dir.path().join("data")).is_ok()
}
