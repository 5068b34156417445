//! Silhouette-focused metrics and ablation rankings.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::dataset::Manifest;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::network::{predict, Params};
use crate::raster::GBufferFrame;

pub const PSNR_CAP: f64 = 99.0;

#[derive(Clone, Debug, PartialEq)]
pub struct MaskConfig {
    /// Square dilation radius in pixels.
    pub radius: usize,
    /// Geometric-normal crease threshold in degrees.
    pub angle_deg: f64,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            radius: 3,
            angle_deg: 30.0,
        }
    }
}

/// Pixels near coverage edges or geometric-normal creases, dilated by a
/// `(2r+1)^2` square. Both pixels of a discontinuous 4-neighbour pair are
/// seeds.
pub fn silhouette_mask(coverage: &Image, gnormal: &Image, cfg: &MaskConfig) -> Vec<bool> {
    let (w, h) = (coverage.width(), coverage.height());
    let cos_max = cfg.angle_deg.to_radians().cos();
    let covered = |x: usize, y: usize| coverage.pixel(x, y)[0] > 0.5;
    let crease = |a: (usize, usize), b: (usize, usize)| -> bool {
        let ca = covered(a.0, a.1);
        let cb = covered(b.0, b.1);
        if ca != cb {
            return true;
        }
        if !ca {
            return false;
        }
        let na = gnormal.pixel(a.0, a.1);
        let nb = gnormal.pixel(b.0, b.1);
        let dot: f64 = (0..3).map(|k| na[k] as f64 * nb[k] as f64).sum();
        let la: f64 = na.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        let lb: f64 = nb.iter().map(|v| (*v as f64).powi(2)).sum::<f64>().sqrt();
        la > 0.0 && lb > 0.0 && dot / (la * lb) < cos_max
    };
    let mut seed = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            if x + 1 < w && crease((x, y), (x + 1, y)) {
                seed[y * w + x] = true;
                seed[y * w + x + 1] = true;
            }
            if y + 1 < h && crease((x, y), (x, y + 1)) {
                seed[y * w + x] = true;
                seed[(y + 1) * w + x] = true;
            }
        }
    }
    // separable square dilation
    let r = cfg.radius;
    let mut rows = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            rows[y * w + x] = (lo..=hi).any(|xx| seed[y * w + xx]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|yy| rows[yy * w + x]);
        }
    }
    out
}

fn check_pair(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() || a.channels() != b.channels() {
        return Err(Error::Eval(format!(
            "image shapes differ: {}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    Ok(())
}

fn masked_sums(a: &Image, b: &Image, mask: Option<&[bool]>, f: impl Fn(f64) -> f64) -> Result<(f64, usize)> {
    check_pair(a, b)?;
    let c = a.channels();
    let n = a.width() * a.height();
    if let Some(m) = mask {
        if m.len() != n {
            return Err(Error::Eval(format!("mask has {} entries for {n} pixels", m.len())));
        }
    }
    let mut sum = 0.0;
    let mut count = 0;
    for p in 0..n {
        if mask.is_some_and(|m| !m[p]) {
            continue;
        }
        for k in 0..c {
            sum += f(a.data()[p * c + k] as f64 - b.data()[p * c + k] as f64);
        }
        count += c;
    }
    if count == 0 {
        return Err(Error::Eval("empty mask".into()));
    }
    Ok((sum, count))
}

/// `10 log10(1 / MSE)` for images in [0, 1], capped at 99 dB.
pub fn psnr(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    let (sum, count) = masked_sums(a, b, mask, |d| d * d)?;
    let mse = sum / count as f64;
    if mse <= 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Mean absolute error over masked pixels and all channels.
pub fn l1(a: &Image, b: &Image, mask: Option<&[bool]>) -> Result<f64> {
    let (sum, count) = masked_sums(a, b, mask, f64::abs)?;
    Ok(sum / count as f64)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameMetrics {
    pub frame: String,
    pub psnr_full: f64,
    pub psnr_sil: f64,
    pub l1_sil: f64,
    pub baseline_l1_sil: f64,
    pub ratio: f64,
}

fn ratio(l1: f64, baseline: f64) -> f64 {
    if baseline > 0.0 {
        l1 / baseline
    } else if l1 == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Metrics for one prediction against the frame's label and input.
pub fn frame_metrics(name: &str, frame: &GBufferFrame, pred: &Image, cfg: &MaskConfig) -> Result<FrameMetrics> {
    let mask = silhouette_mask(&frame.coverage, &frame.gnormal, cfg);
    let sil = |r: Result<f64>| r.map_err(|e| Error::Eval(format!("frame {name}: {e}")));
    let l1_sil = sil(l1(pred, &frame.label, Some(&mask)))?;
    let baseline = sil(l1(&frame.color, &frame.label, Some(&mask)))?;
    Ok(FrameMetrics {
        frame: name.to_string(),
        psnr_full: psnr(pred, &frame.label, None)?,
        psnr_sil: sil(psnr(pred, &frame.label, Some(&mask)))?,
        l1_sil,
        baseline_l1_sil: baseline,
        ratio: ratio(l1_sil, baseline),
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Frame names identify the test set when comparing reports.
    pub frames: Vec<FrameMetrics>,
    pub psnr_full: f64,
    pub psnr_sil: f64,
    pub l1_sil: f64,
    pub baseline_l1_sil: f64,
    /// Aggregate silhouette L1 over aggregate baseline.
    pub ratio: f64,
    /// Largest |flow| component seen while predicting (0 without warping).
    pub max_flow: f64,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameMetrics>, max_flow: f64) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Eval("no frames to evaluate".into()));
        }
        let n = frames.len() as f64;
        let mean = |f: fn(&FrameMetrics) -> f64| frames.iter().map(f).sum::<f64>() / n;
        let l1_sil = mean(|m| m.l1_sil);
        let baseline = mean(|m| m.baseline_l1_sil);
        Ok(EvalReport {
            psnr_full: mean(|m| m.psnr_full),
            psnr_sil: mean(|m| m.psnr_sil),
            l1_sil,
            baseline_l1_sil: baseline,
            ratio: ratio(l1_sil, baseline),
            max_flow,
            frames,
        })
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("frame, psnr_full, psnr_sil, l1_sil, baseline_l1_sil, ratio\n");
        let mut row = |name: &str, a: f64, b: f64, c: f64, d: f64, e: f64| {
            let _ = writeln!(s, "{name}, {a:.6}, {b:.6}, {c:.8}, {d:.8}, {e:.6}");
        };
        for m in &self.frames {
            row(&m.frame, m.psnr_full, m.psnr_sil, m.l1_sil, m.baseline_l1_sil, m.ratio);
        }
        row("mean", self.psnr_full, self.psnr_sil, self.l1_sil, self.baseline_l1_sil, self.ratio);
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "frames               {}", self.frames.len());
        let _ = writeln!(s, "psnr_full (dB)       {:.3}", self.psnr_full);
        let _ = writeln!(s, "psnr_sil (dB)        {:.3}", self.psnr_sil);
        let _ = writeln!(s, "l1_sil               {:.6}", self.l1_sil);
        let _ = writeln!(s, "baseline_l1_sil      {:.6}", self.baseline_l1_sil);
        let _ = writeln!(s, "improvement_ratio    {:.4}", self.ratio);
        let _ = writeln!(s, "max_flow             {:.6}", self.max_flow);
        s
    }

    /// Writes `report.txt` and `report.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, body) in [("report.txt", self.to_text()), ("report.csv", self.to_csv())] {
            let p = dir.join(name);
            std::fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Runs the model on every frame of `manifest`. With `oracle_label` the
/// label itself is scored as the prediction.
pub fn evaluate(params: &Params<f32>, manifest: &Manifest, cfg: &MaskConfig, oracle_label: bool) -> Result<EvalReport> {
    if manifest.is_empty() {
        return Err(Error::Eval(format!(
            "test manifest under {} lists no frames",
            manifest.root.display()
        )));
    }
    params.config.check_resolution(manifest.width, manifest.height)?;
    let rows = (0..manifest.len())
        .into_par_iter()
        .map(|i| -> Result<(FrameMetrics, f64)> {
            let frame = manifest.load_frame(i)?;
            let name = manifest.frames[i].display().to_string();
            let (pred, flow) = if oracle_label {
                (frame.label.clone(), 0.0)
            } else {
                let p = predict(params, &frame)?;
                (p.image, p.max_flow)
            };
            Ok((frame_metrics(&name, &frame, &pred, cfg)?, flow))
        })
        .collect::<Result<Vec<_>>>()?;
    let max_flow = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    EvalReport::from_frames(rows.into_iter().map(|r| r.0).collect(), max_flow)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Ranking {
    /// `(name, report)` sorted by aggregate silhouette L1, ties by name.
    pub entries: Vec<(String, EvalReport)>,
}

pub fn compare_ablations(reports: &[(String, EvalReport)]) -> Result<Ranking> {
    if reports.len() < 2 {
        return Err(Error::Eval("need at least two reports to compare".into()));
    }
    let names = |r: &EvalReport| r.frames.iter().map(|f| f.frame.clone()).collect::<Vec<_>>();
    let reference = names(&reports[0].1);
    for (name, r) in &reports[1..] {
        if names(r) != reference {
            return Err(Error::Eval(format!(
                "report {name} was computed on a different test set than {}",
                reports[0].0
            )));
        }
    }
    let mut entries = reports.to_vec();
    entries.sort_by(|a, b| a.1.l1_sil.total_cmp(&b.1.l1_sil).then_with(|| a.0.cmp(&b.0)));
    Ok(Ranking { entries })
}

impl Ranking {
    pub fn to_text(&self) -> String {
        let width = self.entries.iter().map(|e| e.0.len()).max().unwrap_or(0).max(7);
        let mut s = format!(
            "{:<4} {:<width$} {:>12} {:>12} {:>8} {:>10} {:>10} {:>10}\n",
            "rank", "variant", "l1_sil", "baseline", "ratio", "psnr_sil", "psnr_full", "max_flow"
        );
        for (i, (name, r)) in self.entries.iter().enumerate() {
            let _ = writeln!(
                s,
                "{:<4} {:<width$} {:>12.6} {:>12.6} {:>8.4} {:>10.3} {:>10.3} {:>10.6}",
                i + 1,
                name,
                r.l1_sil,
                r.baseline_l1_sil,
                r.ratio,
                r.psnr_sil,
                r.psnr_full,
                r.max_flow
            );
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("rank, variant, l1_sil, baseline_l1_sil, ratio, psnr_sil, psnr_full, max_flow\n");
        for (i, (name, r)) in self.entries.iter().enumerate() {
            let _ = writeln!(
                s,
                "{}, {name}, {:.8}, {:.8}, {:.6}, {:.6}, {:.6}, {:.8}",
                i + 1,
                r.l1_sil,
                r.baseline_l1_sil,
                r.ratio,
                r.psnr_sil,
                r.psnr_full,
                r.max_flow
            );
        }
        s
    }
}
