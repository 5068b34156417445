use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nist::config::RunConfig;
use nist::dataset::{generate_dataset, Manifest};
use nist::evaluation::{compare_ablations, evaluate};
use nist::image::{write_pfm, write_png};
use nist::network::{checkpoint, predict};
use nist::raster::GBufferFrame;
use nist::training::{self, trace_line, Ablation};

/// Neural image-space tessellation: data generation, training and evaluation.
#[derive(Parser)]
#[command(name = "nist", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key (repeatable), e.g. --set lr=2e-4.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Render an input/label dataset.
    Gen {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        scene: Option<String>,
        #[arg(long)]
        frames: Option<usize>,
        #[arg(long, value_name = "WxH")]
        res: Option<String>,
        #[arg(long)]
        tess_level: Option<u32>,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Dataset directory or manifest file.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Suppress the per-step loss lines on stdout.
        #[arg(long)]
        quiet: bool,
    },
    /// Run a checkpoint on one frame directory.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        frame: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a checkpoint on a held-out dataset.
    Eval {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        /// Score the label itself (harness check).
        #[arg(long)]
        oracle_label: bool,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and rank the full model and its ablations.
    Ablate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Training dataset.
        #[arg(long)]
        data: PathBuf,
        /// Held-out dataset.
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated subset of full,no_deform,no_warp,no_percep.
        #[arg(long, value_delimiter = ',')]
        variants: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Gradient checks, tessellation invariants and warp/loss identities.
    Selftest {
        /// Inject a backward fault into an operator (harness validation).
        #[arg(long, hide = true)]
        fault: Option<String>,
    },
}

/// Bad flags, config keys or values: exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(e: impl std::fmt::Display) -> anyhow::Error {
    Usage(e.to_string()).into()
}

/// Defaults, then the config file, then flag-derived keys, then --set.
fn run_config(args: &ConfigArgs, flags: &[(&str, Option<String>)]) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        cfg.apply_text(&text, &path.display().to_string()).map_err(usage)?;
    }
    for (key, value) in flags {
        if let Some(v) = value {
            cfg.set(key, v).map_err(usage)?;
        }
    }
    for kv in &args.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k, v).map_err(usage)?;
    }
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn setup_threads() -> Result<()> {
    let Ok(raw) = std::env::var("NIST_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| usage(format!("NIST_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn cmd_train(cfg: &RunConfig, data: &Path, out: &Path, quiet: bool) -> Result<()> {
    let manifest = Manifest::read(data)?;
    let summary = training::train(&manifest, cfg, out, |step, l| {
        if !quiet {
            println!("{}", trace_line(step, l));
        }
    })?;
    println!(
        "trained {} steps in {:.1}s, model written to {}",
        summary.steps,
        summary.seconds,
        summary.model.display()
    );
    Ok(())
}

fn cmd_infer(checkpoint_path: &Path, frame_dir: &Path, out: &Path) -> Result<()> {
    let params = checkpoint::load(checkpoint_path)?;
    let frame = GBufferFrame::read_dir(frame_dir)?;
    let pred = predict(&params, &frame).with_context(|| format!("running {}", checkpoint_path.display()))?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_pfm(&out.join("pred.pfm"), &pred.image)?;
    write_png(&out.join("pred.png"), &pred.image)?;
    println!("wrote {} (max |flow| {:.4})", out.join("pred.pfm").display(), pred.max_flow);
    Ok(())
}

fn cmd_eval(cfg: &RunConfig, checkpoint_path: Option<&Path>, data: &Path, oracle: bool, out: &Path) -> Result<()> {
    let manifest = Manifest::read(data)?;
    let params = match checkpoint_path {
        Some(p) => checkpoint::load(p)?,
        None if oracle => nist::network::init_params(&cfg.model, cfg.train.seed)?,
        None => return Err(usage("eval needs --checkpoint unless --oracle-label is given")),
    };
    let report = evaluate(&params, &manifest, &cfg.mask, oracle)?;
    report.write(out)?;
    print!("{}", report.to_text());
    Ok(())
}

fn cmd_ablate(cfg: &RunConfig, data: &Path, test: &Path, variants: Option<&[String]>, out: &Path) -> Result<()> {
    let variants: Vec<Ablation> = match variants {
        Some(names) => names.iter().map(|n| n.parse()).collect::<nist::Result<_>>().map_err(usage)?,
        None => Ablation::ALL.to_vec(),
    };
    if variants.len() < 2 {
        return Err(usage("ablate needs at least two variants"));
    }
    let train_set = Manifest::read(data)?;
    let test_set = Manifest::read(test)?;
    let mut reports = Vec::new();
    for v in variants {
        let vcfg = v.apply(cfg);
        let dir = out.join(v.to_string());
        eprintln!("training {v} -> {}", dir.display());
        let summary = training::train(&train_set, &vcfg, &dir, |_, _| {})?;
        let params = checkpoint::load(&summary.model)?;
        let report = evaluate(&params, &test_set, &vcfg.mask, false)?;
        report.write(&dir)?;
        reports.push((v.to_string(), report));
    }
    let ranking = compare_ablations(&reports)?;
    for (name, body) in [("ranking.txt", ranking.to_text()), ("ranking.csv", ranking.to_csv())] {
        let p = out.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
    }
    print!("{}", ranking.to_text());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    setup_threads()?;
    match cli.command {
        Command::Gen {
            cfg,
            scene,
            frames,
            res,
            tess_level,
            alpha,
            seed,
            out,
        } => {
            let cfg = run_config(
                &cfg,
                &[
                    ("scene", scene),
                    ("frames", frames.map(|v| v.to_string())),
                    ("res", res),
                    ("tess_level", tess_level.map(|v| v.to_string())),
                    ("alpha", alpha.map(|v| v.to_string())),
                    ("data_seed", seed.map(|v| v.to_string())),
                ],
            )?;
            let manifest = generate_dataset(&cfg.dataset_spec(), &out)?;
            println!("wrote {} frames to {}", manifest.len(), out.display());
        }
        Command::Train {
            cfg,
            data,
            steps,
            seed,
            out,
            quiet,
        } => {
            let flags = [("steps", steps.map(|v| v.to_string())), ("seed", seed.map(|v| v.to_string()))];
            cmd_train(&run_config(&cfg, &flags)?, &data, &out, quiet)?;
        }
        Command::Infer { checkpoint, frame, out } => cmd_infer(&checkpoint, &frame, &out)?,
        Command::Eval {
            cfg,
            checkpoint,
            data,
            oracle_label,
            out,
        } => cmd_eval(&run_config(&cfg, &[])?, checkpoint.as_deref(), &data, oracle_label, &out)?,
        Command::Ablate {
            cfg,
            data,
            test,
            steps,
            seed,
            variants,
            out,
        } => {
            let flags = [("steps", steps.map(|v| v.to_string())), ("seed", seed.map(|v| v.to_string()))];
            cmd_ablate(&run_config(&cfg, &flags)?, &data, &test, variants.as_deref(), &out)?;
        }
        Command::Selftest { fault } => {
            if let Some(name) = &fault {
                let op = nist::tensor::fault::FaultOp::parse(name)
                    .ok_or_else(|| usage(format!("unknown fault operator {name:?}")))?;
                nist::tensor::fault::set_fault(op, true);
            }
            let report = nist::selftest::run();
            print!("{}", report.to_text());
            if !report.passed() {
                bail!("self-test failed: {}", report.failures().join(", "));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if e.is::<Usage>() { 2 } else { 1 })
        }
    }
}
