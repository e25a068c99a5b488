use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use gavn_core::diffops::gradcheck::operator_suite;
use gavn_core::landmark::LandmarkSource;
use gavn_core::pipeline::{self, Ablation, RunConfig};
use gavn_core::{AttentionTarget, GavnError};

#[derive(Parser, Debug)]
#[command(name = "gavn", version, about = "Audio-visual face video restoration at desk scale")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Global {
    /// Run configuration (JSON). Defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overwrite non-empty output directories.
    #[arg(long, global = true)]
    force: bool,
    /// no-audio | no-identity
    #[arg(long, global = true)]
    ablate: Option<Ablation>,
    /// oracle | learned
    #[arg(long, global = true)]
    landmarks: Option<LandmarkSource>,
    /// paper | per_branch
    #[arg(long, global = true)]
    attention: Option<AttentionTarget>,
    /// Print per-epoch progress.
    #[arg(short, long, global = true)]
    verbose: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate train/val/test synthetic clips.
    GenData {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Apply the degradation grid to generated clips.
    Degrade {
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train both stages (resumes an interrupted run in the same directory).
    Train {
        #[arg(long)]
        run_dir: Option<PathBuf>,
        /// Stop after this many epochs in total.
        #[arg(long, hide = true)]
        stop_after_epochs: Option<usize>,
    },
    /// Restore one clip directory, or every clip below a directory.
    Restore {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        clip: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score restored clips against ground truth.
    Eval {
        #[arg(long)]
        gt: PathBuf,
        #[arg(long)]
        restored: PathBuf,
        /// Where reports and summary.csv go (default: <restored>/metrics).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "gavn")]
        method: String,
    },
    /// Finite-difference check of every differentiable operator.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Write a freshly initialized checkpoint for the config.
    InitCheckpoint {
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(g: &Global) -> Result<RunConfig> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(a) = g.ablate {
        cfg.ablation = a;
    }
    if let Some(l) = g.landmarks {
        cfg.model.landmarks = l;
    }
    if let Some(a) = g.attention {
        cfg.model.attention_target = a;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let g = &cli.global;
    match cli.command {
        Command::GenData { out } => {
            let mut cfg = load_config(g)?;
            if let Some(o) = out {
                cfg.paths.data_dir = o;
            }
            let cfg = cfg.resolve()?;
            let dirs = pipeline::gen_data(&cfg, &cfg.paths.data_dir, g.force)?;
            println!("wrote {} clips to {}", dirs.len(), cfg.paths.data_dir.display());
        }
        Command::Degrade { input, out } => {
            let mut cfg = load_config(g)?;
            if let Some(i) = input {
                cfg.paths.data_dir = i;
            }
            if let Some(o) = out {
                cfg.paths.degraded_dir = o;
            }
            let cfg = cfg.resolve()?;
            let dirs = pipeline::degrade_dataset(&cfg, &cfg.paths.data_dir, &cfg.paths.degraded_dir, g.force)?;
            println!("wrote {} degraded clips to {}", dirs.len(), cfg.paths.degraded_dir.display());
        }
        Command::Train { run_dir, stop_after_epochs } => {
            let mut cfg = load_config(g)?;
            if let Some(r) = run_dir {
                cfg.paths.run_dir = r;
            }
            let cfg = cfg.resolve()?;
            let run = pipeline::train_run(&cfg, g.force, stop_after_epochs)?;
            if let Some(r) = &run.landmark_report {
                println!("landmark regressor loss {:.5} -> {:.5}", r.initial_loss, r.final_loss);
            }
            if g.verbose {
                for e in run.outcome.log.iter().filter(|e| e.event == "epoch") {
                    println!("{} {} epoch {} step {} loss {:.6}", e.stage, e.phase, e.epoch, e.step, e.loss);
                }
            }
            if run.outcome.completed {
                println!("training complete: {}", pipeline::final_checkpoint(&cfg.paths.run_dir).display());
            } else {
                println!("training stopped early; rerun to resume");
            }
        }
        Command::Restore { checkpoint, clip, out } => {
            let dirs = pipeline::restore_tree(&checkpoint, &clip, &out, g.force)?;
            println!("restored {} clips into {}", dirs.len(), out.display());
        }
        Command::Eval {
            gt,
            restored,
            out,
            method,
        } => {
            let out = out.unwrap_or_else(|| restored.join("metrics"));
            let reports = pipeline::eval_dirs(&gt, &restored, &method, &out)?;
            for r in &reports {
                println!(
                    "{}: psnr {:.4} ssim {:.4} ms-ssim {:.4}",
                    r.clip, r.mean.psnr, r.mean.ssim, r.mean.ms_ssim
                );
            }
            println!("reports in {}", out.display());
        }
        Command::Gradcheck { seeds, tolerance } => {
            let seeds: Vec<u64> = (0..seeds).collect();
            let reports = operator_suite(&seeds, tolerance)?;
            let mut failed = 0;
            for r in &reports {
                let status = if r.pass { "PASS" } else { "FAIL" };
                println!("{status} {:<16} seed {} max_rel_error {:.3e}", r.name, r.seed, r.max_rel_error);
                failed += usize::from(!r.pass);
            }
            if failed > 0 {
                bail!("{failed} of {} operator checks failed", reports.len());
            }
            println!("all {} operator checks passed", reports.len());
        }
        Command::InitCheckpoint { out } => {
            let cfg = load_config(g)?.resolve()?;
            pipeline::write_init_checkpoint(&cfg, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .find_map(|e| e.downcast_ref::<GavnError>())
        .is_some_and(GavnError::is_validation);
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
