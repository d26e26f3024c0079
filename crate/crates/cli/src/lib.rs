//! Command-line driver: refine coarse label maps, score them, summarise
//! datasets and generate synthetic fixtures.

pub mod commands;
pub mod config;
pub mod dataset;
pub mod io;
pub mod selftest;

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use uosam_core::synth::Corruption;

use commands::eval::{delta_lines, load_report, run_eval, ImageLine};
use commands::refine::run_refine;
use commands::stats::{run_stats, table_row, HEADER};
use commands::synth::{run_synth, SynthArgs};
use config::{ConfigError, PipelineConfig};
use selftest::{run_selftest, SelftestOptions};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "uosam", version, about = "Refine coarse segmentation label maps with a promptable segmenter")]
pub struct Cli {
    /// JSON config file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// `mock`, `tcp:host:port` or `stdio:<command>`. `UO_SAM_BRIDGE` takes precedence.
    #[arg(long, global = true)]
    pub backend: Option<String>,
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Skip per-object local refinement.
    #[arg(long, global = true)]
    pub no_lro: bool,
    /// Skip whole-image proposals and vote fusion.
    #[arg(long, global = true)]
    pub no_gro: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Refine every image of a dataset directory.
    Refine { input: PathBuf, output: PathBuf },
    /// Score predictions against ground truth and print a JSON report.
    Eval(EvalArgs),
    /// Categories-per-image histogram of a ground-truth directory.
    Stats { dir: PathBuf },
    /// Write synthetic scenes with ground truth and coarse maps.
    Synth(SynthCmd),
    /// Run the mock-oracle acceptance checks.
    Selftest {
        #[arg(long, default_value_t = 50)]
        scenes: usize,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Directory of predicted label maps.
    pub pred: Option<PathBuf>,
    /// Directory of ground-truth label maps.
    pub gt: Option<PathBuf>,
    /// Baseline predictions directory or saved report JSON.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Compare a saved report instead of scoring directories.
    #[arg(long, conflicts_with_all = ["pred", "gt"])]
    pub report: Option<PathBuf>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write one JSON line per image plus an aggregate line.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 128)]
    pub width: usize,
    #[arg(long, default_value_t = 128)]
    pub height: usize,
    #[arg(long, default_value_t = 1)]
    pub min_objects: usize,
    #[arg(long, default_value_t = 3)]
    pub max_objects: usize,
    #[arg(long, default_value_t = 0)]
    pub dilate: usize,
    #[arg(long, default_value_t = 0)]
    pub erode: usize,
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.0)]
    pub drop: f64,
}

/// Pulls `--section.field value` and `--field_name=value` style overrides
/// out of `args`; everything else is left for clap.
pub fn split_overrides(args: Vec<OsString>) -> (Vec<OsString>, Vec<(String, String)>) {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut it = args.into_iter();
    while let Some(arg) = it.next() {
        let text = arg.to_string_lossy();
        let Some(flag) = text.strip_prefix("--") else {
            rest.push(arg);
            continue;
        };
        let (key, inline) = match flag.split_once('=') {
            Some((k, v)) => (k.to_string(), Some(v.to_string())),
            None => (flag.to_string(), None),
        };
        if !(key.contains('.') || key.contains('_')) {
            rest.push(arg);
            continue;
        }
        let value = inline.or_else(|| it.next().map(|v| v.to_string_lossy().into_owned()));
        overrides.push((key, value.unwrap_or_default()));
    }
    (rest, overrides)
}

fn load_config(cli: &Cli, overrides: &[(String, String)]) -> Result<PipelineConfig, ConfigError> {
    let build = || -> anyhow::Result<PipelineConfig> {
        let mut cfg = match &cli.config {
            Some(p) => PipelineConfig::from_file(p)?,
            None => PipelineConfig::default(),
        };
        cfg = cfg.with_overrides(overrides.iter().map(|(k, v)| (k.as_str(), v.as_str())))?;
        if let Some(b) = &cli.backend {
            cfg.backend = b.clone();
        }
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
        if cli.no_lro {
            cfg.lro.enabled = false;
        }
        if cli.no_gro {
            cfg.gro.enabled = false;
        }
        cfg.validate()?;
        Ok(cfg)
    };
    build().map_err(ConfigError)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> anyhow::Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

fn eval_command(cfg: &PipelineConfig, a: &EvalArgs) -> anyhow::Result<u8> {
    let report = if let Some(saved) = &a.report {
        let mut report = load_report(saved)?;
        if let Some(b) = &a.baseline {
            let base = load_report(b)?;
            report.deltas = Some(uosam_core::metrics::BaselineDelta {
                baseline: b.display().to_string(),
                deltas: uosam_core::metrics::report_delta(&base, &report),
            });
        }
        report
    } else {
        let (Some(pred), Some(gt)) = (&a.pred, &a.gt) else {
            anyhow::bail!("eval needs PRED and GT directories, or --report");
        };
        let run = run_eval(cfg, pred, gt, a.baseline.as_deref(), a.jsonl.is_some())?;
        if let Some(path) = &a.jsonl {
            let mut text = String::new();
            for (name, r) in run.per_image {
                text += &serde_json::to_string(&ImageLine { image: &name, report: r })?;
                text.push('\n');
            }
            text += &serde_json::to_string(&ImageLine {
                image: "*",
                report: run.report.clone(),
            })?;
            text.push('\n');
            std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        }
        run.report
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    if let Some(d) = &report.deltas {
        for line in delta_lines(&d.deltas) {
            eprintln!("delta {line}");
        }
    }
    if let Some(path) = &a.out {
        write_json(path, &report)?;
    }
    Ok(EXIT_OK)
}

fn dispatch(cli: &Cli, cfg: &PipelineConfig) -> anyhow::Result<u8> {
    match &cli.command {
        Command::Refine { input, output } => {
            let summary = run_refine(cfg, input, output)?;
            eprintln!(
                "refined {}/{} images",
                summary.processed - summary.failed,
                summary.processed
            );
            Ok(if summary.all_ok() { EXIT_OK } else { EXIT_PARTIAL })
        }
        Command::Eval(a) => eval_command(cfg, a),
        Command::Stats { dir } => {
            let stats = run_stats(dir, cfg.ignore_id)?;
            if stats.buckets.iter().sum::<usize>() + stats.zero == 0 {
                eprintln!("warning: no label maps found in {}", dir.display());
            }
            println!("{HEADER}");
            println!("{}", table_row("images", &stats));
            if stats.zero > 0 {
                eprintln!("{} images without foreground categories", stats.zero);
            }
            Ok(EXIT_OK)
        }
        Command::Synth(s) => {
            let args = SynthArgs {
                seed: s.seed,
                count: s.count,
                width: s.width,
                height: s.height,
                min_objects: s.min_objects,
                max_objects: s.max_objects,
                corruption: Corruption {
                    dilate_px: s.dilate,
                    erode_px: s.erode,
                    boundary_noise_prob: s.noise,
                    drop_fragment_prob: s.drop,
                },
            };
            let m = run_synth(&args, &s.out)?;
            eprintln!("wrote {} scenes to {}", m.entries.len(), s.out.display());
            Ok(EXIT_OK)
        }
        Command::Selftest { scenes, instances, seed } => {
            let checks = run_selftest(&SelftestOptions {
                scenes: *scenes,
                instances: *instances,
                seed: *seed,
            });
            for c in &checks {
                println!("{c}");
            }
            Ok(if checks.iter().all(|c| c.pass) { EXIT_OK } else { EXIT_PARTIAL })
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let (rest, overrides) = split_overrides(args.into_iter().map(Into::into).collect());
    let cli = match Cli::try_parse_from(rest) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let cfg = match load_config(&cli, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match dispatch(&cli, &cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
