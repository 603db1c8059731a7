//! Command-line front end: `assign` labels a gts file against the
//! configured pyramid, `analyze` reproduces the scale-sample imbalance
//! histogram, `sweep` reruns the harness over a parameter grid.
//!
//! All state flows through the config file and flags; no environment
//! variables are consulted. Outputs are only written after the full run
//! has been computed, so a validation failure never leaves partial files.

mod config;
mod output;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use config::{build_assigner, parse_metric, parse_run_config, AssignerConfig, RunConfig};
use rfla::analysis::{
    positives_per_interval, sweep_anchor_scale, sweep_beta, sweep_k, IntervalHistogram,
    Parallelism, TrialConfig,
};

#[derive(Parser)]
#[command(name = "rfla", about = "Receptive-field based label assignment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Assign a gts file against the configured prior set and write the
    /// per-prior label table plus a per-gt summary.
    Assign(AssignArgs),
    /// Run the positives-per-scale-interval study for every configured
    /// assigner and write a histogram CSV plus an SVG chart.
    Analyze(AnalyzeArgs),
    /// Rerun the study over a parameter grid and write a sweep table.
    Sweep(SweepArgs),
}

#[derive(Args)]
struct AssignArgs {
    #[arg(long)]
    config: PathBuf,
    /// CSV of ground-truth boxes with header cx,cy,w,h.
    #[arg(long)]
    gts: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured distance metric (score-ranked assigners only).
    #[arg(long)]
    metric: Option<String>,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the configured trial seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Which parameter to sweep.
    #[arg(long)]
    param: SweepParam,
    /// Comma-separated grid of values, e.g. 0.95,0.9,0.85,0.8.
    #[arg(long, value_parser = parse_grid)]
    grid: Grid,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepParam {
    K,
    Beta,
    AnchorScale,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::K => "k",
            SweepParam::Beta => "beta",
            SweepParam::AnchorScale => "anchor_scale",
        }
    }
}

#[derive(Clone, Debug)]
struct Grid(Vec<f64>);

fn parse_grid(raw: &str) -> Result<Grid, String> {
    raw.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map_err(|_| format!("'{tok}' is not a number"))
                .and_then(|v| {
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(format!("'{tok}' is not finite"))
                    }
                })
        })
        .collect::<Result<Vec<f64>, String>>()
        .map(Grid)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Assign(args) => cmd_assign(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    parse_run_config(&text)
}

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    match flag.or_else(|| cfg.output_dir.as_ref().map(PathBuf::from)) {
        Some(dir) => Ok(dir),
        None => bail!("no output directory: pass --out or set output.dir in the config"),
    }
}

fn trial_config(cfg: &RunConfig, seed_override: Option<u64>) -> Result<TrialConfig> {
    let mut trial = match cfg.trial {
        Some(t) => t,
        None => bail!("this command needs a `trial` section in the config"),
    };
    if let Some(seed) = seed_override {
        trial.seed = seed;
    }
    trial.validate()?;
    Ok(trial)
}

fn write_outputs(dir: &Path, files: &[(&str, &str)]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for (name, content) in files {
        let path = dir.join(name);
        fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn cmd_assign(args: AssignArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out_dir = resolve_out_dir(args.out, &cfg)?;
    let gts_text = fs::read_to_string(&args.gts)
        .with_context(|| format!("reading gts {}", args.gts.display()))?;
    let gts = output::parse_gts_csv(&gts_text)?;

    let mut assigner_cfg = cfg.assigner.clone();
    if let Some(token) = &args.metric {
        assigner_cfg = assigner_cfg.with_metric(parse_metric(token)?)?;
    }
    let built = build_assigner(&assigner_cfg, &cfg.pyramid)?;
    let result = built.assigner.assign(&gts);

    let labels = output::labels_csv(&built.priors, &result);
    let summary = output::summary_json(&built.name, &gts, &result)?;
    write_outputs(&out_dir, &[("labels.csv", &labels), ("summary.json", &summary)])
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out_dir = resolve_out_dir(args.out, &cfg)?;
    let trial = trial_config(&cfg, args.seed)?;

    let mut histograms: Vec<(String, IntervalHistogram)> = Vec::new();
    for assigner_cfg in &cfg.analyze_assigners {
        let built = build_assigner(assigner_cfg, &cfg.pyramid)?;
        let hist = positives_per_interval(built.assigner.as_ref(), &trial, Parallelism::Rayon)?;
        histograms.push((built.name, hist));
    }

    let csv = output::histogram_csv(&histograms);
    let svg = output::histogram_svg(&histograms);
    write_outputs(&out_dir, &[("histogram.csv", &csv), ("histogram.svg", &svg)])
}

fn cmd_sweep(args: SweepArgs) -> Result<()> {
    let cfg = load_config(&args.config)?;
    let out_dir = resolve_out_dir(args.out, &cfg)?;
    let trial = trial_config(&cfg, args.seed)?;
    let points = rfla::receptive_field::build_grid(&cfg.pyramid)?;

    let entries: Vec<(f64, IntervalHistogram)> = match (args.param, &cfg.assigner) {
        (SweepParam::K, AssignerConfig::Rfla { cfg: hla, .. }) => {
            let ks = args
                .grid
                .0
                .iter()
                .map(|&v| {
                    if v.fract() == 0.0 && v >= 1.0 {
                        Ok(v as usize)
                    } else {
                        bail!("k grid values must be positive integers, got {v}")
                    }
                })
                .collect::<Result<Vec<usize>>>()?;
            sweep_k(&ks, &points, hla, &trial, Parallelism::Rayon)?
                .into_iter()
                .map(|e| (e.value, e.histogram))
                .collect()
        }
        (SweepParam::Beta, AssignerConfig::Rfla { cfg: hla, .. }) => {
            sweep_beta(&args.grid.0, &points, hla, &trial, Parallelism::Rayon)?
                .into_iter()
                .map(|e| (e.value, e.histogram))
                .collect()
        }
        (SweepParam::AnchorScale, AssignerConfig::MaxIou { anchors, cfg: iou, .. }) => {
            sweep_anchor_scale(&args.grid.0, &cfg.pyramid, anchors, iou, &trial, Parallelism::Rayon)?
                .into_iter()
                .map(|e| (e.value, e.histogram))
                .collect()
        }
        (SweepParam::K | SweepParam::Beta, other) => bail!(
            "--param {} needs an rfla assigner in the config, found '{}'",
            args.param.name(),
            other.name()
        ),
        (SweepParam::AnchorScale, other) => bail!(
            "--param anchor_scale needs a maxiou assigner in the config, found '{}'",
            other.name()
        ),
    };

    let csv = output::sweep_csv(args.param.name(), &entries);
    write_outputs(&out_dir, &[("sweep.csv", &csv)])
}
