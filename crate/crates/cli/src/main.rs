//! `mural3m` command-line front end.
//!
//! Exit status: 0 on success, 1 on an input or configuration error, 2 when
//! a restoration backend fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use mural3m_core::backend::BackendError;
use mural3m_core::frequency::decompose;
use mural3m_core::io::{load_mask_png, load_png, save_mask_png, save_png};
use mural3m_core::maskgen::{generate, MaskConfig, MaskKind, MaskSpec};
use mural3m_core::metrics::{compare, format_psnr};
use mural3m_core::pipeline::{
    all_perspectives, parse_config_text, restore_giant, run_sweep, tile_corpus, write_corpus, PipelineConfig,
    PipelineError, SweepSpec,
};

#[derive(Debug, Parser)]
#[command(name = "mural3m", version, about = "Multi-scale, multi-perspective restoration of giant images")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic defect mask (0 = keep, 255 = defect).
    Mask(MaskArgs),
    /// Split an image into low- and high-frequency bands.
    Decompose(DecomposeArgs),
    /// Restore a damaged image under a defect mask.
    Restore(RestoreArgs),
    /// Compare two images.
    Metrics(MetricsArgs),
    /// Restore a reference under masks of increasing coverage.
    Sweep(SweepArgs),
    /// Export every tile of every perspective and scale as PNGs.
    TileCorpus(CorpusArgs),
}

#[derive(Debug, Args)]
struct MaskArgs {
    #[arg(long)]
    kind: MaskKind,
    #[arg(long)]
    coverage: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    size: (usize, usize),
    #[arg(short, long)]
    output: PathBuf,
    /// Print the generation record as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct DecomposeArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long, default_value_t = mural3m_core::frequency::DEFAULT_CUTOFF)]
    cutoff: f64,
    /// Writes `<prefix>low.png` and `<prefix>high.png`.
    #[arg(long, default_value = "bands_")]
    out_prefix: String,
}

/// Pipeline settings: file values first, then `--set` pairs, then the
/// dedicated flags. The worker count comes from `--workers`, else the
/// environment, else the file.
#[derive(Debug, Args)]
struct ConfigArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` setting; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// `null`, `diffusion` or `external:<command>` for every band.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    tile: Option<usize>,
    /// `default`, `alternate` or three comma-separated weights.
    #[arg(long)]
    scale_weights: Option<String>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    fill: Option<f64>,
    /// Run the full-band backend again over each merged tile.
    #[arg(long)]
    second_stage: bool,
    #[arg(long)]
    workers: Option<usize>,
}

impl ConfigArgs {
    fn build(&self) -> Result<PipelineConfig> {
        let mut pairs = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                parse_config_text(&text)?
            }
            None => Vec::new(),
        };
        for s in &self.set {
            let (k, v) = s.split_once('=').ok_or_else(|| anyhow!("--set expects KEY=VALUE, got '{s}'"))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k.to_string(), v));
            }
        };
        flag("backend", self.backend.clone());
        flag("tile", self.tile.map(|v| v.to_string()));
        flag("scale_weights", self.scale_weights.clone());
        flag("cutoff", self.cutoff.map(|v| v.to_string()));
        flag("seed", self.seed.map(|v| v.to_string()));
        flag("fill", self.fill.map(|v| v.to_string()));
        if self.second_stage {
            flag("second_stage", Some("true".into()));
        }
        let mut cfg = PipelineConfig::from_pairs(&pairs)?;
        match self.workers {
            Some(n) => cfg.workers = n,
            None => cfg.apply_env()?,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct RestoreArgs {
    /// Damaged image.
    #[arg(short, long)]
    input: PathBuf,
    /// Defect mask PNG; non-zero marks a defect.
    #[arg(short, long)]
    mask: PathBuf,
    #[arg(short, long)]
    output: PathBuf,
    /// Undamaged image; adds metrics to the report.
    #[arg(long)]
    reference: Option<PathBuf>,
    /// Write the JSON report here.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Print the JSON report.
    #[arg(long)]
    json: bool,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[arg(short = 'a', long)]
    restored: PathBuf,
    #[arg(short = 'b', long)]
    reference: PathBuf,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(short, long)]
    reference: PathBuf,
    #[arg(long, default_value = "jelly")]
    kind: MaskKind,
    /// Comma-separated coverages; may be empty.
    #[arg(long, default_value = "0.3733,0.4605,0.5772")]
    coverages: String,
    /// Comma-separated mask seeds.
    #[arg(long, default_value = "0,1,2,3,4")]
    seeds: String,
    /// Report path without extension; `.csv` and `.json` are written.
    /// Without it the CSV goes to standard output.
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[command(flatten)]
    cfg: ConfigArgs,
}

#[derive(Debug, Args)]
struct CorpusArgs {
    #[arg(short, long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = mural3m_core::tiling::DEFAULT_TILE)]
    tile: usize,
    #[arg(long, default_value = "1.0,0.8,0.6")]
    scales: String,
    /// `all` or comma-separated perspective indices.
    #[arg(long, default_value = "all")]
    perspectives: String,
}

fn parse_size(s: &str) -> Result<(usize, usize), String> {
    let (w, h) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected WIDTHxHEIGHT, got '{s}'"))?;
    let dim = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("bad dimension '{v}' in '{s}'"));
    Ok((dim(w)?, dim(h)?))
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse::<T>().map_err(|_| anyhow!("bad {what} '{p}'")))
        .collect()
}

fn run_mask(a: &MaskArgs) -> Result<()> {
    let (w, h) = a.size;
    let g = generate(&MaskSpec::new(a.kind, a.coverage, w, h, a.seed), &MaskConfig::default())?;
    save_mask_png(&g.mask, &a.output)?;
    if a.json {
        println!("{}", serde_json::to_string(&g)?);
    } else {
        println!("{} coverage {:.6} (target {})", g.kind, g.achieved, g.target);
    }
    Ok(())
}

fn run_decompose(a: &DecomposeArgs) -> Result<()> {
    let img = load_png(&a.input)?;
    let bands = decompose(&img, a.cutoff)?;
    for (name, band) in [("low", &bands.low), ("high", &bands.high)] {
        let path = format!("{}{name}.png", a.out_prefix);
        save_png(band, &path)?;
        println!("{path}");
    }
    Ok(())
}

fn run_restore(a: &RestoreArgs) -> Result<()> {
    let cfg = a.cfg.build()?;
    let damaged = load_png(&a.input)?;
    let mask = load_mask_png(&a.mask)?;
    info!("restoring {}x{} with {} worker(s)", damaged.width(), damaged.height(), cfg.workers);
    let out = restore_giant(&damaged, &mask, &cfg)?;
    save_png(&out.image, &a.output)?;
    let mut report = serde_json::to_value(&out.report)?;
    if let Some(r) = &a.reference {
        let m = compare(&out.image, &load_png(r)?)?;
        report["metrics"] = serde_json::to_value(m)?;
    }
    let text = serde_json::to_string(&report)?;
    if let Some(p) = &a.report {
        std::fs::write(p, format!("{text}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    if a.json {
        println!("{text}");
    }
    Ok(())
}

fn run_metrics(a: &MetricsArgs) -> Result<()> {
    let m = compare(&load_png(&a.restored)?, &load_png(&a.reference)?)?;
    if a.json {
        println!("{}", serde_json::to_string(&m)?);
    } else {
        println!("mae    {}", m.mae);
        println!("mse    {}", m.mse);
        println!("psnr   {}", format_psnr(m.psnr));
        println!("ssim   {}", m.ssim);
        println!("mae255 {}", m.mae255);
        println!("mse255 {}", m.mse255);
    }
    Ok(())
}

fn run_sweep_cmd(a: &SweepArgs) -> Result<()> {
    let cfg = a.cfg.build()?;
    let spec = SweepSpec {
        coverages: parse_list(&a.coverages, "coverage")?,
        mask_kind: a.kind,
        seeds: parse_list(&a.seeds, "seed")?,
        reference: a.reference.clone(),
        output: a.output.clone(),
    };
    let report = run_sweep(&spec, &cfg)?;
    match &a.output {
        Some(base) => {
            let (csv, json) = report.write(base)?;
            println!("{}\n{}", csv.display(), json.display());
        }
        None => print!("{}", report.to_csv()),
    }
    Ok(())
}

fn run_corpus(a: &CorpusArgs) -> Result<()> {
    let scales: Vec<f64> = parse_list(&a.scales, "scale")?;
    let perspectives: Vec<usize> = if a.perspectives.trim() == "all" {
        all_perspectives()
    } else {
        parse_list(&a.perspectives, "perspective")?
    };
    if scales.is_empty() || perspectives.is_empty() {
        bail!("at least one scale and one perspective are required");
    }
    let img = load_png(&a.input)?;
    let tiles = tile_corpus(&img, a.tile, &scales, &perspectives)?;
    let paths = write_corpus(&tiles, Path::new(&a.out_dir))?;
    println!("{} tiles written to {}", paths.len(), a.out_dir.display());
    Ok(())
}

/// The error chain joined by `: `, skipping causes already quoted by the
/// message above them.
fn describe(err: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in err.chain() {
        let text = cause.to_string();
        if !out.contains(&text) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&text);
        }
    }
    out
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let backend = err.chain().any(|e| {
        e.downcast_ref::<BackendError>().is_some() || e.downcast_ref::<PipelineError>().is_some_and(PipelineError::is_backend)
    });
    if backend {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match &cli.command {
        Command::Mask(a) => run_mask(a),
        Command::Decompose(a) => run_decompose(a),
        Command::Restore(a) => run_restore(a),
        Command::Metrics(a) => run_metrics(a),
        Command::Sweep(a) => run_sweep_cmd(a),
        Command::TileCorpus(a) => run_corpus(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mural3m: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}
