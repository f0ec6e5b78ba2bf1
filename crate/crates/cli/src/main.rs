use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use flowforge::hyper::{Config, Group, SpaceFile};
use flowforge::io::{flo_dir, generate_dataset, write_png, AugmentMode, Dataset};
use flowforge::search::{run_search, Evaluator, ExternalEvaluator, HistogramEvaluator, SearchConfig};
use flowforge::stats::{colorize_flow, try_motion_histogram, Histogram, ReportEntry, StatsReport};
use flowforge::{Error, Image, Raster};

#[derive(Parser)]
#[command(name = "flowforge", version, about = "Synthetic optical-flow data generator and hyperparameter search")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a dataset of frame pairs and ground-truth flow.
    Generate(GenerateArgs),
    /// Tune hyperparameters with subgroup CMA-ES.
    Search(SearchArgs),
    /// Motion-magnitude histograms of datasets or .flo directories.
    Stats(StatsArgs),
    /// Side-by-side frames and colorized flow of one sample.
    Preview(PreviewArgs),
}

#[derive(Args)]
struct ConfigArg {
    /// Config file; built-in defaults when absent.
    #[arg(long, env = "FLOWFORGE_CONFIG")]
    config: Option<PathBuf>,
}

impl ConfigArg {
    fn load(&self) -> anyhow::Result<Config> {
        match &self.config {
            Some(p) => Config::load(p).with_context(|| format!("loading config {}", p.display())),
            None => Ok(Config::default()),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum AugmentArg {
    Off,
    Materialize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    config: ConfigArg,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "off")]
    augment: AugmentArg,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    config: ConfigArg,
    /// TOML file of `[[dim]]` search-space overrides.
    #[arg(long)]
    space: Option<PathBuf>,
    /// `dir:PATH` (dataset or .flo directory used as histogram target),
    /// `cmd:COMMAND` (external evaluator) or a bare directory.
    #[arg(long)]
    target: Option<String>,
    #[arg(long, default_value_t = 8)]
    iterations: usize,
    #[arg(long, default_value_t = 8)]
    population: usize,
    #[arg(long, default_value_t = 5)]
    generations: usize,
    #[arg(long, default_value_t = 0.3)]
    sigma0: f64,
    /// Samples rendered per histogram evaluation.
    #[arg(long, default_value_t = 8)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Comma-separated subgroup cycle.
    #[arg(long, value_delimiter = ',', default_values = ["motion", "mask", "effects", "augment", "scene"])]
    schedule: Vec<String>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Continue the run stored in this directory.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    dataset: Vec<PathBuf>,
    #[arg(long = "flo-dir")]
    flo_dir: Vec<PathBuf>,
    /// Report path (JSON); the bar chart goes next to it as PNG.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PreviewArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    index: usize,
    #[arg(long)]
    out: PathBuf,
    /// Flow magnitude at full saturation; 99th percentile when absent.
    #[arg(long)]
    max_mag: Option<f64>,
}

fn thread_pool(workers: Option<usize>) -> anyhow::Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers {
        if w == 0 {
            bail!("--workers must be at least 1");
        }
        b = b.num_threads(w);
    }
    Ok(b.build()?)
}

fn generate(a: &GenerateArgs) -> anyhow::Result<()> {
    let config = a.config.load()?;
    let pool = thread_pool(a.workers)?;
    let appearance = config.appearance.load_pool(config.hyper.resolution)?;
    let mode = match a.augment {
        AugmentArg::Off => AugmentMode::Off,
        AugmentArg::Materialize => AugmentMode::Materialize,
    };
    let done = AtomicUsize::new(0);
    let progress = |i: usize| {
        let k = done.fetch_add(1, Ordering::SeqCst) + 1;
        eprintln!("[{k}/{}] sample {i}", a.count);
    };
    let m = pool.install(|| generate_dataset(&a.out, &config, &appearance, a.seed, a.count, mode, &progress))?;
    eprintln!("wrote {} samples to {} (hyperparameter hash {})", m.count, a.out.display(), m.hyper_hash);
    Ok(())
}

fn parse_group(s: &str) -> anyhow::Result<Group> {
    Group::ALL.into_iter().find(|g| g.to_string() == s).ok_or_else(|| anyhow!("unknown subgroup `{s}`"))
}

/// Histogram of a dataset directory (with manifest) or a directory of .flo files.
fn directory_histogram(dir: &Path) -> anyhow::Result<(Histogram, usize)> {
    if dir.join(flowforge::io::MANIFEST_FILE).is_file() {
        let ds = Dataset::open(dir, None)?;
        Ok((try_motion_histogram(ds.flows())?, ds.len()))
    } else {
        let n = flowforge::io::list_files(dir, &["flo"])?.len();
        Ok((try_motion_histogram(flo_dir(dir)?).with_context(|| format!("no .flo files in {}", dir.display()))?, n))
    }
}

fn search(a: &SearchArgs) -> anyhow::Result<()> {
    let out = a.out.clone().or_else(|| a.resume.clone()).ok_or_else(|| anyhow!("--out or --resume is required"))?;
    let history = out.join("history.jsonl");
    if let Some(r) = &a.resume {
        if !r.join("history.jsonl").is_file() {
            bail!("nothing to resume: {} has no history.jsonl", r.display());
        }
        if r != &out {
            std::fs::create_dir_all(&out)?;
            std::fs::copy(r.join("history.jsonl"), &history)?;
        }
    } else if history.exists() {
        bail!("{} already holds a search; pass --resume to continue it", out.display());
    }

    let mut config = a.config.load()?;
    if let Some(p) = &a.space {
        config.space.extend(SpaceFile::load(p)?);
    }
    let space = config.search_space()?;
    let cfg = SearchConfig {
        iterations: a.iterations,
        population: a.population,
        sigma0: a.sigma0,
        generations_per_iteration: a.generations,
        subgroup_schedule: a.schedule.iter().map(|s| parse_group(s)).collect::<anyhow::Result<_>>()?,
        eval_budget: a.budget,
        seed: a.seed,
    };
    cfg.check()?;
    let target = a.target.as_deref().ok_or_else(|| anyhow!("--target is required"))?;
    std::fs::create_dir_all(&out)?;

    let evaluator: Box<dyn Evaluator> = if let Some(cmd) = target.strip_prefix("cmd:") {
        Box::new(ExternalEvaluator::new(cmd, out.join("scratch"), config.appearance.clone())?)
    } else {
        let dir = Path::new(target.strip_prefix("dir:").unwrap_or(target));
        let (hist, _) = directory_histogram(dir)?;
        let pool = Arc::new(config.appearance.load_pool(config.hyper.resolution)?);
        Box::new(HistogramEvaluator::new(pool, hist, a.seed)?)
    };

    let tp = thread_pool(a.workers.or(Some(a.population)))?;
    let res = tp.install(|| run_search(&cfg, &space, &config.hyper, evaluator.as_ref(), Some(&history)))?;
    let best = Config { hyper: res.best.clone(), ..config.clone() };
    best.save(&out.join("best.toml"))?;
    let summary = serde_json::json!({
        "initial_score": finite(res.initial_score),
        "best_score": finite(res.best_score),
        "best_hash": res.best.hash(),
        "evaluations": res.evaluations,
    });
    flowforge::io::write_atomic(&out.join("summary.json"), serde_json::to_string_pretty(&summary)?.as_bytes())?;
    eprintln!(
        "best score {} (initial {}), {} new evaluations; results in {}",
        res.best_score,
        res.initial_score,
        res.evaluations,
        out.display()
    );
    Ok(())
}

fn finite(v: f64) -> serde_json::Value {
    if v.is_finite() {
        v.into()
    } else {
        serde_json::Value::Null
    }
}

fn stats(a: &StatsArgs) -> anyhow::Result<()> {
    if a.dataset.is_empty() && a.flo_dir.is_empty() {
        bail!("give at least one --dataset or --flo-dir");
    }
    let mut report = StatsReport::default();
    for dir in &a.dataset {
        let ds = Dataset::open(dir, None)?;
        let augment = match ds.manifest.augment {
            AugmentMode::Off => "raw",
            AugmentMode::Materialize => "augmented",
        };
        let label = format!("{} ({} samples, {augment})", dir.display(), ds.len());
        report.entries.push(ReportEntry::new(label, ds.len(), try_motion_histogram(ds.flows())?));
    }
    for dir in &a.flo_dir {
        let n = flowforge::io::list_files(dir, &["flo"])?.len();
        let h = try_motion_histogram(flo_dir(dir)?).with_context(|| format!("no .flo files in {}", dir.display()))?;
        report.entries.push(ReportEntry::new(dir.display().to_string(), n, h));
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    flowforge::io::write_atomic(&a.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let chart = a.out.with_extension("png");
    write_png(&chart, &report.bar_chart(200))?;
    for e in &report.entries {
        let above: f64 = e.histogram.masses[1..].iter().sum();
        println!("{}: [0,1) mass {:.4}, >=1 px mass {:.4}", e.label, e.histogram.masses[0], above);
    }
    eprintln!("report {}, chart {}", a.out.display(), chart.display());
    Ok(())
}

fn side_by_side(images: &[&Image]) -> Image {
    let h = images.iter().map(|i| i.height()).max().unwrap_or(0);
    let w: usize = images.iter().map(|i| i.width()).sum();
    Raster::from_fn(w, h, |x, y| {
        let mut x = x;
        for img in images {
            if x < img.width() {
                return if y < img.height() { img.get(x, y) } else { [0.0; 3] };
            }
            x -= img.width();
        }
        [0.0; 3]
    })
}

fn preview(a: &PreviewArgs) -> anyhow::Result<()> {
    let ds = Dataset::open(&a.dataset, None)?;
    if a.index >= ds.len() {
        bail!("index {} out of range: dataset has {} samples", a.index, ds.len());
    }
    let s = ds.sample(a.index)?;
    let flow = colorize_flow(&s.flow, a.max_mag)?;
    write_png(&a.out, &side_by_side(&[&s.image1, &s.image2, &flow]))?;
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::AllCandidatesFailed { .. } | Error::EvaluatorUnavailable(_)) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.command {
        Command::Generate(a) => generate(a),
        Command::Search(a) => search(a),
        Command::Stats(a) => stats(a),
        Command::Preview(a) => preview(a),
    };
    match r {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
