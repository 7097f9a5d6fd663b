use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use grid2matrix::dataset::{build_split, DatasetManifest, Split};
use grid2matrix::geometry::{area_dominance, classify_cells, type_distribution, PatchConfig};
use grid2matrix::harness::run::{RunInfo, RUN_FILE};
use grid2matrix::harness::{run_eval, HttpAdapter, HttpConfig, ModelAdapter, PromptRole, ReplayAdapter, RunConfig};
use grid2matrix::parser::parse_cascade;
use grid2matrix::probe::checkpoint::{self, CheckpointMeta};
use grid2matrix::probe::{evaluate, train_with_progress, SampleSource, TrainConfig};
use grid2matrix::prompt::{build_prompt, max_tokens, ColorMapping};
use grid2matrix::report::{load_aggregate, report_run};
use grid2matrix::GridSpec;

#[derive(Parser)]
#[command(name = "g2m", version, about = "Grid transcription benchmark toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate grid images and a JSON-lines manifest.
    Gen(GenArgs),
    /// Print the transcription prompt and its generation budget.
    Prompt {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        colors: usize,
    },
    /// Parse a model response (file or stdin) and print the outcome as JSON.
    Parse {
        #[arg(long)]
        h: usize,
        #[arg(long)]
        w: usize,
        #[arg(long)]
        file: Option<PathBuf>,
    },
    /// Classify grid cells against the patch lattice.
    Geometry {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 512)]
        image_size: u32,
        #[arg(long, default_value_t = 16)]
        patch: u32,
        /// Per-cell CSV instead of the text summary.
        #[arg(long)]
        csv: bool,
    },
    /// Train or evaluate a spatial probe on stored features.
    #[command(subcommand)]
    Probe(ProbeCommand),
    /// Run a zero-shot evaluation against a model adapter.
    Eval(EvalArgs),
    /// Render heatmaps and CSV summaries for a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 16)]
        patch: u32,
        /// Defaults to 32 patches per side.
        #[arg(long)]
        image_size: Option<u32>,
        /// Defaults to the run directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label; defaults to the adapter recorded in run.json.
        #[arg(long)]
        model: Option<String>,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    colors: usize,
    #[arg(long)]
    count: usize,
    /// train, val or test.
    #[arg(long)]
    split: Split,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 512)]
    image_size: u32,
    /// Overwrite an existing split.
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ProbeData {
    /// Directory of `<id>.g2mf` feature files.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    colors: usize,
    /// Leading non-spatial tokens to drop from token sequences.
    #[arg(long, default_value_t = 0)]
    drop_leading: usize,
}

#[derive(Subcommand)]
enum ProbeCommand {
    Train {
        #[command(flatten)]
        data: ProbeData,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Validation manifest used for checkpoint selection.
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        #[arg(long, default_value_t = 5000)]
        max_iters: usize,
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 1e-2)]
        lr: f64,
        #[arg(long, default_value_t = 512)]
        hidden: usize,
        #[arg(long, default_value_t = 100)]
        eval_every: usize,
        #[arg(long)]
        target_accuracy: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        /// Checkpoint directory.
        #[arg(long, default_value = "probe")]
        out: PathBuf,
    },
    Eval {
        #[command(flatten)]
        data: ProbeData,
        #[arg(long, default_value = "probe")]
        checkpoint: PathBuf,
        /// Directory for aggregate.json.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum AdapterKind {
    Http,
    Replay,
}

#[derive(Clone, Copy, ValueEnum)]
enum RoleArg {
    System,
    User,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum)]
    adapter: AdapterKind,
    /// API base URL; falls back to G2M_API_BASE.
    #[arg(long)]
    endpoint: Option<String>,
    /// Model name; falls back to G2M_MODEL.
    #[arg(long)]
    model: Option<String>,
    #[arg(long, value_enum, default_value = "user")]
    role: RoleArg,
    /// JSON-lines file of `{"id", "response"}` rows, or a previous records.jsonl.
    #[arg(long)]
    replay: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 4)]
    concurrency: usize,
    #[arg(long)]
    limit: Option<usize>,
}

fn gen(args: GenArgs) -> Result<()> {
    let spec = GridSpec::with_image_size(args.n, args.colors, args.image_size)?;
    let manifest = build_split(&spec, args.split, args.count, args.seed, &args.out, args.force)?;
    println!(
        "wrote {} {} samples to {}",
        manifest.records.len(),
        args.split,
        DatasetManifest::manifest_path(&args.out, args.split).display()
    );
    Ok(())
}

fn prompt(n: usize, colors: usize) -> Result<()> {
    let spec = GridSpec::new(n, colors)?;
    let mapping = ColorMapping::from_palette(&spec.active_palette(), colors)?;
    println!("{}", build_prompt(n, n, &mapping)?);
    println!("max_tokens: {}", max_tokens(n, n));
    Ok(())
}

fn parse(h: usize, w: usize, file: Option<PathBuf>) -> Result<()> {
    let text = match file {
        Some(path) => fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?,
        None => {
            let mut buf = String::new();
            std::io::stdin().read_to_string(&mut buf)?;
            buf
        }
    };
    println!("{}", serde_json::to_string(&parse_cascade(&text, h, w))?);
    Ok(())
}

fn geometry(n: usize, image_size: u32, patch: u32, csv: bool) -> Result<()> {
    let patch = PatchConfig::new(image_size, patch)?;
    let hist = type_distribution(n, patch)?;
    let cells = classify_cells(n, patch)?;
    if csv {
        println!("row,col,type,area_dominance");
        for (i, ty) in cells.iter().enumerate() {
            let (r, c) = (i / n, i % n);
            println!("{r},{c},{},{:.6}", ty.label(), area_dominance(r, c, n, patch)?);
        }
        return Ok(());
    }
    println!("n={n} image={} patch={}", patch.image_size, patch.patch_len);
    for (ty, count) in &hist.0 {
        let share = *count as f64 / hist.total() as f64 * 100.0;
        println!("{:8} {count:6} {share:6.2}%", ty.label());
    }
    for row in cells.chunks(n) {
        let labels: Vec<String> = row.iter().map(|t| t.label()).collect();
        println!("{}", labels.join(" "));
    }
    Ok(())
}

fn probe_source(data: &ProbeData, manifest: &Path) -> Result<SampleSource> {
    let manifest = DatasetManifest::load(manifest)?;
    Ok(SampleSource::from_manifest(&manifest, &data.features, data.drop_leading))
}

fn probe(cmd: ProbeCommand) -> Result<()> {
    match cmd {
        ProbeCommand::Train {
            data,
            seed,
            val_manifest,
            max_iters,
            batch,
            lr,
            hidden,
            eval_every,
            target_accuracy,
            patience,
            out,
        } => {
            let train_set = probe_source(&data, &data.manifest)?;
            let val_set = val_manifest.as_deref().map(|m| probe_source(&data, m)).transpose()?;
            let config = TrainConfig {
                lr,
                batch,
                max_iters,
                hidden,
                seed,
                eval_every,
                target_accuracy,
                patience,
                ..TrainConfig::default()
            };
            let (params, log) = train_with_progress(&config, &train_set, val_set.as_ref(), data.colors, |p, loss| {
                eprintln!("iter {:6}  loss {loss:.4}  val cell acc {:.4}", p.iteration, p.cell_accuracy);
            })?;
            let meta = CheckpointMeta::new(&params, data.n, data.drop_leading, &config, &log);
            let (weights, sidecar) = checkpoint::save(&out, &params, &meta)?;
            println!("saved {} and {}", weights.display(), sidecar.display());
        }
        ProbeCommand::Eval {
            data,
            checkpoint: dir,
            out,
        } => {
            let (params, meta) = checkpoint::load(&dir)?;
            if meta.classes != data.colors {
                bail!("checkpoint has {} classes, --colors is {}", meta.classes, data.colors);
            }
            let set = probe_source(&data, &data.manifest)?;
            let eval = evaluate(&params, &set, data.n, data.colors)?;
            fs::create_dir_all(&out)?;
            let path = out.join("aggregate.json");
            fs::write(&path, serde_json::to_string_pretty(&eval.aggregate)? + "\n")?;
            println!(
                "exact match {:.2}%  cell accuracy {:.2}%  ({})",
                eval.aggregate.exact_match * 100.0,
                eval.aggregate.cell_accuracy * 100.0,
                path.display()
            );
        }
    }
    Ok(())
}

fn eval(args: EvalArgs) -> Result<()> {
    let adapter: Box<dyn ModelAdapter> = match args.adapter {
        AdapterKind::Http => {
            let mut config = HttpConfig::from_env(args.endpoint.as_deref(), args.model.as_deref())?;
            config.role = match args.role {
                RoleArg::System => PromptRole::System,
                RoleArg::User => PromptRole::User,
            };
            Box::new(HttpAdapter::new(config)?)
        }
        AdapterKind::Replay => {
            let path = args.replay.context("--adapter replay needs --replay <path>")?;
            Box::new(ReplayAdapter::load(&path)?)
        }
    };
    let config = RunConfig {
        concurrency: args.concurrency,
        limit: args.limit,
    };
    let summary = run_eval(&args.manifest, adapter.as_ref(), &args.out, &config)?;
    let agg = &summary.aggregate;
    println!(
        "{} samples ({} new): exact match {:.2}%  cell accuracy {:.2}%  parse failures {}  transport failures {}",
        agg.count,
        summary.new_records,
        agg.exact_match * 100.0,
        agg.cell_accuracy * 100.0,
        agg.parse_failures,
        agg.transport_failures
    );
    Ok(())
}

fn report(run: PathBuf, patch: u32, image_size: Option<u32>, out: Option<PathBuf>, model: Option<String>) -> Result<()> {
    let patch = PatchConfig::new(image_size.unwrap_or(patch * 32), patch)?;
    let aggregate = load_aggregate(&run)?;
    let model = model.unwrap_or_else(|| {
        fs::read_to_string(run.join(RUN_FILE))
            .ok()
            .and_then(|t| serde_json::from_str::<RunInfo>(&t).ok())
            .map(|info| info.adapter)
            .unwrap_or_else(|| run.file_name().map_or("run".into(), |s| s.to_string_lossy().into_owned()))
    });
    let out = out.unwrap_or_else(|| run.clone());
    let files = report_run(&model, &aggregate, patch, &out)?;
    for path in [files.heatmap, files.summary, files.iou, files.interaction] {
        println!("{}", path.display());
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Gen(args) => gen(args),
        Command::Prompt { n, colors } => prompt(n, colors),
        Command::Parse { h, w, file } => parse(h, w, file),
        Command::Geometry {
            n,
            image_size,
            patch,
            csv,
        } => geometry(n, image_size, patch, csv),
        Command::Probe(cmd) => probe(cmd),
        Command::Eval(args) => eval(args),
        Command::Report {
            run,
            patch,
            image_size,
            out,
            model,
        } => report(run, patch, image_size, out, model),
    }
}
