use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::info;
use serde::Serialize;

use maglev::builder::{build_graph, ExtraModality, ViewMode};
use maglev::config::RunConfig;
use maglev::data::{
    generate_synthetic, load_graph, load_take_dir, save_graph, save_take, write_atomic, FeatureBlock,
};
use maglev::graph::{HeteroGraph, GRAPH_MAGIC};
use maglev::layers::{Model, CHECKPOINT_MAGIC};
use maglev::train::{cross_validate, evaluate_with_predictions, make_folds, train, SplitPlan};
use maglev::verify::{run_checks, VerifyOptions};
use maglev::{Error, Result};

const CONFIG_FILE: &str = "config.json";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Parser)]
#[command(name = "maglev", version, about = "Graph learning for keystep recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Views {
    EgoOnly,
    MultiView,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON); defaults apply to missing fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Replace an existing output directory.
    #[arg(long)]
    force: bool,
}

#[derive(clap::Args)]
struct TrainArgs {
    #[command(flatten)]
    common: Common,
    /// Directory of graph files.
    #[arg(long)]
    graphs: PathBuf,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Synth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        takes: Option<usize>,
    },
    /// Build graph files from a dataset directory.
    Build {
        #[command(flatten)]
        common: Common,
        /// Dataset directory written by `synth` or laid out the same way.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum)]
        views: Option<Views>,
        /// Comma-separated: depth, text, objects.
        #[arg(long, value_delimiter = ',')]
        modalities: Option<Vec<String>>,
    },
    /// Train one model, holding out one fold for validation.
    Train {
        #[command(flatten)]
        args: TrainArgs,
        /// Run five-fold cross-validation instead.
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Evaluate a checkpoint on the inference graphs of a graph directory.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        graphs: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
        /// Score every vision node of the full graphs instead.
        #[arg(long)]
        all_vision: bool,
    },
    /// Five-fold cross-validation.
    Crossval {
        #[command(flatten)]
        args: TrainArgs,
    },
    /// Run the built-in consistency checks.
    Verify {
        #[arg(long)]
        quick: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Describe a graph, checkpoint, feature file or run directory.
    Inspect { path: PathBuf },
}

#[derive(Serialize)]
struct FileEntry {
    bytes: u64,
    crc32: String,
}

#[derive(Serialize)]
struct Manifest {
    tool: String,
    command: String,
    files: BTreeMap<String, FileEntry>,
}

fn collect_files(root: &Path, dir: &Path, out: &mut BTreeMap<String, FileEntry>) -> Result<()> {
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            collect_files(root, &path, out)?;
        } else if path.file_name().is_some_and(|n| n != MANIFEST_FILE) {
            let bytes = fs::read(&path)?;
            let rel = path.strip_prefix(root).expect("inside root").to_string_lossy().replace('\\', "/");
            out.insert(
                rel,
                FileEntry {
                    bytes: bytes.len() as u64,
                    crc32: format!("{:08x}", crc32fast::hash(&bytes)),
                },
            );
        }
    }
    Ok(())
}

fn finish_run(out: &Path, command: &str, cfg: &RunConfig) -> Result<()> {
    write_atomic(&out.join(CONFIG_FILE), serde_json::to_string_pretty(cfg)?.as_bytes())?;
    let mut files = BTreeMap::new();
    collect_files(out, out, &mut files)?;
    let manifest = Manifest {
        tool: format!("maglev {}", env!("CARGO_PKG_VERSION")),
        command: command.into(),
        files,
    };
    write_atomic(&out.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?.as_bytes())
}

/// Refuses an output directory that holds data unless `force` is set, and
/// any output directory that contains one of the inputs.
fn check_out(out: &Path, force: bool, inputs: &[&Path]) -> Result<()> {
    if let Ok(o) = out.canonicalize() {
        for input in inputs {
            if input.canonicalize().is_ok_and(|i| i.starts_with(&o)) {
                return Err(Error::Config(format!(
                    "output directory {} contains the input {}",
                    out.display(),
                    input.display()
                )));
            }
        }
    }
    if !force && out.exists() && fs::read_dir(out)?.next().is_some() {
        return Err(Error::Config(format!(
            "{} exists and is not empty; pass --force to replace it",
            out.display()
        )));
    }
    Ok(())
}

fn prepare_out(out: &Path, force: bool) -> Result<()> {
    if out.exists() && fs::read_dir(out)?.next().is_some() {
        if !force {
            return Err(Error::Config(format!(
                "{} exists and is not empty; pass --force to replace it",
                out.display()
            )));
        }
        fs::remove_dir_all(out)?;
    }
    fs::create_dir_all(out)?;
    Ok(())
}

/// `--config`, else the `config.json` beside the input, else defaults.
fn load_config(explicit: Option<&Path>, input: Option<&Path>) -> Result<RunConfig> {
    if let Some(p) = explicit {
        return RunConfig::load(p);
    }
    if let Some(p) = input.map(|d| d.join(CONFIG_FILE)).filter(|p| p.exists()) {
        info!("using {}", p.display());
        return RunConfig::load(&p);
    }
    Ok(RunConfig::default())
}

fn graph_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let dir = if dir.join("graphs").is_dir() {
        dir.join("graphs")
    } else {
        dir.to_path_buf()
    };
    let mut files: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| Error::ingestion(&dir, "directory", e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "mglv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::ingestion(&dir, "graphs", "no .mglv files"));
    }
    Ok(files)
}

fn load_graphs(dir: &Path) -> Result<Vec<HeteroGraph>> {
    graph_files(dir)?.iter().map(|p| load_graph(p)).collect()
}

fn cmd_synth(common: &Common, seed: Option<u64>, takes: Option<usize>) -> Result<()> {
    let inputs: Vec<&Path> = common.config.iter().map(|p| p.as_path()).collect();
    check_out(&common.out, common.force, &inputs)?;
    let mut cfg = load_config(common.config.as_deref(), None)?;
    if let Some(s) = seed {
        cfg.synthetic.seed = s;
    }
    if let Some(t) = takes {
        cfg.synthetic.num_takes = t;
    }
    let cfg = cfg.aligned_with_synthetic();
    cfg.validate()?;
    let data = generate_synthetic(&cfg.synthetic)?;
    prepare_out(&common.out, common.force)?;
    for take in &data.takes {
        save_take(&common.out.join("takes"), take)?;
    }
    write_atomic(
        &common.out.join("params.json"),
        serde_json::to_string_pretty(&data.params)?.as_bytes(),
    )?;
    finish_run(&common.out, "synth", &cfg)?;
    println!("wrote {} takes to {}", data.takes.len(), common.out.display());
    Ok(())
}

fn parse_modalities(names: &[String]) -> Result<Vec<ExtraModality>> {
    names
        .iter()
        .filter(|n| !n.is_empty())
        .map(|n| match n.as_str() {
            "depth" => Ok(ExtraModality::Depth),
            "text" => Ok(ExtraModality::Text),
            "objects" => Ok(ExtraModality::Objects),
            other => Err(Error::Config(format!("unknown modality {other}"))),
        })
        .collect()
}

fn cmd_build(common: &Common, data: &Path, views: Option<Views>, modalities: Option<&[String]>) -> Result<()> {
    check_out(&common.out, common.force, &[data])?;
    let mut cfg = load_config(common.config.as_deref(), Some(data))?;
    if let Some(v) = views {
        cfg.build.views = match v {
            Views::EgoOnly => ViewMode::EgoOnly,
            Views::MultiView => ViewMode::MultiView,
        };
    }
    if let Some(m) = modalities {
        cfg.build.modalities = parse_modalities(m)?;
    }
    cfg.build.validate()?;
    let takes_dir = data.join("takes");
    let mut dirs: Vec<PathBuf> = fs::read_dir(&takes_dir)
        .map_err(|e| Error::ingestion(&takes_dir, "directory", e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    prepare_out(&common.out, common.force)?;
    let mut nodes = 0;
    for d in &dirs {
        let take = load_take_dir(d, &cfg.build.dims, cfg.build.num_classes)?;
        let g = build_graph(&take, &cfg.build)?;
        nodes += g.total_nodes();
        save_graph(&common.out.join("graphs").join(format!("{}.mglv", take.take_id)), &g)?;
    }
    finish_run(&common.out, "build", &cfg)?;
    println!("built {} graphs ({nodes} nodes) in {}", dirs.len(), common.out.display());
    Ok(())
}

fn train_config(args: &TrainArgs) -> Result<RunConfig> {
    let mut cfg = load_config(args.common.config.as_deref(), Some(&args.graphs))?;
    let t = &mut cfg.train;
    if let Some(v) = args.lr {
        t.lr = v;
    }
    if let Some(v) = args.epochs {
        t.max_epochs = v;
    }
    if let Some(v) = args.batch {
        t.batch_size_graphs = v;
    }
    if let Some(v) = args.seed {
        t.seed = v;
    }
    cfg.train.validate()?;
    Ok(cfg)
}

fn split_by_plan(graphs: Vec<HeteroGraph>, plan: &SplitPlan, fold: usize) -> (Vec<HeteroGraph>, Vec<HeteroGraph>) {
    graphs
        .into_iter()
        .partition(|g| !plan.folds[fold].iter().any(|id| id == g.take_id()))
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    check_out(&args.common.out, args.common.force, &[&args.graphs])?;
    let cfg = train_config(args)?;
    let graphs = load_graphs(&args.graphs)?;
    let spec = cfg.model.spec(&cfg.build)?;
    let ids: Vec<String> = graphs.iter().map(|g| g.take_id().to_string()).collect();
    let plan = make_folds(&ids, cfg.train.seed)?;
    let (tr, val) = split_by_plan(graphs, &plan, 0);
    info!("training on {} graphs, validating on {}", tr.len(), val.len());
    let mut model = Model::init(spec, cfg.model.init_seed)?;
    let history = train(&mut model, &tr, &val, &cfg.train)?;
    let (metrics, _) = evaluate_with_predictions(&model, &val, &cfg.train)?;
    let out = &args.common.out;
    prepare_out(out, args.common.force)?;
    write_atomic(&out.join("model.mgwt"), &model.to_bytes()?)?;
    write_atomic(&out.join("history.csv"), history.to_csv().as_bytes())?;
    write_atomic(&out.join("split.json"), serde_json::to_string_pretty(&plan)?.as_bytes())?;
    write_atomic(&out.join("val_metrics.json"), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    finish_run(out, "train", &cfg)?;
    println!(
        "best epoch {}; validation top-1 {:.4}, F1@0.1 {:.4}",
        history.best_epoch, metrics.top1, metrics.f1_at_threshold
    );
    Ok(())
}

fn cmd_crossval(args: &TrainArgs) -> Result<()> {
    check_out(&args.common.out, args.common.force, &[&args.graphs])?;
    let cfg = train_config(args)?;
    let graphs = load_graphs(&args.graphs)?;
    let spec = cfg.model.spec(&cfg.build)?;
    let ids: Vec<String> = graphs.iter().map(|g| g.take_id().to_string()).collect();
    let plan = make_folds(&ids, cfg.train.seed)?;
    let seed = cfg.model.init_seed;
    let report = cross_validate(|k| Model::init(spec.clone(), seed + k as u64), &graphs, &plan, &cfg.train)?;
    let out = &args.common.out;
    prepare_out(out, args.common.force)?;
    write_atomic(&out.join("crossval.json"), serde_json::to_string_pretty(&report)?.as_bytes())?;
    for f in &report.folds {
        write_atomic(&out.join(format!("fold{}_history.csv", f.fold)), f.history.to_csv().as_bytes())?;
    }
    finish_run(out, "crossval", &cfg)?;
    println!(
        "top-1 {:.4} ± {:.4}; F1@0.1 {:.4} ± {:.4}",
        report.mean_top1, report.sd_top1, report.mean_f1, report.sd_f1
    );
    Ok(())
}

fn cmd_eval(checkpoint: &Path, graphs_dir: &Path, out: &Path, force: bool, all_vision: bool) -> Result<()> {
    check_out(out, force, &[checkpoint, graphs_dir])?;
    let bytes = fs::read(checkpoint).map_err(|e| Error::ingestion(checkpoint, "file", e.to_string()))?;
    let model = Model::from_bytes(&bytes)?;
    let mut cfg = load_config(None, checkpoint.parent())?;
    cfg.train.ego_only_eval = !all_vision;
    let graphs = load_graphs(graphs_dir)?;
    let (metrics, preds) = evaluate_with_predictions(&model, &graphs, &cfg.train)?;
    prepare_out(out, force)?;
    write_atomic(&out.join("metrics.json"), serde_json::to_string_pretty(&metrics)?.as_bytes())?;
    let mut lines = String::new();
    for p in &preds {
        lines.push_str(&serde_json::to_string(p)?);
        lines.push('\n');
    }
    write_atomic(&out.join("predictions.jsonl"), lines.as_bytes())?;
    finish_run(out, "eval", &cfg)?;
    println!(
        "{} nodes: top-1 {:.4}, F1@0.1 {:.4}",
        metrics.num_nodes, metrics.top1, metrics.f1_at_threshold
    );
    Ok(())
}

fn cmd_verify(quick: bool, seed: Option<u64>) -> Result<bool> {
    let mut opts = if quick {
        VerifyOptions::quick()
    } else {
        VerifyOptions::full()
    };
    if let Some(s) = seed {
        opts.seed = s;
    }
    let results = run_checks(&opts);
    for r in &results {
        let mark = if r.passed { "PASS" } else { "FAIL" };
        println!("{mark} {:<22} {:>4} cases {:>7.2}s  {}", r.name, r.cases, r.seconds, r.detail);
    }
    Ok(results.iter().all(|r| r.passed))
}

fn cmd_inspect(path: &Path) -> Result<()> {
    if path.is_dir() {
        let m = path.join(MANIFEST_FILE);
        let text = fs::read_to_string(&m).map_err(|e| Error::ingestion(&m, "file", e.to_string()))?;
        println!("{text}");
        return Ok(());
    }
    let bytes = fs::read(path).map_err(|e| Error::ingestion(path, "file", e.to_string()))?;
    let json = match bytes.get(..4) {
        Some(m) if m == GRAPH_MAGIC => serde_json::to_value(HeteroGraph::from_bytes(&bytes)?.sidecar())?,
        Some(m) if m == CHECKPOINT_MAGIC => {
            let model = Model::from_bytes(&bytes)?;
            serde_json::json!({
                "format": "MGWT",
                "spec": model.spec(),
                "parameters": model.params().len(),
                "scalars": model.params().num_scalars(),
            })
        }
        Some(m) if m == maglev::data::FEATURE_MAGIC => {
            let b = FeatureBlock::from_bytes(&bytes)?;
            serde_json::json!({
                "format": "MGFT",
                "take_id": b.take_id,
                "view_id": b.view_id,
                "modality": b.modality,
                "rows": b.features.rows(),
                "dim": b.features.cols(),
                "windowed": b.centers.is_some(),
            })
        }
        _ => return Err(Error::Format(format!("{}: unrecognized file", path.display()))),
    };
    println!("{}", serde_json::to_string_pretty(&json)?);
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { common, seed, takes } => cmd_synth(&common, seed, takes)?,
        Command::Build {
            common,
            data,
            views,
            modalities,
        } => cmd_build(&common, &data, views, modalities.as_deref())?,
        Command::Train { args, folds } => match folds {
            None => cmd_train(&args)?,
            Some(5) => cmd_crossval(&args)?,
            Some(k) => return Err(Error::Config(format!("--folds supports 5, got {k}"))),
        },
        Command::Crossval { args } => cmd_crossval(&args)?,
        Command::Eval {
            checkpoint,
            graphs,
            out,
            force,
            all_vision,
        } => cmd_eval(&checkpoint, &graphs, &out, force, all_vision)?,
        Command::Verify { quick, seed } => return cmd_verify(quick, seed),
        Command::Inspect { path } => cmd_inspect(&path)?,
    }
    Ok(true)
}

fn configure_threads() {
    if let Some(n) = std::env::var("MAGLEV_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("MAGLEV_THREADS ignored: {e}");
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    configure_threads();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
