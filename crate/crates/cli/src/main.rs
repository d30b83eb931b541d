//! `lodnn`: command-line driver for the road-detection pipeline.
//!
//! Exit status is 0 on success, 1 for usage errors (bad flags, unknown or
//! malformed configuration keys) and 2 for data errors (missing or corrupt
//! files, incompatible checkpoints).

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lodnn::annotation::disagreement;
use lodnn::dataset::{annotate_example, synth_dataset, MANIFEST};
use lodnn::eval::{compare_mappings, metric_cells, pr_curve_text, roi_study, roi_table_csv, sweep, mapping_table_csv, METRIC_HEADER};
use lodnn::pointcloud::load_velodyne_bin;
use lodnn::trainer::{
    infer, load_labels, predict_examples, sidecar_path, train, ExampleId, LabelSource, LoadedModel, LOG_HEADER,
};
use lodnn::{ConfidenceMap, RunConfig, SplitManifest, TopViewLabel};

#[derive(Parser, Debug)]
#[command(name = "lodnn", version, about = "LIDAR-only road detection with a dilated fully convolutional network")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration file (flat `key = value` lines).
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable, applied in order.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Seed for every random choice of the run (sets train.seed).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. The default of 1 keeps runs bit-reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Dataset root.
    #[arg(long, global = true, env = "LODNN_DATA_ROOT", value_name = "DIR")]
    data_root: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rasterize a Velodyne scan into the top-view input tensor.
    Rasterize {
        #[arg(long)]
        input: PathBuf,
        /// Output tensor file.
        #[arg(long)]
        out: PathBuf,
        /// Also write one grayscale PNG per channel here.
        #[arg(long)]
        png_dir: Option<PathBuf>,
    },
    /// Transfer perspective annotations into top-view labels (PCP and IPM).
    Annotate {
        /// Example ids; defaults to every id in the manifest.
        #[arg(long = "id")]
        ids: Vec<String>,
    },
    /// Generate a synthetic dataset with exact ground truth.
    Synth {
        #[arg(long, default_value_t = 8)]
        train: usize,
        #[arg(long, default_value_t = 4)]
        val: usize,
        /// Output root; defaults to the data root.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a network on the manifest of the data root.
    Train {
        /// Output directory for checkpoints and the epoch log.
        #[arg(long)]
        out: PathBuf,
    },
    /// Road confidence map for one scan.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
        /// 16-bit confidence PNG.
        #[arg(long)]
        out: PathBuf,
        /// Optional blue-tinted overlay on the mean-elevation image.
        #[arg(long)]
        overlay: Option<PathBuf>,
    },
    /// Benchmark metrics over a split.
    Eval {
        #[command(flatten)]
        target: EvalTarget,
        /// Write the precision-recall curve here.
        #[arg(long)]
        curve: Option<PathBuf>,
    },
    /// Metrics for each x upper bound in eval.roi_bounds.
    RoiStudy {
        #[command(flatten)]
        target: EvalTarget,
    },
    /// Score one model against both label transfers.
    CompareMappings {
        #[command(flatten)]
        target: EvalTarget,
    },
    /// Print the context-module architecture with receptive fields.
    RfTable,
}

#[derive(Args, Debug)]
struct EvalTarget {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long, value_enum, default_value_t = Split::Val)]
    split: Split,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Split {
    Train,
    Val,
    All,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::All => "all",
        }
    }

    fn pick(self, m: &SplitManifest) -> Vec<ExampleId> {
        match self {
            Split::Train => m.train.clone(),
            Split::Val => m.val.clone(),
            Split::All => m.train.iter().chain(&m.val).cloned().collect(),
        }
    }
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Data(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Data(m) => f.write_str(m),
        }
    }
}

fn data<E: fmt::Display>(e: E) -> CliError {
    CliError::Data(e.to_string())
}

fn usage<E: fmt::Display>(e: E) -> CliError {
    CliError::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Data(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

impl Common {
    /// Config file (or `base` when none is given), then `--set`, then `--seed`.
    fn resolve(&self, base: Option<RunConfig>) -> Result<RunConfig, CliError> {
        let mut cfg = match (&self.config, base) {
            (Some(path), _) => RunConfig::load(path).map_err(usage)?,
            (None, Some(b)) => b,
            (None, None) => RunConfig::default(),
        };
        cfg.apply_overrides(self.set.iter().map(String::as_str)).map_err(usage)?;
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        cfg.grid.validate().map_err(usage)?;
        cfg.model.validate().map_err(usage)?;
        cfg.train.validate().map_err(usage)?;
        eprint!("# resolved configuration\n{}", cfg.to_text());
        Ok(cfg)
    }

    fn root(&self) -> Result<&Path, CliError> {
        self.data_root
            .as_deref()
            .ok_or_else(|| CliError::Usage("no data root: pass --data-root or set LODNN_DATA_ROOT".into()))
    }

    fn manifest(&self) -> Result<SplitManifest, CliError> {
        SplitManifest::load(&self.root()?.join(MANIFEST)).map_err(data)
    }

    fn model(&self, checkpoint: &Path) -> Result<(LoadedModel, RunConfig), CliError> {
        let model = LoadedModel::load(checkpoint).map_err(data)?;
        let cfg = self.resolve(Some(model.config.clone()))?;
        if cfg.input != model.config.input {
            return Err(CliError::Usage(format!(
                "grid.channels differs from the checkpoint's ({})",
                sidecar_path(checkpoint).display()
            )));
        }
        Ok((model, cfg))
    }
}

fn ensure_parent(path: &Path) -> Result<(), CliError> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => fs::create_dir_all(dir).map_err(|e| data(format!("{}: {e}", dir.display()))),
        None => Ok(()),
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| data(format!("{}: {e}", path.display())))
}

struct Scored {
    preds: Vec<(String, ConfidenceMap)>,
    cfg: RunConfig,
    examples: Vec<ExampleId>,
}

fn score(common: &Common, target: &EvalTarget) -> Result<Scored, CliError> {
    let (model, cfg) = common.model(&target.checkpoint)?;
    let examples = target.split.pick(&common.manifest()?);
    if examples.is_empty() {
        return Err(CliError::Data(format!("split {} is empty", target.split.name())));
    }
    let preds = common.pool()?.install(|| predict_examples(&model.net, &examples, common.root()?, &cfg).map_err(data))?;
    Ok(Scored { preds, cfg, examples })
}

impl Common {
    fn pool(&self) -> Result<rayon::ThreadPool, CliError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.max(1))
            .build()
            .map_err(usage)
    }
}

fn pairs<'a>(preds: &'a [(String, ConfidenceMap)], labels: &'a [(String, TopViewLabel)]) -> Vec<(&'a ConfidenceMap, &'a TopViewLabel)> {
    preds.iter().map(|p| &p.1).zip(labels.iter().map(|l| &l.1)).collect()
}

fn run(cli: Cli) -> Result<(), CliError> {
    let common = &cli.common;
    if common.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let mut out = std::io::stdout().lock();
    let mut say = |s: &str| {
        let _ = out.write_all(s.as_bytes());
    };
    match &cli.command {
        Command::RfTable => {
            let cfg = common.resolve(None)?;
            say(&cfg.model.architecture_table());
        }
        Command::Rasterize { input, out, png_dir } => {
            let cfg = common.resolve(None)?;
            let cloud = load_velodyne_bin(input).map_err(data)?;
            let t = cfg.input.rasterize(&cloud, &cfg.grid);
            ensure_parent(out)?;
            t.write(out).map_err(data)?;
            if let Some(dir) = png_dir {
                fs::create_dir_all(dir).map_err(data)?;
                for (c, name) in t.names.iter().enumerate() {
                    t.export_channel_png(c, dir.join(format!("{name}.png"))).map_err(data)?;
                }
            }
            say(&format!("{} points -> {} x {} x {}\n", cloud.len(), t.channels, t.height, t.width));
        }
        Command::Annotate { ids } => {
            let cfg = common.resolve(None)?;
            let root = common.root()?;
            let ids: Vec<String> = if ids.is_empty() {
                let m = common.manifest()?;
                m.train.iter().chain(&m.val).map(|e| e.id.clone()).collect()
            } else {
                ids.clone()
            };
            say("id,pcp_known,ipm_known,disagreeing\n");
            for id in ids {
                let t = annotate_example(root, &id, &cfg).map_err(data)?;
                let known = |l: &TopViewLabel| l.cells.len() - l.count(lodnn::Label::Unknown);
                say(&format!("{id},{},{},{}\n", known(&t.pcp), known(&t.ipm), disagreement(&t.pcp, &t.ipm)));
            }
        }
        Command::Synth { train, val, out } => {
            let cfg = common.resolve(None)?;
            let root = match out {
                Some(p) => p.as_path(),
                None => common.root()?,
            };
            let m = synth_dataset(root, *train, *val, cfg.train.seed, &cfg).map_err(data)?;
            say(&format!("wrote {} train and {} val scenes to {}\n", m.train.len(), m.val.len(), root.display()));
        }
        Command::Train { out } => {
            let cfg = common.resolve(None)?;
            let manifest = common.manifest()?;
            say(&format!("{LOG_HEADER}\n"));
            let outcome = train(&manifest, &cfg, common.root()?, out, common.threads, |e| say(&format!("{}\n", e.csv_row())))
                .map_err(data)?;
            println!(
                "best epoch {} val MaxF {:.6} -> {}",
                outcome.best_epoch,
                outcome.best_val_maxf,
                outcome.best_checkpoint.display()
            );
        }
        Command::Infer { checkpoint, input, out, overlay } => {
            let (model, cfg) = common.model(checkpoint)?;
            let cloud = load_velodyne_bin(input).map_err(data)?;
            let inf = infer(&model, &cloud, &cfg.grid).map_err(data)?;
            ensure_parent(out)?;
            inf.map.save_png(out).map_err(data)?;
            if let Some(path) = overlay {
                ensure_parent(path)?;
                let elevation = lodnn::raster::rasterize(&cloud, &cfg.grid);
                inf.map.save_overlay_png(Some(elevation.channel(2)), path).map_err(data)?;
            }
            say(&format!("inference {:.3} ms\n", inf.millis));
        }
        Command::Eval { target, curve } => {
            let s = score(common, target)?;
            let labels = load_labels(&s.examples, common.root()?, s.cfg.train.labels).map_err(data)?;
            let roi = s.cfg.eval_roi().map_err(usage)?;
            let sw = sweep(&pairs(&s.preds, &labels), roi).map_err(data)?;
            say(&format!("split,labels,{METRIC_HEADER}\n{},{},{}\n", target.split.name(), s.cfg.train.labels.as_str(), metric_cells(&sw)));
            if let Some(path) = curve {
                write_file(path, &pr_curve_text(&sw))?;
            }
        }
        Command::RoiStudy { target } => {
            let s = score(common, target)?;
            let labels = load_labels(&s.examples, common.root()?, s.cfg.train.labels).map_err(data)?;
            let rows = roi_study(&pairs(&s.preds, &labels), &s.cfg.grid, &s.cfg.eval.roi_bounds).map_err(usage)?;
            say(&roi_table_csv(&rows));
        }
        Command::CompareMappings { target } => {
            let s = score(common, target)?;
            let root = common.root()?;
            let pcp = load_labels(&s.examples, root, LabelSource::Pcp).map_err(data)?;
            let ipm = load_labels(&s.examples, root, LabelSource::Ipm).map_err(data)?;
            let cmp = compare_mappings(&s.preds, &pcp, &ipm, s.cfg.eval_roi().map_err(usage)?).map_err(data)?;
            say(&mapping_table_csv(target.split.name(), &cmp));
            let total: usize = cmp.disagreement.iter().map(|d| d.1).sum();
            say(&format!("# cells labeled differently by the two mappings: {total}\n"));
        }
    }
    Ok(())
}
