//! Dataset splits, the augmented epoch schedule and the training loop.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::annotation::{AnnotationError, TopViewLabel};
use crate::config::RunConfig;
use crate::eval::{sweep, ConfidenceMap, EvalError, ThresholdSweep};
use crate::model::{road_channel, Lodnn, ModelConfig, ModelError, Mode};
use crate::nn::{
    adam_step, read_checkpoint, write_checkpoint, AdamConfig, AdamState, Checkpoint, ClassTargets, NnError, Tape, Tensor,
    UnknownPolicy,
};
use crate::pointcloud::{load_velodyne_bin, Augmentation, PointCloud, PointCloudError};
use crate::raster::{GridSpec, InputChannels, TopViewTensor};

/// Validation examples drawn from each category.
pub const VAL_PER_CATEGORY: usize = 10;

pub const LOG_HEADER: &str = "epoch,train_loss,val_maxf,lr";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("example {id}: {reason}")]
    MissingExample { id: String, reason: String },
    #[error("non-finite loss at step {step}")]
    NonFiniteLoss { step: u64 },
    #[error("checkpoint incompatible with model: {0}")]
    Version(String),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Road scene category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Category {
    /// Urban marked.
    Um,
    /// Urban multiple marked lanes.
    Umm,
    /// Urban unmarked.
    Uu,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Um, Category::Umm, Category::Uu];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Um => "um",
            Category::Umm => "umm",
            Category::Uu => "uu",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = TrainError;

    fn from_str(s: &str) -> Result<Self, TrainError> {
        Category::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| TrainError::Config(format!("unknown category {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ExampleId {
    pub category: Category,
    pub id: String,
}

/// Train/validation membership. Text form: one `train|val <category> <id>`
/// line per example.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SplitManifest {
    pub train: Vec<ExampleId>,
    pub val: Vec<ExampleId>,
}

impl SplitManifest {
    pub fn parse(text: &str) -> Result<Self, TrainError> {
        let mut m = SplitManifest::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [split, cat, id] = parts[..] else {
                return Err(TrainError::Config(format!("manifest line {}: expected 3 fields", n + 1)));
            };
            let ex = ExampleId {
                category: cat.parse()?,
                id: id.to_string(),
            };
            match split {
                "train" => m.train.push(ex),
                "val" => m.val.push(ex),
                other => return Err(TrainError::Config(format!("manifest line {}: unknown split {other:?}", n + 1))),
            }
        }
        m.check_disjoint()?;
        Ok(m)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (split, list) in [("train", &self.train), ("val", &self.val)] {
            for e in list {
                out.push_str(&format!("{split} {} {}\n", e.category, e.id));
            }
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        Self::parse(&fs::read_to_string(path).map_err(io_err(path))?)
    }

    fn check_disjoint(&self) -> Result<(), TrainError> {
        let mut seen = std::collections::HashSet::new();
        for e in self.train.iter().chain(&self.val) {
            if !seen.insert(&e.id) {
                return Err(TrainError::Config(format!("example {} listed twice", e.id)));
            }
        }
        Ok(())
    }

    /// Examples in one augmented epoch.
    pub fn epoch_len(&self) -> usize {
        self.train.len() * Augmentation::COUNT
    }
}

/// Seeded choice of [`VAL_PER_CATEGORY`] validation ids per category; the
/// rest, in input order, are for training.
pub fn make_splits(ids: &BTreeMap<Category, Vec<String>>, seed: u64) -> Result<SplitManifest, TrainError> {
    let mut m = SplitManifest::default();
    for (&cat, list) in ids {
        if list.len() < VAL_PER_CATEGORY {
            return Err(TrainError::Config(format!(
                "category {cat} has {} examples, needs at least {VAL_PER_CATEGORY}",
                list.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(cat as u64 + 1);
        let mut order: Vec<usize> = (0..list.len()).collect();
        order.shuffle(&mut rng);
        let mut val: Vec<usize> = order[..VAL_PER_CATEGORY].to_vec();
        val.sort_unstable();
        for (i, id) in list.iter().enumerate() {
            let ex = ExampleId {
                category: cat,
                id: id.clone(),
            };
            if val.binary_search(&i).is_ok() {
                m.val.push(ex);
            } else {
                m.train.push(ex);
            }
        }
    }
    m.check_disjoint()?;
    Ok(m)
}

/// A permutation of every `(train index, augmentation)` pair, seeded by the
/// run seed and the epoch index.
pub fn epoch_plan(train_len: usize, epoch: usize, seed: u64, augment: bool) -> Vec<(usize, Augmentation)> {
    let augs = if augment {
        Augmentation::all()
    } else {
        vec![Augmentation::IDENTITY]
    };
    let mut plan: Vec<(usize, Augmentation)> = (0..train_len).flat_map(|i| augs.iter().map(move |&a| (i, a))).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0x1000 + epoch as u64);
    plan.shuffle(&mut rng);
    plan
}

/// Which top-view labels supervise training and validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelSource {
    /// Point-cloud projection labels in `pcp_topview/`.
    Pcp,
    /// Inverse perspective mapping labels in `ipm_topview/`.
    Ipm,
    /// Labels in `gt_topview/`.
    Exact,
}

impl LabelSource {
    pub fn dir(self) -> &'static str {
        match self {
            LabelSource::Pcp => "pcp_topview",
            LabelSource::Ipm => "ipm_topview",
            LabelSource::Exact => "gt_topview",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            LabelSource::Pcp => "pcp",
            LabelSource::Ipm => "ipm",
            LabelSource::Exact => "exact",
        }
    }
}

impl FromStr for LabelSource {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pcp" => Ok(LabelSource::Pcp),
            "ipm" => Ok(LabelSource::Ipm),
            "exact" => Ok(LabelSource::Exact),
            _ => Err(format!("unknown label source {s:?} (pcp, ipm, exact)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub initial_lr: f64,
    pub lr_decay_factor: f64,
    /// Epochs looked back when deciding whether validation improved.
    pub plateau_window: usize,
    pub dropout: f64,
    pub max_epochs: usize,
    /// Stop after this many epochs without a new best; 0 disables.
    pub patience: usize,
    pub seed: u64,
    /// Iterate the 42-fold augmented set rather than the raw examples.
    pub augment: bool,
    pub labels: LabelSource,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            initial_lr: 0.01,
            lr_decay_factor: 2.0,
            plateau_window: 1,
            dropout: 0.25,
            max_epochs: 30,
            patience: 0,
            seed: 0,
            augment: true,
            labels: LabelSource::Pcp,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: String| Err(TrainError::Config(m));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.initial_lr > 0.0) {
            return bad(format!("initial_lr {} must be positive", self.initial_lr));
        }
        if !(self.lr_decay_factor > 1.0) {
            return bad(format!("lr_decay_factor {} must exceed 1", self.lr_decay_factor));
        }
        if self.plateau_window == 0 {
            return bad("plateau_window must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.initial_lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }
}

/// Learning-rate schedule. An epoch stalls when its validation score is not
/// strictly greater than the previous epoch's; after `window` consecutive
/// stalled epochs the rate is divided by the decay factor and the count resets.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauSchedule {
    pub lr: f64,
    pub decay: f64,
    pub window: usize,
    previous: Option<f64>,
    stalled: usize,
    pub decays: u32,
}

impl PlateauSchedule {
    pub fn new(lr: f64, decay: f64, window: usize) -> Self {
        Self {
            lr,
            decay,
            window,
            previous: None,
            stalled: 0,
            decays: 0,
        }
    }

    /// Records an epoch score; returns whether the rate was decayed.
    pub fn observe(&mut self, score: f64) -> bool {
        match self.previous.replace(score) {
            Some(prev) if score <= prev => self.stalled += 1,
            _ => self.stalled = 0,
        }
        if self.stalled >= self.window {
            self.stalled = 0;
            self.lr /= self.decay;
            self.decays += 1;
            return true;
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_maxf: f64,
    pub lr: f64,
}

impl EpochLog {
    pub fn csv_row(&self) -> String {
        format!("{},{:.6},{:.6},{:e}", self.epoch, self.train_loss, self.val_maxf, self.lr)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_maxf: f64,
    pub best_checkpoint: PathBuf,
    pub steps: u64,
}

/// One example held in memory: its scan and its un-augmented label.
struct Cached {
    cloud: PointCloud,
    label: TopViewLabel,
}

fn load_example(root: &Path, ex: &ExampleId, labels: LabelSource) -> Result<Cached, TrainError> {
    let missing = |reason: String| TrainError::MissingExample {
        id: ex.id.clone(),
        reason,
    };
    let cloud = load_velodyne_bin(root.join("velodyne").join(format!("{}.bin", ex.id))).map_err(|e: PointCloudError| missing(e.to_string()))?;
    let label = TopViewLabel::load_png(root.join(labels.dir()).join(format!("{}.png", ex.id)))
        .map_err(|e: AnnotationError| missing(e.to_string()))?;
    Ok(Cached { cloud, label })
}

fn to_input(t: &TopViewTensor) -> Tensor<f32> {
    Tensor::from_vec(&[1, t.channels, t.height, t.width], t.data.clone()).expect("raster sized")
}

/// Road confidence of a single raster.
pub fn predict_map(net: &Lodnn<f32>, raster: &TopViewTensor) -> Result<ConfidenceMap, TrainError> {
    let probs = net.predict(&to_input(raster))?;
    Ok(ConfidenceMap::new(raster.width, raster.height, road_channel(&probs, 0))?)
}

/// Sidecar path holding the run configuration of a checkpoint.
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("cfg")
}

fn save(path: &Path, net: &Lodnn<f32>, adam: &AdamState<f32>, cfg: &RunConfig) -> Result<(), TrainError> {
    let ckpt = Checkpoint {
        params: net.params().clone(),
        adam: Some(adam.clone()),
    };
    write_checkpoint(path, &ckpt)?;
    let side = sidecar_path(path);
    fs::write(&side, cfg.to_text()).map_err(io_err(&side))
}

struct StepResult {
    loss_sum: f64,
    counted: usize,
    grads: Vec<Tensor<f32>>,
}

#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// Masked cross-entropy averaged over every counted pixel of the batch.
    pub loss: f64,
    pub counted: usize,
    /// One tensor per parameter, in store order.
    pub grads: Vec<Tensor<f32>>,
}

/// Loss and parameter gradients of one training batch. Example `k` uses
/// dropout step `base_step + k`. Examples run in parallel on the current
/// rayon pool; `None` when no pixel of the batch is labeled.
pub fn batch_gradients(
    net: &Lodnn<f32>,
    examples: &[(TopViewTensor, TopViewLabel)],
    seed: u64,
    base_step: u64,
) -> Result<Option<BatchGradients>, TrainError> {
    let results: Vec<StepResult> = examples
        .par_iter()
        .enumerate()
        .map(|(k, (raster, label))| {
            let targets = Arc::new(ClassTargets::from_labels(&[label], UnknownPolicy::Mask)?);
            let counted = targets.counted();
            let mut tape = Tape::new();
            let bound = net.bind(&mut tape);
            let x = tape.leaf(to_input(raster));
            let mode = Mode::Training {
                seed,
                step: base_step + k as u64,
            };
            let out = net.forward(&mut tape, &bound, x, mode)?;
            let loss = tape.cross_entropy(out.probs, &targets)?;
            let loss_value = f64::from(tape.value(loss).data()[0]);
            let mut grads = tape.backward(loss)?;
            Ok(StepResult {
                loss_sum: loss_value * counted as f64,
                counted,
                grads: bound.iter().map(|&v| grads.take(v)).collect(),
            })
        })
        .collect::<Result<_, TrainError>>()?;
    let counted: usize = results.iter().map(|r| r.counted).sum();
    if counted == 0 {
        return Ok(None);
    }
    let loss = results.iter().map(|r| r.loss_sum).sum::<f64>() / counted as f64;
    let mut total: Vec<Tensor<f32>> = net.params().iter().map(|(_, p)| Tensor::zeros(p.shape())).collect();
    for r in &results {
        let w = r.counted as f32 / counted as f32;
        for (t, g) in total.iter_mut().zip(&r.grads) {
            for (a, b) in t.data_mut().iter_mut().zip(g.data()) {
                *a += w * *b;
            }
        }
    }
    Ok(Some(BatchGradients {
        loss,
        counted,
        grads: total,
    }))
}

/// Runs the full training loop, writing `best.ldnn`, `last.ldnn` (each with
/// a `.cfg` sidecar) and `train_log.csv` into `out_dir`.
pub fn train(
    manifest: &SplitManifest,
    cfg: &RunConfig,
    data_root: &Path,
    out_dir: &Path,
    threads: usize,
    mut progress: impl FnMut(&EpochLog),
) -> Result<TrainOutcome, TrainError> {
    let tc = &cfg.train;
    tc.validate()?;
    if manifest.train.is_empty() {
        return Err(TrainError::Config("manifest has no training examples".into()));
    }
    if manifest.val.is_empty() {
        return Err(TrainError::Config("manifest has no validation examples".into()));
    }
    let grid = &cfg.grid;
    grid.validate().map_err(|e| TrainError::Config(e.to_string()))?;
    let channels = cfg.input;
    let mut model_cfg = cfg.model.clone();
    model_cfg.input_channels = channels.count();
    model_cfg.dropout = tc.dropout;
    let mut net = Lodnn::<f32>::build(model_cfg, tc.seed)?;
    let mut adam = AdamState::new(net.params(), tc.adam());
    let mut schedule = PlateauSchedule::new(tc.initial_lr, tc.lr_decay_factor, tc.plateau_window);

    let train_set: Vec<Cached> = manifest
        .train
        .iter()
        .map(|e| load_example(data_root, e, tc.labels))
        .collect::<Result<_, _>>()?;
    let val_set: Vec<(TopViewTensor, TopViewLabel)> = manifest
        .val
        .iter()
        .map(|e| load_example(data_root, e, tc.labels).map(|c| (channels.rasterize(&c.cloud, grid), c.label)))
        .collect::<Result<_, _>>()?;
    for c in train_set.iter().map(|c| &c.label).chain(val_set.iter().map(|v| &v.1)) {
        if (c.height, c.width) != (grid.height_px(), grid.width_px()) {
            return Err(TrainError::Config(format!(
                "label size {}x{} differs from grid {}x{}",
                c.height,
                c.width,
                grid.height_px(),
                grid.width_px()
            )));
        }
    }

    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| TrainError::Config(e.to_string()))?;
    let best_path = out_dir.join("best.ldnn");
    let mut log = Vec::new();
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut step = 0u64;
    let mut example_counter = 0u64;

    for epoch in 1..=tc.max_epochs {
        let plan = epoch_plan(train_set.len(), epoch, tc.seed, tc.augment);
        let lr_used = schedule.lr;
        adam.config.lr = lr_used;
        let (mut epoch_loss, mut batches) = (0.0f64, 0usize);
        for batch in plan.chunks(tc.batch_size) {
            let base = example_counter;
            example_counter += batch.len() as u64;
            let examples: Vec<(TopViewTensor, TopViewLabel)> = batch
                .iter()
                .map(|&(i, aug)| {
                    let ex = &train_set[i];
                    (channels.rasterize(&ex.cloud.augment(aug), grid), ex.label.augment(grid, aug))
                })
                .collect();
            let result = pool.install(|| batch_gradients(&net, &examples, tc.seed, base))?;
            step += 1;
            let Some(BatchGradients { loss, grads: total, .. }) = result else {
                continue;
            };
            if !loss.is_finite() {
                return Err(TrainError::NonFiniteLoss { step });
            }
            adam_step(net.params_mut(), &total, &mut adam).map_err(|e| match e {
                NnError::NonFiniteGradient(_) => TrainError::NonFiniteLoss { step },
                other => other.into(),
            })?;
            epoch_loss += loss;
            batches += 1;
        }

        let preds: Vec<ConfidenceMap> = pool.install(|| {
            val_set
                .par_iter()
                .map(|(raster, _)| predict_map(&net, raster))
                .collect::<Result<_, _>>()
        })?;
        let pairs: Vec<(&ConfidenceMap, &TopViewLabel)> = preds.iter().zip(val_set.iter().map(|v| &v.1)).collect();
        let val_maxf = sweep(&pairs, cfg.eval_roi()?)?.max_f;
        let entry = EpochLog {
            epoch,
            train_loss: if batches > 0 { epoch_loss / batches as f64 } else { 0.0 },
            val_maxf,
            lr: lr_used,
        };
        progress(&entry);
        log.push(entry);
        schedule.observe(val_maxf);
        if val_maxf > best.1 {
            best = (epoch, val_maxf);
            adam.config.lr = schedule.lr;
            save(&best_path, &net, &adam, cfg)?;
        }
        adam.config.lr = schedule.lr;
        if tc.patience > 0 && epoch - best.0 >= tc.patience {
            break;
        }
    }
    save(&out_dir.join("last.ldnn"), &net, &adam, cfg)?;
    let log_path = out_dir.join("train_log.csv");
    let mut text = format!("{LOG_HEADER}\n");
    for e in &log {
        text.push_str(&e.csv_row());
        text.push('\n');
    }
    fs::write(&log_path, text).map_err(io_err(&log_path))?;
    Ok(TrainOutcome {
        log,
        best_epoch: best.0,
        best_val_maxf: best.1,
        best_checkpoint: best_path,
        steps: step,
    })
}

/// A trained network together with the configuration it was trained under.
pub struct LoadedModel {
    pub net: Lodnn<f32>,
    pub config: RunConfig,
}

impl LoadedModel {
    pub fn load(checkpoint: &Path) -> Result<Self, TrainError> {
        let side = sidecar_path(checkpoint);
        let text = fs::read_to_string(&side).map_err(io_err(&side))?;
        let config = RunConfig::parse(&text).map_err(|e| TrainError::Version(format!("{}: {e}", side.display())))?;
        let ckpt = read_checkpoint(checkpoint)?;
        let mut model_cfg: ModelConfig = config.model.clone();
        model_cfg.input_channels = config.input.count();
        let net = Lodnn::from_params(model_cfg, ckpt.params).map_err(|e| match e {
            ModelError::ParamMismatch(m) => TrainError::Version(m),
            other => other.into(),
        })?;
        Ok(Self { net, config })
    }

    pub fn channels(&self) -> InputChannels {
        self.config.input
    }
}

#[derive(Debug, Clone)]
pub struct Inference {
    pub map: ConfidenceMap,
    pub millis: f64,
}

/// Rasterize, run the network in inference mode, and return the road
/// probability map with the wall-clock time spent.
pub fn infer(model: &LoadedModel, cloud: &PointCloud, spec: &GridSpec) -> Result<Inference, TrainError> {
    let start = Instant::now();
    let raster = model.channels().rasterize(cloud, spec);
    let map = predict_map(&model.net, &raster)?;
    let millis = (start.elapsed().as_secs_f64() * 1e3).max(f64::MIN_POSITIVE);
    Ok(Inference { map, millis })
}

/// Road confidence for each listed example, keyed by id.
pub fn predict_examples(
    net: &Lodnn<f32>,
    examples: &[ExampleId],
    data_root: &Path,
    cfg: &RunConfig,
) -> Result<Vec<(String, ConfidenceMap)>, TrainError> {
    examples
        .iter()
        .map(|ex| {
            let path = data_root.join("velodyne").join(format!("{}.bin", ex.id));
            let cloud = load_velodyne_bin(&path).map_err(|e| TrainError::MissingExample {
                id: ex.id.clone(),
                reason: e.to_string(),
            })?;
            let raster = cfg.input.rasterize(&cloud, &cfg.grid);
            Ok((ex.id.clone(), predict_map(net, &raster)?))
        })
        .collect()
}

/// Top-view labels of one source for each listed example, keyed by id.
pub fn load_labels(examples: &[ExampleId], data_root: &Path, source: LabelSource) -> Result<Vec<(String, TopViewLabel)>, TrainError> {
    examples
        .iter()
        .map(|ex| {
            let path = data_root.join(source.dir()).join(format!("{}.png", ex.id));
            let label = TopViewLabel::load_png(&path).map_err(|e| TrainError::MissingExample {
                id: ex.id.clone(),
                reason: e.to_string(),
            })?;
            Ok((ex.id.clone(), label))
        })
        .collect()
}

/// Runs `net` over the listed examples and pools one threshold sweep over
/// them, scored against the label source named in `cfg`.
pub fn evaluate_examples(
    net: &Lodnn<f32>,
    examples: &[ExampleId],
    data_root: &Path,
    cfg: &RunConfig,
) -> Result<ThresholdSweep, TrainError> {
    let maps = predict_examples(net, examples, data_root, cfg)?;
    let labels = load_labels(examples, data_root, cfg.train.labels)?;
    let pairs: Vec<(&ConfidenceMap, &TopViewLabel)> = maps.iter().map(|m| &m.1).zip(labels.iter().map(|l| &l.1)).collect();
    Ok(sweep(&pairs, cfg.eval_roi()?)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(counts: [usize; 3]) -> BTreeMap<Category, Vec<String>> {
        Category::ALL
            .into_iter()
            .zip(counts)
            .map(|(c, n)| (c, (0..n).map(|i| format!("{c}_{i:06}")).collect()))
            .collect()
    }

    #[test]
    fn kitti_sized_splits() {
        let m = make_splits(&ids([95, 96, 98]), 1).unwrap();
        let count = |c| m.train.iter().filter(|e| e.category == c).count();
        assert_eq!([count(Category::Um), count(Category::Umm), count(Category::Uu)], [85, 86, 88]);
        assert_eq!(m.val.len(), 30);
        assert_eq!(m.epoch_len(), 10_878);
        assert_eq!(m, make_splits(&ids([95, 96, 98]), 1).unwrap());
        assert_ne!(m, make_splits(&ids([95, 96, 98]), 2).unwrap());
    }

    #[test]
    fn small_category_rejected() {
        assert!(matches!(make_splits(&ids([9, 20, 20]), 0), Err(TrainError::Config(_))));
    }

    #[test]
    fn manifest_round_trip() {
        let m = make_splits(&ids([12, 10, 11]), 5).unwrap();
        assert_eq!(SplitManifest::parse(&m.to_text()).unwrap(), m);
        assert!(SplitManifest::parse("train um a\nval um a\n").is_err());
        assert!(SplitManifest::parse("test um a\n").is_err());
    }

    #[test]
    fn epoch_is_a_permutation() {
        let plan = epoch_plan(5, 3, 9, true);
        assert_eq!(plan.len(), 5 * 42);
        let mut sorted = plan.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), plan.len());
        assert_eq!(plan, epoch_plan(5, 3, 9, true));
        assert_ne!(plan, epoch_plan(5, 4, 9, true));
    }

    #[test]
    fn improving_scores_never_decay() {
        let mut s = PlateauSchedule::new(0.01, 2.0, 1);
        for v in [0.1, 0.2, 0.5, 0.51] {
            assert!(!s.observe(v));
        }
        assert_eq!(s.lr, 0.01);
        assert!(s.observe(0.51));
        assert!(s.observe(0.3));
        assert_eq!(s.lr, 0.01 / 4.0);
        assert_eq!(s.decays, 2);
    }

    #[test]
    fn wider_window_waits_for_consecutive_stalls() {
        let mut s = PlateauSchedule::new(0.01, 2.0, 3);
        let decayed: Vec<bool> = [0.5, 0.4, 0.4, 0.6, 0.5, 0.5, 0.5, 0.4]
            .into_iter()
            .map(|v| s.observe(v))
            .collect();
        assert_eq!(decayed, [false, false, false, false, false, false, true, false]);
        assert_eq!(s.lr, 0.005);
    }

    #[test]
    fn config_checks() {
        let bad = [
            TrainConfig { batch_size: 0, ..Default::default() },
            TrainConfig { initial_lr: 0.0, ..Default::default() },
            TrainConfig { lr_decay_factor: 1.0, ..Default::default() },
        ];
        for c in bad {
            assert!(c.validate().is_err());
        }
    }
}
