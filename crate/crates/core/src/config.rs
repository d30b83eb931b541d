//! Flat `key = value` run configuration with `grid.`, `model.`, `train.`,
//! `eval.` and `annotation.` sections.

use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::annotation::SectorParams;
use crate::eval::{EvalError, Roi, ROI_BOUNDS};
use crate::model::ModelConfig;
use crate::raster::{GridSpec, InputChannels};
use crate::trainer::{LabelSource, TrainConfig};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key {key:?}{hint}")]
    UnknownKey { key: String, hint: String },
    #[error("bad value {value:?} for {key}: {reason}")]
    BadValue { key: String, value: String, reason: String },
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("i/o on {path}: {reason}")]
    Io { path: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    /// Evaluate only rows at or below this x, meters.
    pub x_upper: Option<f64>,
    pub roi_bounds: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            x_upper: None,
            roi_bounds: ROI_BOUNDS.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationConfig {
    pub sector: SectorParams,
    /// Ground height for inverse perspective mapping, scanner frame.
    pub ground_height: f64,
}

impl Default for AnnotationConfig {
    fn default() -> Self {
        Self {
            sector: SectorParams::default(),
            ground_height: -1.73,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub grid: GridSpec,
    pub input: InputChannels,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub annotation: AnnotationConfig,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: Display,
{
    value.parse::<T>().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

const KEYS: &[&str] = &[
    "grid.x_min",
    "grid.x_max",
    "grid.y_min",
    "grid.y_max",
    "grid.cell_size",
    "grid.count_cap",
    "grid.z_min",
    "grid.z_max",
    "grid.std_max",
    "grid.channels",
    "model.encoder_maps",
    "model.context_maps",
    "model.decoder_maps",
    "train.batch_size",
    "train.initial_lr",
    "train.lr_decay_factor",
    "train.plateau_window",
    "train.dropout",
    "train.max_epochs",
    "train.patience",
    "train.seed",
    "train.augment",
    "train.labels",
    "train.adam_beta1",
    "train.adam_beta2",
    "train.adam_eps",
    "eval.x_upper",
    "eval.roi_bounds",
    "annotation.sector_width_deg",
    "annotation.max_gap",
    "annotation.step",
    "annotation.ground_height",
];

impl RunConfig {
    pub fn keys() -> &'static [&'static str] {
        KEYS
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        match key {
            "grid.x_min" => self.grid.x_min = parse(key, v)?,
            "grid.x_max" => self.grid.x_max = parse(key, v)?,
            "grid.y_min" => self.grid.y_min = parse(key, v)?,
            "grid.y_max" => self.grid.y_max = parse(key, v)?,
            "grid.cell_size" => self.grid.cell_size = parse(key, v)?,
            "grid.count_cap" => self.grid.norm.count_cap = parse(key, v)?,
            "grid.z_min" => self.grid.norm.z_min = parse(key, v)?,
            "grid.z_max" => self.grid.norm.z_max = parse(key, v)?,
            "grid.std_max" => self.grid.norm.std_max = parse(key, v)?,
            "grid.channels" => {
                self.input = match v {
                    "stats" => InputChannels::Statistics,
                    "occupancy" => InputChannels::Occupancy,
                    _ => {
                        return Err(ConfigError::BadValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected stats or occupancy".into(),
                        })
                    }
                }
            }
            "model.encoder_maps" => {
                let maps: usize = parse(key, v)?;
                self.model.encoder_maps = maps;
                self.model.context = crate::model::context_layers(self.model.context_maps, maps);
            }
            "model.context_maps" => {
                let maps: usize = parse(key, v)?;
                self.model.context_maps = maps;
                self.model.context = crate::model::context_layers(maps, self.model.encoder_maps);
            }
            "model.decoder_maps" => self.model.decoder_maps = parse(key, v)?,
            "train.batch_size" => self.train.batch_size = parse(key, v)?,
            "train.initial_lr" => self.train.initial_lr = parse(key, v)?,
            "train.lr_decay_factor" => self.train.lr_decay_factor = parse(key, v)?,
            "train.plateau_window" => self.train.plateau_window = parse(key, v)?,
            "train.dropout" => {
                self.train.dropout = parse(key, v)?;
                self.model.dropout = self.train.dropout;
            }
            "train.max_epochs" => self.train.max_epochs = parse(key, v)?,
            "train.patience" => self.train.patience = parse(key, v)?,
            "train.seed" => self.train.seed = parse(key, v)?,
            "train.augment" => self.train.augment = parse(key, v)?,
            "train.labels" => self.train.labels = parse(key, v)?,
            "train.adam_beta1" => self.train.beta1 = parse(key, v)?,
            "train.adam_beta2" => self.train.beta2 = parse(key, v)?,
            "train.adam_eps" => self.train.eps = parse(key, v)?,
            "eval.x_upper" => {
                self.eval.x_upper = match v {
                    "none" | "" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "eval.roi_bounds" => {
                self.eval.roi_bounds = v.split(',').map(|s| parse(key, s.trim())).collect::<Result<_, _>>()?;
            }
            "annotation.sector_width_deg" => self.annotation.sector.sector_width_deg = parse(key, v)?,
            "annotation.max_gap" => self.annotation.sector.max_gap = parse(key, v)?,
            "annotation.step" => self.annotation.sector.step = parse(key, v)?,
            "annotation.ground_height" => self.annotation.ground_height = parse(key, v)?,
            _ => {
                return Err(ConfigError::UnknownKey {
                    key: key.to_string(),
                    hint: suggest(key).map(|k| format!(" (did you mean {k}?)")).unwrap_or_default(),
                })
            }
        }
        Ok(())
    }

    /// Applies `key=value` overrides in order.
    pub fn apply_overrides<'a>(&mut self, pairs: impl IntoIterator<Item = &'a str>) -> Result<(), ConfigError> {
        for pair in pairs {
            let (k, v) = pair.split_once('=').ok_or(ConfigError::Syntax { line: 0 })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
            cfg.set(k.trim(), v)?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            reason: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let t = &self.train;
        Some(match key {
            "grid.x_min" => self.grid.x_min.to_string(),
            "grid.x_max" => self.grid.x_max.to_string(),
            "grid.y_min" => self.grid.y_min.to_string(),
            "grid.y_max" => self.grid.y_max.to_string(),
            "grid.cell_size" => self.grid.cell_size.to_string(),
            "grid.count_cap" => self.grid.norm.count_cap.to_string(),
            "grid.z_min" => self.grid.norm.z_min.to_string(),
            "grid.z_max" => self.grid.norm.z_max.to_string(),
            "grid.std_max" => self.grid.norm.std_max.to_string(),
            "grid.channels" => match self.input {
                InputChannels::Statistics => "stats".into(),
                InputChannels::Occupancy => "occupancy".into(),
            },
            "model.encoder_maps" => self.model.encoder_maps.to_string(),
            "model.context_maps" => self.model.context_maps.to_string(),
            "model.decoder_maps" => self.model.decoder_maps.to_string(),
            "train.batch_size" => t.batch_size.to_string(),
            "train.initial_lr" => t.initial_lr.to_string(),
            "train.lr_decay_factor" => t.lr_decay_factor.to_string(),
            "train.plateau_window" => t.plateau_window.to_string(),
            "train.dropout" => t.dropout.to_string(),
            "train.max_epochs" => t.max_epochs.to_string(),
            "train.patience" => t.patience.to_string(),
            "train.seed" => t.seed.to_string(),
            "train.augment" => t.augment.to_string(),
            "train.labels" => LabelSource::as_str(t.labels).into(),
            "train.adam_beta1" => t.beta1.to_string(),
            "train.adam_beta2" => t.beta2.to_string(),
            "train.adam_eps" => t.eps.to_string(),
            "eval.x_upper" => self.eval.x_upper.map_or("none".into(), |x| x.to_string()),
            "eval.roi_bounds" => self.eval.roi_bounds.iter().map(f64::to_string).collect::<Vec<_>>().join(","),
            "annotation.sector_width_deg" => self.annotation.sector.sector_width_deg.to_string(),
            "annotation.max_gap" => self.annotation.sector.max_gap.to_string(),
            "annotation.step" => self.annotation.sector.step.to_string(),
            "annotation.ground_height" => self.annotation.ground_height.to_string(),
            _ => return None,
        })
    }

    /// Every key with its current value, one per line.
    pub fn to_text(&self) -> String {
        KEYS.iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn eval_roi(&self) -> Result<Roi, EvalError> {
        match self.eval.x_upper {
            None => Ok(Roi::all()),
            Some(x) => Roi::x_upper(&self.grid, x),
        }
    }
}

fn suggest(key: &str) -> Option<&'static str> {
    let score = |k: &str| k.chars().zip(key.chars()).take_while(|(a, b)| a == b).count();
    KEYS.iter().copied().max_by_key(|k| score(k)).filter(|k| score(k) > key.find('.').unwrap_or(0) + 1)
}
