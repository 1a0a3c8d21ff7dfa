//! Run configuration: a flat `key = value` text file with `#` comments.
//!
//! Every key has a default; a file only needs the keys it changes. Unknown
//! keys and unparsable values are errors that name the offending key.
//!
//! | key | default |
//! |-----|---------|
//! | `frame_epochs` | 10 |
//! | `freq_components` | 5 |
//! | `cepstrum_components` | 30 |
//! | `dict_size` | 300 |
//! | `kmeans_max_iters` | 100 |
//! | `kmeans_tol` | 1e-6 |
//! | `hidden_type` | blstm |
//! | `layers` | 1 |
//! | `units` | 400 |
//! | `learning_rate` | 1e-6 |
//! | `init_std` | 0.1 |
//! | `weight_noise_std` | 0.005 |
//! | `max_passes` | 100 |
//! | `patience` | 10 |
//! | `cv_folds` | 8 |
//! | `cv_rounds` | 3 |
//! | `classes` | 5 |
//! | `seed` | 0 |
//! | `data_dir` | (unset) |
//! | `output_dir` | (unset) |
//! | `sweep_types` | mlp,lstm,blstm |
//! | `sweep_layers` | 1,2 |
//! | `sweep_units` | 100,200,400 |

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::eval::CvConfig;
use crate::features::{FrameConfig, KMeansConfig};
use crate::ingest::ClassMode;
use crate::network::{LayerKind, LayerSpec};
use crate::pipeline::PipelineConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub frame: FrameConfig,
    pub dict_size: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub hidden_type: LayerKind,
    pub layers: usize,
    pub units: usize,
    pub train: TrainConfig,
    pub cv_folds: usize,
    pub cv_rounds: usize,
    pub class_mode: ClassMode,
    pub seed: u64,
    pub data_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub sweep_types: Vec<LayerKind>,
    pub sweep_layers: Vec<usize>,
    pub sweep_units: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let km = KMeansConfig::default();
        RunConfig {
            frame: FrameConfig::default(),
            dict_size: km.k,
            kmeans_max_iters: km.max_iters,
            kmeans_tol: km.tol,
            hidden_type: LayerKind::Blstm,
            layers: 1,
            units: 400,
            train: TrainConfig::default(),
            cv_folds: 8,
            cv_rounds: 3,
            class_mode: ClassMode::Five,
            seed: 0,
            data_dir: None,
            output_dir: None,
            sweep_types: vec![LayerKind::Mlp, LayerKind::Lstm, LayerKind::Blstm],
            sweep_layers: vec![1, 2],
            sweep_units: vec![100, 200, 400],
        }
    }
}

pub const KEYS: &[&str] = &[
    "frame_epochs",
    "freq_components",
    "cepstrum_components",
    "dict_size",
    "kmeans_max_iters",
    "kmeans_tol",
    "hidden_type",
    "layers",
    "units",
    "learning_rate",
    "init_std",
    "weight_noise_std",
    "max_passes",
    "patience",
    "cv_folds",
    "cv_rounds",
    "classes",
    "seed",
    "data_dir",
    "output_dir",
    "sweep_types",
    "sweep_layers",
    "sweep_units",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for key `{key}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    let items = value
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| parse(key, v))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("key `{key}` needs at least one value")));
    }
    Ok(items)
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "frame_epochs" => self.frame.frame_epochs = parse(key, v)?,
            "freq_components" => self.frame.freq_components = parse(key, v)?,
            "cepstrum_components" => self.frame.cepstrum_components = parse(key, v)?,
            "dict_size" => self.dict_size = parse(key, v)?,
            "kmeans_max_iters" => self.kmeans_max_iters = parse(key, v)?,
            "kmeans_tol" => self.kmeans_tol = parse(key, v)?,
            "hidden_type" => self.hidden_type = parse(key, v)?,
            "layers" => self.layers = parse(key, v)?,
            "units" => self.units = parse(key, v)?,
            "learning_rate" => self.train.learning_rate = parse(key, v)?,
            "init_std" => self.train.init_std = parse(key, v)?,
            "weight_noise_std" => self.train.weight_noise_std = parse(key, v)?,
            "max_passes" => self.train.max_passes = parse(key, v)?,
            "patience" => self.train.patience = parse(key, v)?,
            "cv_folds" => self.cv_folds = parse(key, v)?,
            "cv_rounds" => self.cv_rounds = parse(key, v)?,
            "classes" => {
                let m: usize = parse(key, v)?;
                self.class_mode = ClassMode::from_count(m)
                    .ok_or_else(|| Error::Config(format!("key `classes` must be 4 or 5, got {m}")))?;
            }
            "seed" => self.seed = parse(key, v)?,
            "data_dir" => self.data_dir = Some(PathBuf::from(v)),
            "output_dir" => self.output_dir = Some(PathBuf::from(v)),
            "sweep_types" => self.sweep_types = parse_list(key, v)?,
            "sweep_layers" => self.sweep_layers = parse_list(key, v)?,
            "sweep_units" => self.sweep_units = parse_list(key, v)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1))
            })?;
            let key = key.trim();
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, strip_prefix(e))))?;
        }
        self.validate()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = RunConfig::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=4).contains(&self.layers) {
            return Err(Error::Config(format!("key `layers` must be 1 to 4, got {}", self.layers)));
        }
        if self.units == 0 {
            return Err(Error::Config("key `units` must be positive".into()));
        }
        if self.cv_folds < 3 || self.cv_rounds == 0 {
            return Err(Error::Config("keys `cv_folds` >= 3 and `cv_rounds` >= 1 required".into()));
        }
        if self.sweep_layers.iter().any(|l| !(1..=4).contains(l)) || self.sweep_units.contains(&0) {
            return Err(Error::Config("key `sweep_layers` must be 1 to 4 and `sweep_units` positive".into()));
        }
        self.pipeline().validate()
    }

    pub fn kmeans(&self) -> KMeansConfig {
        KMeansConfig {
            k: self.dict_size,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed: self.seed,
        }
    }

    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig {
            frame: self.frame,
            kmeans: self.kmeans(),
            layers: vec![
                LayerSpec {
                    kind: self.hidden_type,
                    units: self.units,
                };
                self.layers
            ],
            train: TrainConfig {
                seed: self.seed,
                ..self.train
            },
            class_mode: self.class_mode,
        }
    }

    pub fn cv(&self) -> CvConfig {
        CvConfig {
            folds: self.cv_folds,
            rounds: self.cv_rounds,
            seed: self.seed,
        }
    }

    /// Every key with its current value, in a form [`RunConfig::from_text`] reads back.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for &key in KEYS {
            let value = match key {
                "frame_epochs" => self.frame.frame_epochs.to_string(),
                "freq_components" => self.frame.freq_components.to_string(),
                "cepstrum_components" => self.frame.cepstrum_components.to_string(),
                "dict_size" => self.dict_size.to_string(),
                "kmeans_max_iters" => self.kmeans_max_iters.to_string(),
                "kmeans_tol" => self.kmeans_tol.to_string(),
                "hidden_type" => self.hidden_type.to_string(),
                "layers" => self.layers.to_string(),
                "units" => self.units.to_string(),
                "learning_rate" => self.train.learning_rate.to_string(),
                "init_std" => self.train.init_std.to_string(),
                "weight_noise_std" => self.train.weight_noise_std.to_string(),
                "max_passes" => self.train.max_passes.to_string(),
                "patience" => self.train.patience.to_string(),
                "cv_folds" => self.cv_folds.to_string(),
                "cv_rounds" => self.cv_rounds.to_string(),
                "classes" => self.class_mode.num_classes().to_string(),
                "seed" => self.seed.to_string(),
                "data_dir" | "output_dir" => {
                    let p = if key == "data_dir" { &self.data_dir } else { &self.output_dir };
                    match p {
                        Some(p) => p.display().to_string(),
                        None => continue,
                    }
                }
                "sweep_types" => join(&self.sweep_types),
                "sweep_layers" => join(&self.sweep_layers),
                "sweep_units" => join(&self.sweep_units),
                _ => unreachable!(),
            };
            let _ = writeln!(out, "{key} = {value}");
        }
        out
    }
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}
