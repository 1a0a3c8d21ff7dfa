//! Fitting and applying the full feature + network pipeline.
//!
//! Low-level features depend on one recording only and are computed once
//! ([`prepare`]). Everything learned from data (dictionary, normalisation,
//! network) is fitted from the training recordings passed to [`fit`].

use ndarray::{concatenate, Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::features::{
    final_features, kmeans_fit, low_level_features, zscore_apply_rows, zscore_fit, Dictionary,
    FrameConfig, KMeansConfig, NormStats,
};
use crate::ingest::{ClassMode, Recording, SleepStage};
use crate::network::{network_forward, predict_stages, LayerKind, LayerSpec, NetShape, Network};
use crate::training::{init_params, train, Sequence, TrainConfig, TrainHistory};

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub frame: FrameConfig,
    pub kmeans: KMeansConfig,
    pub layers: Vec<LayerSpec>,
    pub train: TrainConfig,
    pub class_mode: ClassMode,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            frame: FrameConfig::default(),
            kmeans: KMeansConfig::default(),
            layers: vec![LayerSpec {
                kind: LayerKind::Blstm,
                units: 400,
            }],
            train: TrainConfig::default(),
            class_mode: ClassMode::Five,
        }
    }
}

impl PipelineConfig {
    /// Network input is the low-level block plus one distance per word.
    pub fn input_dim(&self) -> usize {
        self.frame.dim() + self.kmeans.k
    }

    pub fn net_shape(&self) -> NetShape {
        NetShape {
            input_dim: self.input_dim(),
            layers: self.layers.clone(),
            num_classes: self.class_mode.num_classes(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.kmeans.k == 0 {
            return Err(Error::Config("dictionary size must be at least 1".into()));
        }
        self.net_shape().validate()?;
        self.train.validate()
    }
}

/// A recording reduced to its low-level feature rows and labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub subject: String,
    pub low: Array2<f64>,
    pub labels: Vec<SleepStage>,
}

impl Prepared {
    pub fn class_labels(&self, mode: ClassMode) -> Vec<usize> {
        self.labels.iter().map(|&s| mode.class_index(s)).collect()
    }
}

pub fn prepare(rec: &Recording, frame: &FrameConfig) -> Result<Prepared> {
    Ok(Prepared {
        subject: rec.subject_id().to_string(),
        low: low_level_features(rec, frame)?,
        labels: rec.labels().to_vec(),
    })
}

pub fn prepare_all(recs: &[Recording], frame: &FrameConfig) -> Result<Vec<Prepared>> {
    recs.iter().map(|r| prepare(r, frame)).collect()
}

/// Everything needed to label a new recording.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    pub class_mode: ClassMode,
    pub frame: FrameConfig,
    pub dictionary: Dictionary,
    pub norm: NormStats,
    pub net: Network,
}

impl FittedModel {
    /// Normalised network inputs for low-level rows.
    pub fn inputs(&self, low: ArrayView2<f64>) -> Result<Array2<f64>> {
        let f = final_features(low, &self.dictionary)?;
        zscore_apply_rows(f.view(), &self.norm)
    }

    /// Class index per epoch.
    pub fn predict(&self, p: &Prepared) -> Result<Vec<usize>> {
        let x = self.inputs(p.low.view())?;
        let tr = network_forward(&self.net, x.view())?;
        if tr.probs.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!("{}: non-finite output", p.subject)));
        }
        Ok(predict_stages(&tr.probs))
    }

    pub fn predict_recording(&self, rec: &Recording) -> Result<Vec<usize>> {
        self.predict(&prepare(rec, &self.frame)?)
    }
}

fn stack<'a>(recs: impl IntoIterator<Item = &'a Array2<f64>>) -> Result<Array2<f64>> {
    let views: Vec<ArrayView2<f64>> = recs.into_iter().map(|a| a.view()).collect();
    if views.is_empty() {
        return Err(Error::Validation("no recordings to fit on".into()));
    }
    concatenate(Axis(0), &views).map_err(|e| Error::Validation(format!("stacking features: {e}")))
}

pub fn fit_dictionary(train: &[&Prepared], cfg: &KMeansConfig) -> Result<Dictionary> {
    let rows = stack(train.iter().map(|p| &p.low))?;
    kmeans_fit(rows.view(), cfg)
}

/// Dictionary and normalisation statistics from training recordings only.
pub fn fit_features(train: &[&Prepared], cfg: &PipelineConfig) -> Result<(Dictionary, NormStats)> {
    let dictionary = fit_dictionary(train, &cfg.kmeans)?;
    let finals = train
        .iter()
        .map(|p| final_features(p.low.view(), &dictionary))
        .collect::<Result<Vec<_>>>()?;
    let norm = zscore_fit(stack(&finals)?.view())?;
    Ok((dictionary, norm))
}

fn sequences(model: &FittedModel, recs: &[&Prepared]) -> Result<Vec<Sequence>> {
    recs.iter()
        .map(|p| {
            Ok(Sequence {
                features: model.inputs(p.low.view())?,
                labels: p.class_labels(model.class_mode),
            })
        })
        .collect()
}

/// Fits dictionary, normalisation and network; `val` drives early stopping.
pub fn fit(train_set: &[&Prepared], val: &[&Prepared], cfg: &PipelineConfig) -> Result<(FittedModel, TrainHistory)> {
    fit_observed(train_set, val, cfg, |_, _| {})
}

/// [`fit`], handing the feature statistics to `inspect` before training.
pub fn fit_observed(
    train_set: &[&Prepared],
    val: &[&Prepared],
    cfg: &PipelineConfig,
    inspect: impl FnOnce(&Dictionary, &NormStats),
) -> Result<(FittedModel, TrainHistory)> {
    cfg.validate()?;
    let (dictionary, norm) = fit_features(train_set, cfg)?;
    inspect(&dictionary, &norm);
    let net = init_params(&cfg.net_shape(), cfg.train.seed, cfg.train.init_std)?;
    let mut model = FittedModel {
        class_mode: cfg.class_mode,
        frame: cfg.frame,
        dictionary,
        norm,
        net,
    };
    let tr = sequences(&model, train_set)?;
    let va = sequences(&model, val)?;
    let (net, history) = train(model.net.clone(), &tr, &va, &cfg.train)?;
    model.net = net;
    Ok((model, history))
}
