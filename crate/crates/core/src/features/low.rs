//! Per-epoch low-level features.
//!
//! Layout of one feature vector (sizes at the defaults):
//!
//! | block     | size | contents                                              |
//! |-----------|------|-------------------------------------------------------|
//! | `mean_rr` | 10   | mean RR of each epoch of the frame, frame order       |
//! | `freq`    | 120  | per frame epoch: `[d(5) | diff d(4) | diff^2 d(3)]`    |
//! | `act`     | 90   | current epoch only: x, y, z cepstra, 30 each          |
//!
//! `d` holds the leading DCT-II coefficients of the epoch's RR sequence,
//! zero-padded when the epoch has fewer samples than components.

use std::ops::Range;

use ndarray::{Array2, ArrayViewMut1};

use super::transform::{dct2, real_cepstrum};
use crate::error::{Error, Result};
use crate::ingest::{epoch_rr, impute_empty_epochs, AccSample, Recording, RrEpoch};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameConfig {
    pub frame_epochs: usize,
    pub freq_components: usize,
    pub cepstrum_components: usize,
}

impl Default for FrameConfig {
    fn default() -> Self {
        FrameConfig {
            frame_epochs: 10,
            freq_components: 5,
            cepstrum_components: 30,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frame_epochs < 1 {
            return Err(Error::Config("frame_epochs must be at least 1".into()));
        }
        if self.freq_components < 3 {
            return Err(Error::Config(
                "freq_components must be at least 3".into(),
            ));
        }
        if self.cepstrum_components < 1 {
            return Err(Error::Config(
                "cepstrum_components must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Length of one epoch's `[d | diff d | diff^2 d]` block.
    pub fn freq_block(&self) -> usize {
        3 * self.freq_components - 3
    }

    pub fn mean_rr_dim(&self) -> usize {
        self.frame_epochs
    }

    pub fn freq_dim(&self) -> usize {
        self.frame_epochs * self.freq_block()
    }

    pub fn act_dim(&self) -> usize {
        3 * self.cepstrum_components
    }

    pub fn dim(&self) -> usize {
        self.mean_rr_dim() + self.freq_dim() + self.act_dim()
    }
}

/// Frame of `frame_epochs` contiguous epochs around `t`.
///
/// The window starts `frame_epochs / 2` epochs before `t` (so `[t-5, t+4]`
/// for 10) and is shifted to stay inside the recording.
pub fn frame_indices(t: usize, total: usize, frame_epochs: usize) -> Result<Range<usize>> {
    if frame_epochs == 0 || total < frame_epochs {
        return Err(Error::Validation(format!(
            "recording has {total} epochs, fewer than the frame length {frame_epochs}"
        )));
    }
    if t >= total {
        return Err(Error::Validation(format!(
            "epoch {t} out of range for {total} epochs"
        )));
    }
    let start = t.saturating_sub(frame_epochs / 2).min(total - frame_epochs);
    Ok(start..start + frame_epochs)
}

/// `[d | diff d | diff^2 d]` from the first `n` DCT-II coefficients of the RR sequence.
pub fn dominant_freq_features(epoch: &RrEpoch, n: usize) -> Result<Vec<f64>> {
    if epoch.is_empty() {
        return Err(Error::Validation(
            "frequency features of an empty RR epoch".into(),
        ));
    }
    let mut d = dct2(&epoch.rr)?;
    d.resize(n, 0.0);
    let d1: Vec<f64> = d.windows(2).map(|w| w[1] - w[0]).collect();
    let d2: Vec<f64> = d1.windows(2).map(|w| w[1] - w[0]).collect();
    let mut out = d;
    out.extend(d1);
    out.extend(d2);
    Ok(out)
}

pub fn mean_rr_features<'a>(frame: impl IntoIterator<Item = &'a RrEpoch>) -> Result<Vec<f64>> {
    frame
        .into_iter()
        .map(|e| {
            if e.is_empty() {
                Err(Error::Validation("mean RR of an empty epoch".into()))
            } else {
                Ok(e.rr.iter().sum::<f64>() / e.rr.len() as f64)
            }
        })
        .collect()
}

/// Per axis: first difference, real cepstrum, leading `components` coefficients
/// (zero-padded if the epoch is shorter). Axes are concatenated x, y, z.
pub fn actigraphy_features(samples: &[AccSample], components: usize) -> Result<Vec<f64>> {
    if samples.len() < 3 {
        return Err(Error::Validation(format!(
            "actigraphy epoch has {} samples; at least 3 are needed",
            samples.len()
        )));
    }
    let axes: [fn(&AccSample) -> f64; 3] = [|s| s.x, |s| s.y, |s| s.z];
    let mut out = Vec::with_capacity(3 * components);
    for axis in axes {
        let diff: Vec<f64> = samples.windows(2).map(|w| axis(&w[1]) - axis(&w[0])).collect();
        let mut ceps = real_cepstrum(&diff)?;
        ceps.resize(components, 0.0);
        out.extend(ceps);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LowLevelFeature {
    pub mean_rr: Vec<f64>,
    pub freq: Vec<f64>,
    pub act_ceps: Vec<f64>,
}

impl LowLevelFeature {
    pub fn dim(&self) -> usize {
        self.mean_rr.len() + self.freq.len() + self.act_ceps.len()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim());
        v.extend_from_slice(&self.mean_rr);
        v.extend_from_slice(&self.freq);
        v.extend_from_slice(&self.act_ceps);
        v
    }
}

/// Epoched RR intervals (imputed) and actigraphy ranges for one recording.
#[derive(Debug, Clone)]
pub struct FeatureContext<'a> {
    rec: &'a Recording,
    rr: Vec<RrEpoch>,
    act: Vec<Range<usize>>,
}

impl<'a> FeatureContext<'a> {
    pub fn new(rec: &'a Recording) -> Result<Self> {
        let mut rr = epoch_rr(rec);
        impute_empty_epochs(&mut rr)?;
        Ok(FeatureContext {
            rec,
            rr,
            act: rec.actigraphy_epochs(),
        })
    }

    pub fn rr_epochs(&self) -> &[RrEpoch] {
        &self.rr
    }

    pub fn actigraphy_epoch(&self, t: usize) -> &'a [AccSample] {
        &self.rec.actigraphy().samples()[self.act[t].clone()]
    }

    pub fn num_epochs(&self) -> usize {
        self.rr.len()
    }
}

pub fn low_level_for_epoch(
    ctx: &FeatureContext<'_>,
    t: usize,
    cfg: &FrameConfig,
) -> Result<LowLevelFeature> {
    cfg.validate()?;
    let frame = frame_indices(t, ctx.num_epochs(), cfg.frame_epochs)?;
    let epochs = &ctx.rr[frame];
    let mean_rr = mean_rr_features(epochs)?;
    let mut freq = Vec::with_capacity(cfg.freq_dim());
    for e in epochs {
        freq.extend(dominant_freq_features(e, cfg.freq_components)?);
    }
    let act_ceps = actigraphy_features(ctx.actigraphy_epoch(t), cfg.cepstrum_components)?;
    Ok(LowLevelFeature {
        mean_rr,
        freq,
        act_ceps,
    })
}

/// Low-level features for every epoch of a recording, one row per epoch.
///
/// Same values as calling [`low_level_for_epoch`] per epoch, with the
/// per-epoch transforms computed once.
pub fn low_level_features(rec: &Recording, cfg: &FrameConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    let ctx = FeatureContext::new(rec)?;
    let total = ctx.num_epochs();
    let means = mean_rr_features(&ctx.rr)?;
    let blocks = ctx
        .rr
        .iter()
        .map(|e| dominant_freq_features(e, cfg.freq_components))
        .collect::<Result<Vec<_>>>()?;
    let fb = cfg.freq_block();
    let (m_off, f_off, a_off) = (0, cfg.mean_rr_dim(), cfg.mean_rr_dim() + cfg.freq_dim());

    let mut out = Array2::zeros((total, cfg.dim()));
    for t in 0..total {
        let frame = frame_indices(t, total, cfg.frame_epochs)?;
        let mut row: ArrayViewMut1<f64> = out.row_mut(t);
        for (j, k) in frame.enumerate() {
            row[m_off + j] = means[k];
            for (i, &v) in blocks[k].iter().enumerate() {
                row[f_off + j * fb + i] = v;
            }
        }
        let act = actigraphy_features(ctx.actigraphy_epoch(t), cfg.cepstrum_components)?;
        for (i, v) in act.into_iter().enumerate() {
            row[a_off + i] = v;
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!(
            "{}: non-finite low-level feature",
            rec.subject_id()
        )));
    }
    Ok(out)
}
