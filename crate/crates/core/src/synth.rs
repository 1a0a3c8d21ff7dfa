//! Synthetic cohorts with known stage-dependent emission statistics.
//!
//! Stages follow a Markov chain started in W. Heart rate is sampled at
//! roughly 1 Hz from a per-stage normal distribution; actigraphy is a 32 Hz
//! Gaussian baseline with per-stage movement bursts. In the
//! [`Emission::PreviousStage`] variant every epoch is emitted from the stage
//! of the epoch before it, so the label of epoch `t` is only visible in the
//! signals of epoch `t + 1`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::ingest::{
    AccSample, ActigraphySeries, HeartRateSeries, HrSample, Recording, SleepStage,
    DEFAULT_ACTIGRAPHY_RATE, DEFAULT_EPOCH_SECONDS,
};

const HR_JITTER: f64 = 0.25;

/// Which stage drives the signals of an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Emission {
    CurrentStage,
    PreviousStage,
}

/// Generator parameters. Per-stage arrays are indexed W, N1, N2, N3, REM.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_recordings: usize,
    pub epochs_per_recording: usize,
    /// Row-stochastic stage transition matrix.
    pub transition: [[f64; 5]; 5],
    pub hr_mean: [f64; 5],
    pub hr_std: [f64; 5],
    /// Probability that an epoch contains a movement burst.
    pub burst_prob: [f64; 5],
    /// Burst standard deviation per axis, in g.
    pub burst_amp: [f64; 5],
    pub burst_seconds: f64,
    pub baseline_std: f64,
    /// Scales the spread of `hr_mean` around its average; 1 keeps it as given.
    pub difficulty: f64,
    pub emission: Emission,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_recordings: 16,
            epochs_per_recording: 240,
            transition: [
                [0.90, 0.05, 0.03, 0.00, 0.02],
                [0.03, 0.90, 0.05, 0.00, 0.02],
                [0.01, 0.02, 0.90, 0.05, 0.02],
                [0.01, 0.00, 0.09, 0.90, 0.00],
                [0.03, 0.03, 0.04, 0.00, 0.90],
            ],
            hr_mean: [80.0, 72.0, 64.0, 56.0, 68.0],
            hr_std: [4.0, 3.5, 3.0, 2.5, 3.5],
            burst_prob: [0.6, 0.1, 0.0, 0.0, 0.0],
            burst_amp: [0.5, 0.3, 0.0, 0.0, 0.0],
            burst_seconds: 5.0,
            baseline_std: 0.01,
            difficulty: 1.0,
            emission: Emission::CurrentStage,
            seed: 0,
        }
    }
}

impl SynthConfig {
    /// Stages drawn independently and uniformly; heart rate carries no
    /// stage information; each epoch's movement amplitude is set by the
    /// previous epoch's stage.
    pub fn context_only() -> Self {
        SynthConfig {
            transition: [[0.2; 5]; 5],
            hr_mean: [64.0; 5],
            hr_std: [3.0; 5],
            burst_prob: [1.0; 5],
            burst_amp: [0.0, 0.05, 0.2, 0.8, 3.2],
            burst_seconds: DEFAULT_EPOCH_SECONDS,
            emission: Emission::PreviousStage,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_recordings == 0 || self.epochs_per_recording == 0 {
            return bad("cohort needs at least one recording and one epoch".into());
        }
        for (i, row) in self.transition.iter().enumerate() {
            if row.iter().any(|&p| !(0.0..=1.0).contains(&p)) {
                return bad(format!("transition row {i} has an entry outside [0, 1]"));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return bad(format!("transition row {i} sums to {s}"));
            }
        }
        for s in 0..5 {
            if !(self.hr_mean[s] > 0.0) || !(self.hr_std[s] >= 0.0) {
                return bad(format!("invalid heart-rate parameters for stage {s}"));
            }
            if !(0.0..=1.0).contains(&self.burst_prob[s]) || !(self.burst_amp[s] >= 0.0) {
                return bad(format!("invalid burst parameters for stage {s}"));
            }
        }
        if !(self.difficulty > 0.0 && self.difficulty <= 1.0) {
            return bad(format!("difficulty must be in (0, 1], got {}", self.difficulty));
        }
        if !(self.baseline_std > 0.0) || !(self.burst_seconds > 0.0) {
            return bad("baseline_std and burst_seconds must be positive".into());
        }
        if self.burst_seconds > DEFAULT_EPOCH_SECONDS {
            return bad("burst_seconds exceeds the epoch length".into());
        }
        Ok(())
    }

    /// Heart-rate means after applying `difficulty`.
    pub fn effective_hr_mean(&self) -> [f64; 5] {
        let centre = self.hr_mean.iter().sum::<f64>() / 5.0;
        self.hr_mean.map(|m| centre + self.difficulty * (m - centre))
    }
}

/// Stationary distribution of a row-stochastic matrix by power iteration.
pub fn stationary_distribution(p: &[[f64; 5]; 5]) -> [f64; 5] {
    let mut pi = [0.2; 5];
    for _ in 0..100_000 {
        let mut next = [0.0; 5];
        for (i, &w) in pi.iter().enumerate() {
            for j in 0..5 {
                next[j] += w * p[i][j];
            }
        }
        let change: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        pi = next;
        if change < 1e-15 {
            break;
        }
    }
    pi
}

pub fn subject_name(i: usize, n: usize) -> String {
    let width = n.saturating_sub(1).to_string().len().max(2);
    format!("subj{i:0width$}")
}

pub fn generate_cohort(cfg: &SynthConfig) -> Result<Vec<Recording>> {
    cfg.validate()?;
    (0..cfg.n_recordings)
        .map(|i| generate_recording(cfg, i))
        .collect()
}

/// One recording; each index uses its own random stream.
pub fn generate_recording(cfg: &SynthConfig, index: usize) -> Result<Recording> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index as u64);
    let n = cfg.epochs_per_recording;

    let mut stages = Vec::with_capacity(n);
    let mut s = SleepStage::W;
    for t in 0..n {
        if t > 0 {
            s = next_stage(&cfg.transition[s.index()], &mut rng);
        }
        stages.push(s);
    }
    let emitting = |t: usize| match cfg.emission {
        Emission::CurrentStage => stages[t],
        Emission::PreviousStage if t == 0 => SleepStage::W,
        Emission::PreviousStage => stages[t - 1],
    };

    let epoch = DEFAULT_EPOCH_SECONDS;
    let means = cfg.effective_hr_mean();
    let mut hr = Vec::new();
    let beats_per_epoch = epoch as usize;
    for t in 0..n {
        let e = emitting(t).index();
        let dist = normal(means[e], cfg.hr_std[e])?;
        for k in 0..beats_per_epoch {
            let base = (t * beats_per_epoch + k) as f64 + 0.5;
            let time = base + rng.random_range(-HR_JITTER..HR_JITTER);
            let bpm = dist.sample(&mut rng).max(20.0);
            hr.push(HrSample { t: time, bpm });
        }
    }

    let rate = DEFAULT_ACTIGRAPHY_RATE;
    let per_epoch = (epoch * rate) as usize;
    let burst_len = ((cfg.burst_seconds * rate) as usize).clamp(1, per_epoch);
    let baseline = normal(0.0, cfg.baseline_std)?;
    let mut act = Vec::with_capacity(n * per_epoch);
    for t in 0..n {
        let e = emitting(t).index();
        let burst = if rng.random::<f64>() < cfg.burst_prob[e] && cfg.burst_amp[e] > 0.0 {
            let start = rng.random_range(0..=per_epoch - burst_len);
            Some((start..start + burst_len, normal(0.0, cfg.burst_amp[e])?))
        } else {
            None
        };
        for k in 0..per_epoch {
            let i = t * per_epoch + k;
            let mut v = [0.0; 3];
            for a in &mut v {
                *a = baseline.sample(&mut rng);
            }
            if let Some((range, amp)) = &burst {
                if range.contains(&k) {
                    for a in &mut v {
                        *a += amp.sample(&mut rng);
                    }
                }
            }
            act.push(AccSample {
                t: i as f64 / rate,
                x: v[0],
                y: v[1],
                z: 1.0 + v[2],
            });
        }
    }

    Recording::new(
        subject_name(index, cfg.n_recordings),
        HeartRateSeries::new(hr)?,
        ActigraphySeries::new(act, rate)?,
        stages,
        epoch,
    )
}

fn normal(mean: f64, std: f64) -> Result<Normal<f64>> {
    Normal::new(mean, std).map_err(|e| Error::Config(format!("normal({mean}, {std}): {e}")))
}

fn next_stage(row: &[f64; 5], rng: &mut ChaCha8Rng) -> SleepStage {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, &p) in row.iter().enumerate() {
        acc += p;
        if u < acc {
            return SleepStage::ALL[j];
        }
    }
    // rounding left u above the cumulative sum; take the last reachable stage
    let j = row.iter().rposition(|&p| p > 0.0).unwrap_or(0);
    SleepStage::ALL[j]
}
