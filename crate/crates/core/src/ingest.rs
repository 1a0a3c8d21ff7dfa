//! Recordings: parsing, validation, epoching, RR conversion and scorer consensus.
//!
//! File formats (all CSV with a header row):
//!
//! * heart rate: `t_seconds,bpm`
//! * actigraphy: `t_seconds,x_g,y_g,z_g`
//! * labels: `epoch_index,stage`, or `epoch_index,stage_1,...,stage_s` for
//!   several independent scorers (merged with [`merge_scorer_labels`]).
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces every sample bit for bit.
//!
//! A cohort directory holds one sub-directory per subject, named by the
//! subject id, each containing `hr.csv`, `act.csv` and `labels.csv`.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_EPOCH_SECONDS: f64 = 30.0;
pub const DEFAULT_ACTIGRAPHY_RATE: f64 = 32.0;
/// Allowed relative deviation of the measured actigraphy rate from nominal.
pub const ACTIGRAPHY_RATE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SleepStage {
    W,
    N1,
    N2,
    N3,
    Rem,
}

impl SleepStage {
    pub const ALL: [SleepStage; 5] = [
        SleepStage::W,
        SleepStage::N1,
        SleepStage::N2,
        SleepStage::N3,
        SleepStage::Rem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<SleepStage> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SleepStage::W => "W",
            SleepStage::N1 => "N1",
            SleepStage::N2 => "N2",
            SleepStage::N3 => "N3",
            SleepStage::Rem => "REM",
        }
    }
}

impl fmt::Display for SleepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SleepStage {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim() {
            "W" => Ok(SleepStage::W),
            "N1" => Ok(SleepStage::N1),
            "N2" => Ok(SleepStage::N2),
            "N3" => Ok(SleepStage::N3),
            "REM" => Ok(SleepStage::Rem),
            other => Err(format!("unknown sleep stage {other:?}")),
        }
    }
}

/// Stage set used when W and N1 are scored as one class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MergedStage {
    WakeN1,
    N2,
    N3,
    Rem,
}

impl MergedStage {
    pub const ALL: [MergedStage; 4] = [
        MergedStage::WakeN1,
        MergedStage::N2,
        MergedStage::N3,
        MergedStage::Rem,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MergedStage::WakeN1 => "W+N1",
            MergedStage::N2 => "N2",
            MergedStage::N3 => "N3",
            MergedStage::Rem => "REM",
        }
    }
}

pub fn map_to_four_class(s: SleepStage) -> MergedStage {
    match s {
        SleepStage::W | SleepStage::N1 => MergedStage::WakeN1,
        SleepStage::N2 => MergedStage::N2,
        SleepStage::N3 => MergedStage::N3,
        SleepStage::Rem => MergedStage::Rem,
    }
}

/// Five-stage scoring or the four-class scheme with W and N1 merged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassMode {
    Five,
    Four,
}

impl ClassMode {
    pub fn num_classes(self) -> usize {
        match self {
            ClassMode::Five => 5,
            ClassMode::Four => 4,
        }
    }

    pub fn class_index(self, s: SleepStage) -> usize {
        match self {
            ClassMode::Five => s.index(),
            ClassMode::Four => map_to_four_class(s).index(),
        }
    }

    pub fn class_names(self) -> Vec<&'static str> {
        match self {
            ClassMode::Five => SleepStage::ALL.iter().map(|s| s.as_str()).collect(),
            ClassMode::Four => MergedStage::ALL.iter().map(|s| s.as_str()).collect(),
        }
    }

    pub fn from_count(m: usize) -> Option<ClassMode> {
        match m {
            5 => Some(ClassMode::Five),
            4 => Some(ClassMode::Four),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HrSample {
    pub t: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeartRateSeries {
    samples: Vec<HrSample>,
}

impl HeartRateSeries {
    pub fn new(samples: Vec<HrSample>) -> Result<Self> {
        check_times(samples.iter().map(|s| s.t), "heart rate")?;
        if let Some(s) = samples.iter().find(|s| !(s.bpm > 0.0) || !s.bpm.is_finite()) {
            return Err(Error::NonPositiveHeartRate(s.bpm));
        }
        Ok(HeartRateSeries { samples })
    }

    pub fn samples(&self) -> &[HrSample] {
        &self.samples
    }

    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActigraphySeries {
    samples: Vec<AccSample>,
    nominal_rate: f64,
}

impl ActigraphySeries {
    pub fn new(samples: Vec<AccSample>, nominal_rate: f64) -> Result<Self> {
        if !(nominal_rate > 0.0) {
            return Err(Error::Validation(format!(
                "actigraphy nominal rate must be positive, got {nominal_rate}"
            )));
        }
        check_times(samples.iter().map(|s| s.t), "actigraphy")?;
        if samples
            .iter()
            .any(|s| !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite()))
        {
            return Err(Error::Validation("non-finite actigraphy sample".into()));
        }
        if samples.len() < 2 {
            return Err(Error::Validation(
                "actigraphy needs at least two samples".into(),
            ));
        }
        let span = samples[samples.len() - 1].t - samples[0].t;
        let rate = (samples.len() - 1) as f64 / span;
        let deviation = (rate - nominal_rate).abs() / nominal_rate;
        if deviation > ACTIGRAPHY_RATE_TOLERANCE {
            return Err(Error::Validation(format!(
                "actigraphy rate {rate:.3} Hz deviates {:.1}% from nominal {nominal_rate} Hz",
                100.0 * deviation
            )));
        }
        Ok(ActigraphySeries {
            samples,
            nominal_rate,
        })
    }

    pub fn samples(&self) -> &[AccSample] {
        &self.samples
    }

    pub fn nominal_rate(&self) -> f64 {
        self.nominal_rate
    }

    fn times(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }
}

fn check_times(times: impl Iterator<Item = f64>, what: &str) -> Result<()> {
    let mut prev: Option<f64> = None;
    for (i, t) in times.enumerate() {
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Validation(format!(
                "{what}: invalid timestamp {t} at sample {i}"
            )));
        }
        if let Some(p) = prev {
            if t <= p {
                return Err(Error::Validation(format!(
                    "{what}: non-monotone timestamps at sample {i} ({p} then {t})"
                )));
            }
        }
        prev = Some(t);
    }
    Ok(())
}

/// One subject's night: both signals plus one stage label per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    subject_id: String,
    hr: HeartRateSeries,
    act: ActigraphySeries,
    labels: Vec<SleepStage>,
    epoch_seconds: f64,
}

impl Recording {
    /// Validates coverage and truncates both signals to the labelled span.
    ///
    /// A series covers the span `[0, labels.len() * epoch_seconds)` when its
    /// last timestamp plus its mean sampling interval reaches the span end.
    pub fn new(
        subject_id: impl Into<String>,
        hr: HeartRateSeries,
        act: ActigraphySeries,
        labels: Vec<SleepStage>,
        epoch_seconds: f64,
    ) -> Result<Self> {
        let subject_id = subject_id.into();
        if labels.is_empty() {
            return Err(Error::Validation(format!("{subject_id}: no labels")));
        }
        if !(epoch_seconds > 0.0) {
            return Err(Error::Validation(format!(
                "epoch length must be positive, got {epoch_seconds}"
            )));
        }
        let span = labels.len() as f64 * epoch_seconds;
        check_coverage(hr.times(), span, "heart rate", &subject_id)?;
        check_coverage(act.times(), span, "actigraphy", &subject_id)?;

        let hr = HeartRateSeries {
            samples: hr.samples.into_iter().filter(|s| s.t < span).collect(),
        };
        let act = ActigraphySeries {
            samples: act.samples.into_iter().filter(|s| s.t < span).collect(),
            nominal_rate: act.nominal_rate,
        };
        Ok(Recording {
            subject_id,
            hr,
            act,
            labels,
            epoch_seconds,
        })
    }

    pub fn subject_id(&self) -> &str {
        &self.subject_id
    }

    pub fn heart_rate(&self) -> &HeartRateSeries {
        &self.hr
    }

    pub fn actigraphy(&self) -> &ActigraphySeries {
        &self.act
    }

    pub fn labels(&self) -> &[SleepStage] {
        &self.labels
    }

    pub fn epoch_seconds(&self) -> f64 {
        self.epoch_seconds
    }

    pub fn num_epochs(&self) -> usize {
        self.labels.len()
    }

    /// Sample index ranges of the actigraphy series, one per epoch.
    pub fn actigraphy_epochs(&self) -> Vec<Range<usize>> {
        let s = &self.act.samples;
        let mut out = Vec::with_capacity(self.labels.len());
        let mut start = 0;
        for k in 0..self.labels.len() {
            let upper = (k + 1) as f64 * self.epoch_seconds;
            let end = start + s[start..].partition_point(|a| a.t < upper);
            out.push(start..end);
            start = end;
        }
        out
    }
}

fn check_coverage(
    times: impl Iterator<Item = f64>,
    span: f64,
    what: &str,
    subject: &str,
) -> Result<()> {
    let times: Vec<f64> = times.collect();
    let (first, last) = match (times.first(), times.last()) {
        (Some(&f), Some(&l)) => (f, l),
        _ => {
            return Err(Error::Validation(format!(
                "{subject}: {what} series is empty"
            )))
        }
    };
    let interval = if times.len() > 1 {
        (last - first) / (times.len() - 1) as f64
    } else {
        0.0
    };
    if last + interval < span {
        return Err(Error::Validation(format!(
            "{subject}: {what} signal ends at {last} s, shorter than label span {span} s"
        )));
    }
    Ok(())
}

/// RR interval in seconds from a heart rate in beats per minute.
pub fn hr_to_rr(bpm: f64) -> Result<f64> {
    if !(bpm > 0.0) || !bpm.is_finite() {
        return Err(Error::NonPositiveHeartRate(bpm));
    }
    Ok(60.0 / bpm)
}

/// RR intervals falling in one epoch.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RrEpoch {
    pub rr: Vec<f64>,
    /// Set when `rr` was copied from a neighbouring epoch.
    pub imputed: bool,
}

impl RrEpoch {
    pub fn is_empty(&self) -> bool {
        self.rr.is_empty()
    }
}

/// Assigns each heart-rate sample to epoch `floor(t / epoch_seconds)`.
///
/// Epochs without samples come back empty; see [`impute_empty_epochs`].
pub fn epoch_rr(rec: &Recording) -> Vec<RrEpoch> {
    let mut epochs = vec![RrEpoch::default(); rec.num_epochs()];
    for s in rec.hr.samples() {
        let k = (s.t / rec.epoch_seconds).floor() as usize;
        if let Some(e) = epochs.get_mut(k) {
            // bpm > 0 is a HeartRateSeries invariant
            e.rr.push(60.0 / s.bpm);
        }
    }
    epochs
}

/// Fills every empty epoch with a copy of the nearest non-empty epoch's RR
/// list, preferring the earlier neighbour at equal distance.
pub fn impute_empty_epochs(epochs: &mut [RrEpoch]) -> Result<()> {
    let filled: Vec<usize> = (0..epochs.len())
        .filter(|&k| !epochs[k].is_empty())
        .collect();
    if filled.is_empty() {
        return Err(Error::Validation(
            "no heart-rate samples in any epoch".into(),
        ));
    }
    for k in 0..epochs.len() {
        if !epochs[k].is_empty() {
            continue;
        }
        let pos = filled.partition_point(|&j| j < k);
        let before = pos.checked_sub(1).map(|p| filled[p]);
        let after = filled.get(pos).copied();
        let src = match (before, after) {
            (Some(b), Some(a)) => {
                if k - b <= a - k {
                    b
                } else {
                    a
                }
            }
            (Some(b), None) => b,
            (None, Some(a)) => a,
            (None, None) => unreachable!(),
        };
        epochs[k] = RrEpoch {
            rr: epochs[src].rr.clone(),
            imputed: true,
        };
    }
    Ok(())
}

/// Consensus hypnogram from several scorers.
///
/// Each epoch takes the strict plurality stage. A tie among the top stages
/// repeats the previous consensus stage; a tie at epoch 0 resolves to W.
pub fn merge_scorer_labels(hypnograms: &[Vec<SleepStage>]) -> Result<Vec<SleepStage>> {
    let first = hypnograms
        .first()
        .ok_or_else(|| Error::Validation("no hypnograms to merge".into()))?;
    if let Some(h) = hypnograms.iter().find(|h| h.len() != first.len()) {
        return Err(Error::Validation(format!(
            "hypnograms have unequal lengths ({} vs {})",
            first.len(),
            h.len()
        )));
    }
    let mut out: Vec<SleepStage> = Vec::with_capacity(first.len());
    for t in 0..first.len() {
        let mut votes = [0usize; 5];
        for h in hypnograms {
            votes[h[t].index()] += 1;
        }
        let top = *votes.iter().max().unwrap();
        let winners: Vec<SleepStage> = SleepStage::ALL
            .iter()
            .copied()
            .filter(|s| votes[s.index()] == top)
            .collect();
        let stage = if winners.len() == 1 {
            winners[0]
        } else {
            out.last().copied().unwrap_or(SleepStage::W)
        };
        out.push(stage);
    }
    Ok(out)
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(f))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn check_header(path: &Path, rdr: &mut csv::Reader<File>, expected: &[&str]) -> Result<()> {
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(parse_err(
            path,
            1,
            format!("expected header {:?}, got {:?}", expected.join(","), got.join(",")),
        ));
    }
    Ok(())
}

fn read_rows(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = open_csv(path)?;
    check_header(path, &mut rdr, expected)?;
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != expected.len() {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, got {}", expected.len(), rec.len()),
            ));
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| parse_err(path, line, format!("not a number: {f:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_heart_rate(path: &Path) -> Result<HeartRateSeries> {
    let rows = read_rows(path, &["t_seconds", "bpm"])?;
    HeartRateSeries::new(rows.iter().map(|r| HrSample { t: r[0], bpm: r[1] }).collect())
}

pub fn read_actigraphy(path: &Path, nominal_rate: f64) -> Result<ActigraphySeries> {
    let rows = read_rows(path, &["t_seconds", "x_g", "y_g", "z_g"])?;
    ActigraphySeries::new(
        rows.iter()
            .map(|r| AccSample {
                t: r[0],
                x: r[1],
                y: r[2],
                z: r[3],
            })
            .collect(),
        nominal_rate,
    )
}

/// Reads a label file, merging multi-scorer columns into one consensus.
pub fn read_labels(path: &Path) -> Result<Vec<SleepStage>> {
    if !path.exists() {
        return Err(Error::MissingLabels(path.to_path_buf()));
    }
    let mut rdr = open_csv(path)?;
    let headers = rdr
        .headers()
        .map_err(|e| parse_err(path, 1, e.to_string()))?
        .clone();
    let cols: Vec<&str> = headers.iter().collect();
    let scorers = match cols.as_slice() {
        ["epoch_index", "stage"] => 1,
        ["epoch_index", rest @ ..]
            if !rest.is_empty()
                && rest
                    .iter()
                    .enumerate()
                    .all(|(i, c)| *c == format!("stage_{}", i + 1)) =>
        {
            rest.len()
        }
        _ => {
            return Err(parse_err(
                path,
                1,
                format!(
                    "expected header \"epoch_index,stage\" or \"epoch_index,stage_1,...\", got {:?}",
                    cols.join(",")
                ),
            ))
        }
    };
    let mut hypnograms = vec![Vec::new(); scorers];
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(path, line, e.to_string()))?;
        if rec.len() != scorers + 1 {
            return Err(parse_err(
                path,
                line,
                format!("expected {} fields, got {}", scorers + 1, rec.len()),
            ));
        }
        let idx: usize = rec[0]
            .parse()
            .map_err(|_| parse_err(path, line, format!("bad epoch index {:?}", &rec[0])))?;
        if idx != i {
            return Err(parse_err(
                path,
                line,
                format!("epoch indices must be contiguous from 0; expected {i}, got {idx}"),
            ));
        }
        for (s, h) in hypnograms.iter_mut().enumerate() {
            let stage = rec[s + 1]
                .parse::<SleepStage>()
                .map_err(|e| parse_err(path, line, e))?;
            h.push(stage);
        }
    }
    if hypnograms[0].is_empty() {
        return Err(parse_err(path, 2, "label file has no epochs"));
    }
    if scorers == 1 {
        Ok(hypnograms.pop().unwrap())
    } else {
        merge_scorer_labels(&hypnograms)
    }
}

/// Loads and validates one recording from its three CSV files.
pub fn load_recording(
    hr_path: &Path,
    act_path: &Path,
    label_path: &Path,
    subject_id: &str,
) -> Result<Recording> {
    let labels = read_labels(label_path)?;
    let hr = read_heart_rate(hr_path)?;
    let act = read_actigraphy(act_path, DEFAULT_ACTIGRAPHY_RATE)?;
    Recording::new(subject_id, hr, act, labels, DEFAULT_EPOCH_SECONDS)
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

pub fn write_heart_rate(path: &Path, hr: &HeartRateSeries) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t_seconds,bpm").map_err(io)?;
    for s in hr.samples() {
        writeln!(w, "{},{}", s.t, s.bpm).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_actigraphy(path: &Path, act: &ActigraphySeries) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "t_seconds,x_g,y_g,z_g").map_err(io)?;
    for s in act.samples() {
        writeln!(w, "{},{},{},{}", s.t, s.x, s.y, s.z).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn write_labels(path: &Path, labels: &[SleepStage]) -> Result<()> {
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    writeln!(w, "epoch_index,stage").map_err(io)?;
    for (i, s) in labels.iter().enumerate() {
        writeln!(w, "{i},{s}").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub const HR_FILE: &str = "hr.csv";
pub const ACT_FILE: &str = "act.csv";
pub const LABEL_FILE: &str = "labels.csv";

/// Writes `rec` into `dir/<subject_id>/`.
pub fn write_recording(dir: &Path, rec: &Recording) -> Result<PathBuf> {
    let sub = dir.join(rec.subject_id());
    fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
    write_heart_rate(&sub.join(HR_FILE), rec.heart_rate())?;
    write_actigraphy(&sub.join(ACT_FILE), rec.actigraphy())?;
    write_labels(&sub.join(LABEL_FILE), rec.labels())?;
    Ok(sub)
}

pub fn write_cohort(dir: &Path, recs: &[Recording]) -> Result<()> {
    for r in recs {
        write_recording(dir, r)?;
    }
    Ok(())
}

/// Subject directories of a cohort, sorted by name.
pub fn cohort_subjects(dir: &Path) -> Result<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        if entry.path().is_dir() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    if names.is_empty() {
        return Err(Error::Validation(format!(
            "{}: no subject directories",
            dir.display()
        )));
    }
    Ok(names)
}

pub fn load_subject(dir: &Path, subject: &str) -> Result<Recording> {
    let sub = dir.join(subject);
    load_recording(
        &sub.join(HR_FILE),
        &sub.join(ACT_FILE),
        &sub.join(LABEL_FILE),
        subject,
    )
}

/// Loads every subject of a cohort directory in name order.
pub fn read_cohort(dir: &Path) -> Result<Vec<Recording>> {
    cohort_subjects(dir)?
        .iter()
        .map(|s| load_subject(dir, s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use SleepStage::*;

    fn hr_series(times: &[f64], bpm: f64) -> HeartRateSeries {
        HeartRateSeries::new(times.iter().map(|&t| HrSample { t, bpm }).collect()).unwrap()
    }

    fn act_series(seconds: f64) -> ActigraphySeries {
        let n = (seconds * 32.0) as usize;
        ActigraphySeries::new(
            (0..n)
                .map(|i| AccSample {
                    t: i as f64 / 32.0,
                    x: 0.0,
                    y: 0.0,
                    z: 1.0,
                })
                .collect(),
            32.0,
        )
        .unwrap()
    }

    #[test]
    fn rr_conversion() {
        assert_eq!(hr_to_rr(60.0).unwrap(), 1.0);
        assert_eq!(hr_to_rr(120.0).unwrap(), 0.5);
        assert!(hr_to_rr(0.0).is_err());
        assert!(hr_to_rr(-5.0).is_err());
    }

    proptest! {
        #[test]
        fn rr_conversion_is_an_involution(rr in 1e-3f64..1e3) {
            let back = hr_to_rr(60.0 / rr).unwrap();
            prop_assert!((back - rr).abs() / rr <= 1e-12);
        }

        #[test]
        fn consensus_of_one_scorer_is_identity(stages in proptest::collection::vec(0usize..5, 1..50)) {
            let h: Vec<SleepStage> = stages.iter().map(|&i| SleepStage::from_index(i).unwrap()).collect();
            prop_assert_eq!(merge_scorer_labels(&[h.clone()]).unwrap(), h);
        }

        #[test]
        fn consensus_ignores_scorer_order(
            raw in proptest::collection::vec(proptest::collection::vec(0usize..5, 20), 1..6),
            rot in 0usize..6,
        ) {
            let hyp: Vec<Vec<SleepStage>> = raw
                .iter()
                .map(|h| h.iter().map(|&i| SleepStage::from_index(i).unwrap()).collect())
                .collect();
            let mut permuted = hyp.clone();
            let n = permuted.len();
            permuted.rotate_left(rot % n);
            permuted.reverse();
            prop_assert_eq!(merge_scorer_labels(&hyp).unwrap(), merge_scorer_labels(&permuted).unwrap());
        }
    }

    #[test]
    fn epoch_boundaries_are_half_open() {
        let rec = Recording::new(
            "s",
            hr_series(&[0.0, 29.9, 30.0, 59.0], 60.0),
            act_series(60.0),
            vec![W, W],
            30.0,
        )
        .unwrap();
        let e = epoch_rr(&rec);
        assert_eq!(e[0].rr.len(), 2);
        assert_eq!(e[1].rr.len(), 2);
    }

    #[test]
    fn uniform_one_hz_gives_thirty_per_epoch() {
        let times: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let rec = Recording::new("s", hr_series(&times, 75.0), act_series(60.0), vec![W, N1], 30.0)
            .unwrap();
        let e = epoch_rr(&rec);
        assert_eq!(e.len(), 2);
        assert!(e.iter().all(|x| x.rr.len() == 30));
        assert!(e[0].rr.iter().all(|&r| r == 0.8));
        let total: usize = e.iter().map(|x| x.rr.len()).sum();
        assert_eq!(total, rec.heart_rate().samples().len());
    }

    #[test]
    fn empty_epoch_is_flagged_then_imputed() {
        let times: Vec<f64> = (0..30).map(|i| i as f64).chain([60.0, 89.5]).collect();
        let rec = Recording::new("s", hr_series(&times, 60.0), act_series(90.0), vec![W; 3], 30.0)
            .unwrap();
        let mut e = epoch_rr(&rec);
        assert!(e[1].is_empty());
        impute_empty_epochs(&mut e).unwrap();
        assert!(e[1].imputed);
        // equidistant neighbours: the earlier one wins
        assert_eq!(e[1].rr.len(), 30);
        assert!(!e[0].imputed && !e[2].imputed);
    }

    #[test]
    fn imputation_uses_nearest_epoch() {
        let mut e = vec![
            RrEpoch::default(),
            RrEpoch::default(),
            RrEpoch { rr: vec![1.0], imputed: false },
            RrEpoch::default(),
            RrEpoch::default(),
            RrEpoch::default(),
            RrEpoch { rr: vec![2.0], imputed: false },
        ];
        impute_empty_epochs(&mut e).unwrap();
        let firsts: Vec<f64> = e.iter().map(|x| x.rr[0]).collect();
        assert_eq!(firsts, vec![1.0, 1.0, 1.0, 1.0, 1.0, 2.0, 2.0]);
    }

    #[test]
    fn truncates_excess_and_rejects_deficit() {
        let times: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let rec =
            Recording::new("s", hr_series(&times, 60.0), act_series(95.0), vec![W; 3], 30.0)
                .unwrap();
        assert!(rec.heart_rate().samples().iter().all(|s| s.t < 90.0));
        assert!(rec.actigraphy().samples().iter().all(|s| s.t < 90.0));

        let err = Recording::new("s", hr_series(&times, 60.0), act_series(60.0), vec![W; 3], 30.0)
            .unwrap_err();
        assert!(err.to_string().contains("shorter than label span"), "{err}");
    }

    #[test]
    fn series_invariants() {
        let bad = HeartRateSeries::new(vec![HrSample { t: 0.0, bpm: 0.0 }]).unwrap_err();
        assert!(bad.to_string().contains("non-positive heart rate"));
        let non_mono = HeartRateSeries::new(vec![
            HrSample { t: 1.0, bpm: 60.0 },
            HrSample { t: 1.0, bpm: 60.0 },
        ]);
        assert!(non_mono.is_err());
        let slow: Vec<AccSample> = (0..100)
            .map(|i| AccSample { t: i as f64 / 25.0, x: 0.0, y: 0.0, z: 0.0 })
            .collect();
        assert!(ActigraphySeries::new(slow, 32.0).is_err());
        let ok: Vec<AccSample> = (0..100)
            .map(|i| AccSample { t: i as f64 / 31.0, x: 0.0, y: 0.0, z: 0.0 })
            .collect();
        assert!(ActigraphySeries::new(ok, 32.0).is_ok());
    }

    #[test]
    fn actigraphy_epoch_ranges_partition() {
        let rec = Recording::new(
            "s",
            hr_series(&[0.0, 30.0, 60.0, 89.0], 60.0),
            act_series(90.0),
            vec![W; 3],
            30.0,
        )
        .unwrap();
        let r = rec.actigraphy_epochs();
        assert_eq!(r, vec![0..960, 960..1920, 1920..2880]);
    }

    #[test]
    fn consensus_examples() {
        let votes = |v: &[SleepStage]| -> Vec<Vec<SleepStage>> { v.iter().map(|&s| vec![s]).collect() };
        assert_eq!(merge_scorer_labels(&votes(&[N2, N2, N2, W, Rem])).unwrap(), vec![N2]);
        // tie at epoch 0 falls back to W
        assert_eq!(merge_scorer_labels(&votes(&[W, W, N1, N1, N2])).unwrap(), vec![W]);
        assert_eq!(merge_scorer_labels(&votes(&[N1, N1, N3, N3, N2])).unwrap(), vec![W]);

        // epoch 0 consensus W, epoch 1 tied between W and N1
        let h = vec![
            vec![W, W],
            vec![W, W],
            vec![W, N1],
            vec![N2, N1],
            vec![N2, N2],
        ];
        assert_eq!(merge_scorer_labels(&h).unwrap(), vec![W, W]);

        // previous stage outside the tied set is still propagated
        let h = vec![vec![N3, N1], vec![N3, N1], vec![N3, N2], vec![N2, N2], vec![N2, Rem]];
        assert_eq!(merge_scorer_labels(&h).unwrap(), vec![N3, N3]);

        let unequal = vec![vec![W, W], vec![W]];
        assert!(merge_scorer_labels(&unequal).is_err());
    }

    #[test]
    fn four_class_projection() {
        assert_eq!(map_to_four_class(N1), MergedStage::WakeN1);
        assert_eq!(map_to_four_class(W), MergedStage::WakeN1);
        assert_eq!(map_to_four_class(N2), MergedStage::N2);
        assert_eq!(map_to_four_class(N3), MergedStage::N3);
        assert_eq!(map_to_four_class(Rem), MergedStage::Rem);
        let mut image: Vec<MergedStage> = SleepStage::ALL.iter().map(|&s| map_to_four_class(s)).collect();
        image.dedup();
        assert_eq!(image, MergedStage::ALL.to_vec());
    }

    #[test]
    fn stage_parsing() {
        for s in SleepStage::ALL {
            assert_eq!(s.as_str().parse::<SleepStage>().unwrap(), s);
        }
        assert!("R".parse::<SleepStage>().is_err());
    }
}
