//! Confusion matrices, weighted precision / recall / F1, and
//! subject-independent cross-validation.
//!
//! Weighted metrics use the reference-class proportions `w_i`:
//! `P = sum w_i P_i`, `R = sum w_i R_i`, `F1 = sum w_i F1_i`, where a
//! per-class ratio with a zero denominator counts as 0.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Dictionary, NormStats};
use crate::ingest::Recording;
use crate::pipeline::{fit_observed, prepare_all, PipelineConfig, Prepared};

/// Rows are reference classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: Array2<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(m: usize) -> Self {
        ConfusionMatrix {
            counts: Array2::zeros((m, m)),
        }
    }

    pub fn from_counts(counts: Array2<u64>) -> Result<Self> {
        if counts.nrows() != counts.ncols() || counts.nrows() == 0 {
            return Err(Error::Validation(format!(
                "confusion matrix must be square and non-empty, got {:?}",
                counts.dim()
            )));
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.nrows()
    }

    pub fn counts(&self) -> &Array2<u64> {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.sum()
    }

    pub fn add(&mut self, reference: usize, predicted: usize) -> Result<()> {
        let m = self.num_classes();
        if reference >= m || predicted >= m {
            return Err(Error::Validation(format!(
                "class index ({reference}, {predicted}) outside {m} classes"
            )));
        }
        self.counts[[reference, predicted]] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.num_classes() != self.num_classes() {
            return Err(Error::dim("confusion matrix", self.num_classes(), other.num_classes()));
        }
        self.counts += &other.counts;
        Ok(())
    }

    pub fn accuracy(&self) -> f64 {
        let diag: u64 = (0..self.num_classes()).map(|i| self.counts[[i, i]]).sum();
        diag as f64 / self.total() as f64
    }

    pub fn to_rows(&self) -> Vec<Vec<u64>> {
        self.counts.outer_iter().map(|r| r.to_vec()).collect()
    }
}

pub fn confusion_matrix(reference: &[usize], predicted: &[usize], m: usize) -> Result<ConfusionMatrix> {
    if reference.len() != predicted.len() {
        return Err(Error::Validation(format!(
            "reference has {} epochs, prediction {}",
            reference.len(),
            predicted.len()
        )));
    }
    let mut cm = ConfusionMatrix::zeros(m);
    for (&r, &p) in reference.iter().zip(predicted) {
        cm.add(r, p)?;
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub weighted: Scores,
    pub per_class: Vec<Scores>,
    /// Reference-class proportions.
    pub weights: Vec<f64>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn weighted_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Validation("confusion matrix is empty".into()));
    }
    let c = cm.counts();
    let m = cm.num_classes();
    let mut per_class = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    let mut weighted = Scores { precision: 0.0, recall: 0.0, f1: 0.0 };
    for i in 0..m {
        let tp = c[[i, i]];
        let reference: u64 = c.row(i).sum();
        let predicted: u64 = c.column(i).sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, reference);
        let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
        let n = reference as f64;
        weighted.precision += n * p;
        weighted.recall += n * r;
        weighted.f1 += n * f1;
        per_class.push(Scores { precision: p, recall: r, f1 });
        weights.push(n / total as f64);
    }
    let total = total as f64;
    weighted.precision /= total;
    weighted.recall /= total;
    weighted.f1 /= total;
    Ok(Metrics { weighted, per_class, weights })
}

/// Seeded shuffle, then round-robin assignment to `k` folds.
pub fn kfold_split<T: Clone>(ids: &[T], k: usize, seed: u64) -> Result<Vec<Vec<T>>> {
    if k == 0 || ids.len() < k {
        return Err(Error::Validation(format!(
            "{} subjects cannot fill {k} folds",
            ids.len()
        )));
    }
    let mut order: Vec<usize> = (0..ids.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut folds = vec![Vec::new(); k];
    for (j, &i) in order.iter().enumerate() {
        folds[j % k].push(ids[i].clone());
    }
    Ok(folds)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub rounds: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { folds: 8, rounds: 3, seed: 0 }
    }
}

/// Handed to the observer of [`cross_validate_observed`] once the feature
/// statistics of an iteration are fitted.
#[derive(Debug)]
pub struct FoldView<'a> {
    pub round: usize,
    pub fold: usize,
    pub train: &'a [String],
    pub validation: &'a [String],
    pub test: &'a [String],
    pub dictionary: &'a Dictionary,
    pub norm: &'a NormStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldResult {
    pub round: usize,
    pub fold: usize,
    pub test_subjects: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub metrics: Metrics,
    pub best_pass: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub class_names: Vec<String>,
    pub folds: usize,
    pub rounds: usize,
    pub iterations: Vec<FoldResult>,
    /// Mean weighted scores over the folds of each round.
    pub round_means: Vec<Scores>,
    /// Mean of `round_means`.
    pub aggregate: Scores,
    /// Per-class scores averaged the same way.
    pub aggregate_per_class: Vec<Scores>,
}

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SummaryIteration {
    round: usize,
    fold: usize,
    test_subjects: Vec<String>,
    weighted: Scores,
    per_class: Vec<Scores>,
    confusion: Vec<Vec<u64>>,
    best_pass: usize,
}

/// JSON summary layout, versioned by `schema_version`.
#[derive(Serialize, Deserialize)]
struct Summary {
    schema_version: u32,
    class_names: Vec<String>,
    folds: usize,
    rounds: usize,
    aggregate: Scores,
    aggregate_per_class: Vec<Scores>,
    round_means: Vec<Scores>,
    iterations: Vec<SummaryIteration>,
}

fn mean_scores<'a>(s: impl IntoIterator<Item = &'a Scores>) -> Scores {
    let mut acc = Scores { precision: 0.0, recall: 0.0, f1: 0.0 };
    let mut n = 0;
    for x in s {
        acc.precision += x.precision;
        acc.recall += x.recall;
        acc.f1 += x.f1;
        n += 1;
    }
    let n = n.max(1) as f64;
    Scores {
        precision: acc.precision / n,
        recall: acc.recall / n,
        f1: acc.f1 / n,
    }
}

impl CvReport {
    fn from_iterations(
        class_names: Vec<String>,
        folds: usize,
        rounds: usize,
        iterations: Vec<FoldResult>,
    ) -> Self {
        let in_round = |r: usize| iterations.iter().filter(move |it| it.round == r);
        let round_means: Vec<Scores> = (0..rounds)
            .map(|r| mean_scores(in_round(r).map(|it| &it.metrics.weighted)))
            .collect();
        let aggregate = mean_scores(&round_means);
        let aggregate_per_class = (0..class_names.len())
            .map(|c| {
                let per_round: Vec<Scores> = (0..rounds)
                    .map(|r| mean_scores(in_round(r).map(|it| &it.metrics.per_class[c])))
                    .collect();
                mean_scores(&per_round)
            })
            .collect();
        CvReport {
            class_names,
            folds,
            rounds,
            iterations,
            round_means,
            aggregate,
            aggregate_per_class,
        }
    }

    /// One row per iteration plus a final `mean,mean` aggregate row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("round,fold");
        for c in &self.class_names {
            let _ = write!(out, ",precision_{c},recall_{c},f1_{c}");
        }
        out.push_str(",precision,recall,f1\n");
        let row = |out: &mut String, per_class: &[Scores], w: &Scores| {
            for s in per_class {
                let _ = write!(out, ",{},{},{}", s.precision, s.recall, s.f1);
            }
            let _ = writeln!(out, ",{},{},{}", w.precision, w.recall, w.f1);
        };
        for it in &self.iterations {
            let _ = write!(out, "{},{}", it.round, it.fold);
            row(&mut out, &it.metrics.per_class, &it.metrics.weighted);
        }
        out.push_str("mean,mean");
        row(&mut out, &self.aggregate_per_class, &self.aggregate);
        out
    }

    pub fn summary_json(&self) -> String {
        let summary = Summary {
            schema_version: SUMMARY_SCHEMA_VERSION,
            class_names: self.class_names.clone(),
            folds: self.folds,
            rounds: self.rounds,
            aggregate: self.aggregate,
            aggregate_per_class: self.aggregate_per_class.clone(),
            round_means: self.round_means.clone(),
            iterations: self
                .iterations
                .iter()
                .map(|it| SummaryIteration {
                    round: it.round,
                    fold: it.fold,
                    test_subjects: it.test_subjects.clone(),
                    weighted: it.metrics.weighted,
                    per_class: it.metrics.per_class.clone(),
                    confusion: it.confusion.to_rows(),
                    best_pass: it.best_pass,
                })
                .collect(),
        };
        serde_json::to_string_pretty(&summary).expect("summary serialises") + "\n"
    }

    pub fn write(&self, csv_path: &Path, json_path: Option<&Path>) -> Result<()> {
        std::fs::write(csv_path, self.to_csv()).map_err(|e| Error::io(csv_path, e))?;
        if let Some(p) = json_path {
            std::fs::write(p, self.summary_json()).map_err(|e| Error::io(p, e))?;
        }
        Ok(())
    }
}

pub fn cross_validate(recs: &[Recording], pipeline: &PipelineConfig, cv: &CvConfig) -> Result<CvReport> {
    let prepared = prepare_all(recs, &pipeline.frame)?;
    cross_validate_prepared(&prepared, pipeline, cv, |_| {})
}

/// [`cross_validate`] with a callback per iteration.
pub fn cross_validate_observed(
    recs: &[Recording],
    pipeline: &PipelineConfig,
    cv: &CvConfig,
    observer: impl FnMut(&FoldView<'_>),
) -> Result<CvReport> {
    let prepared = prepare_all(recs, &pipeline.frame)?;
    cross_validate_prepared(&prepared, pipeline, cv, observer)
}

/// Per round: reshuffle subjects into folds with seed `cv.seed + round`;
/// iteration `i` tests on fold `i`, validates on fold `i + 1 (mod k)` and
/// trains on the rest.
pub fn cross_validate_prepared(
    prepared: &[Prepared],
    pipeline: &PipelineConfig,
    cv: &CvConfig,
    mut observer: impl FnMut(&FoldView<'_>),
) -> Result<CvReport> {
    pipeline.validate()?;
    if cv.folds < 3 || cv.rounds == 0 {
        return Err(Error::Config(format!(
            "cross-validation needs at least 3 folds and 1 round, got {} and {}",
            cv.folds, cv.rounds
        )));
    }
    let subjects: Vec<String> = prepared.iter().map(|p| p.subject.clone()).collect();
    let mut sorted = subjects.clone();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != subjects.len() {
        return Err(Error::Validation("subject ids must be unique".into()));
    }
    let by_id = |id: &String| &prepared[subjects.iter().position(|s| s == id).unwrap()];
    let mode = pipeline.class_mode;
    let m = mode.num_classes();

    let mut iterations = Vec::with_capacity(cv.folds * cv.rounds);
    for round in 0..cv.rounds {
        let folds = kfold_split(&subjects, cv.folds, cv.seed.wrapping_add(round as u64))?;
        for i in 0..cv.folds {
            let v = (i + 1) % cv.folds;
            let test = &folds[i];
            let validation = &folds[v];
            let train: Vec<String> = (0..cv.folds)
                .filter(|&j| j != i && j != v)
                .flat_map(|j| folds[j].iter().cloned())
                .collect();
            let train_set: Vec<&Prepared> = train.iter().map(by_id).collect();
            let val_set: Vec<&Prepared> = validation.iter().map(by_id).collect();

            let (model, history) = fit_observed(&train_set, &val_set, pipeline, |dictionary, norm| {
                observer(&FoldView {
                    round,
                    fold: i,
                    train: &train,
                    validation,
                    test,
                    dictionary,
                    norm,
                })
            })?;

            let mut confusion = ConfusionMatrix::zeros(m);
            for id in test {
                let p = by_id(id);
                let pred = model.predict(p)?;
                confusion.merge(&confusion_matrix(&p.class_labels(mode), &pred, m)?)?;
            }
            let metrics = weighted_metrics(&confusion)?;
            iterations.push(FoldResult {
                round,
                fold: i,
                test_subjects: test.clone(),
                confusion,
                metrics,
                best_pass: history.best_pass,
            });
        }
    }
    let names = mode.class_names().into_iter().map(String::from).collect();
    Ok(CvReport::from_iterations(names, cv.folds, cv.rounds, iterations))
}
