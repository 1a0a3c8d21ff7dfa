use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use sleepnet::config::RunConfig;
use sleepnet::eval::{confusion_matrix, cross_validate, cross_validate_prepared, kfold_split, weighted_metrics, ConfusionMatrix, Scores};
use sleepnet::ingest::{cohort_subjects, epoch_rr, load_subject, read_cohort, write_cohort, SleepStage};
use sleepnet::model_file;
use sleepnet::network::{LayerKind, LayerSpec, NetShape};
use sleepnet::pipeline::{fit, fit_dictionary, prepare_all, Prepared};
use sleepnet::synth::{generate_cohort, SynthConfig};
use sleepnet::training::gradient_check;
use sleepnet::Error;

use crate::Failure;

pub const GRADCHECK_LIMIT: f64 = 1e-4;

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(())
}

fn scores_row(out: &mut String, per_class: &[Scores], w: &Scores) {
    for s in per_class {
        let _ = write!(out, ",{},{},{}", s.precision, s.recall, s.f1);
    }
    let _ = writeln!(out, ",{},{},{}", w.precision, w.recall, w.f1);
}

pub fn validate(dir: &Path) -> Result<(), Failure> {
    let subjects = cohort_subjects(dir)?;
    let mut failed = 0;
    for s in &subjects {
        match load_subject(dir, s) {
            Ok(rec) => {
                let mut counts = [0usize; 5];
                for st in rec.labels() {
                    counts[st.index()] += 1;
                }
                let empty = epoch_rr(&rec).iter().filter(|e| e.is_empty()).count();
                let mut line = format!("{s}: ok, {} epochs", rec.num_epochs());
                for st in SleepStage::ALL {
                    let _ = write!(line, ", {st}={}", counts[st.index()]);
                }
                let _ = write!(line, ", {empty} epochs without heart rate");
                println!("{line}");
            }
            Err(e) => {
                failed += 1;
                println!("{s}: FAILED: {e}");
            }
        }
    }
    println!("{} of {} recordings valid", subjects.len() - failed, subjects.len());
    if failed > 0 {
        return Err(Failure {
            code: 2,
            msg: format!("{failed} recording(s) failed validation"),
        });
    }
    Ok(())
}

pub fn extract(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let recs = read_cohort(data)?;
    let prepared = prepare_all(&recs, &cfg.frame)?;
    for p in &prepared {
        let mut text = String::from("epoch,stage");
        for j in 0..p.low.ncols() {
            let _ = write!(text, ",f{j}");
        }
        text.push('\n');
        for (t, row) in p.low.outer_iter().enumerate() {
            let _ = write!(text, "{t},{}", p.labels[t]);
            for v in row {
                let _ = write!(text, ",{v}");
            }
            text.push('\n');
        }
        write_text(&out.join(format!("{}.csv", p.subject)), &text)?;
    }
    println!("wrote {} feature matrices of width {} to {}", prepared.len(), cfg.frame.dim(), out.display());
    Ok(())
}

pub fn fit_dict(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let recs = read_cohort(data)?;
    let prepared = prepare_all(&recs, &cfg.frame)?;
    let refs: Vec<&Prepared> = prepared.iter().collect();
    let dict = fit_dictionary(&refs, &cfg.kmeans())?;
    let mut text = (0..dict.dim()).map(|j| format!("c{j}")).collect::<Vec<_>>().join(",");
    text.push('\n');
    for row in dict.centers.outer_iter() {
        text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
        text.push('\n');
    }
    write_text(out, &text)?;
    println!(
        "dictionary: {} words, {} iterations, objective {}",
        dict.k(),
        dict.iterations,
        dict.objective
    );
    Ok(())
}

pub fn train(cfg: &RunConfig, data: &Path, model: &Path, history: &Path) -> Result<(), Failure> {
    let recs = read_cohort(data)?;
    let prepared = prepare_all(&recs, &cfg.frame)?;
    let folds = kfold_split(&(0..prepared.len()).collect::<Vec<_>>(), cfg.cv_folds, cfg.seed)?;
    let val: Vec<&Prepared> = folds[0].iter().map(|&i| &prepared[i]).collect();
    let train_set: Vec<&Prepared> = folds[1..].iter().flatten().map(|&i| &prepared[i]).collect();
    let (fitted, hist) = fit(&train_set, &val, &cfg.pipeline())?;
    if let Some(parent) = model.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::Io { path: parent.into(), source: e })?;
    }
    model_file::save(model, &fitted)?;
    write_text(history, &hist.to_csv())?;
    let best = hist.passes.iter().find(|p| p.pass == hist.best_pass);
    println!(
        "trained on {} recordings ({} for validation); best pass {} with validation loss {}",
        train_set.len(),
        val.len(),
        hist.best_pass,
        best.map_or(f64::NAN, |p| p.val_loss)
    );
    Ok(())
}

pub fn eval(data: &Path, model: &Path, subjects: &[String], out: &Path) -> Result<(), Failure> {
    let fitted = model_file::load(model)?;
    let names = if subjects.is_empty() { cohort_subjects(data)? } else { subjects.to_vec() };
    let mode = fitted.class_mode;
    let m = mode.num_classes();
    let mut text = String::from("subject");
    for c in mode.class_names() {
        let _ = write!(text, ",precision_{c},recall_{c},f1_{c}");
    }
    text.push_str(",precision,recall,f1\n");
    let mut pooled = ConfusionMatrix::zeros(m);
    for s in &names {
        let rec = load_subject(data, s)?;
        let pred = fitted.predict_recording(&rec)?;
        let truth: Vec<usize> = rec.labels().iter().map(|&l| mode.class_index(l)).collect();
        let cm = confusion_matrix(&truth, &pred, m)?;
        let met = weighted_metrics(&cm)?;
        text.push_str(s);
        scores_row(&mut text, &met.per_class, &met.weighted);
        pooled.merge(&cm)?;
    }
    let met = weighted_metrics(&pooled)?;
    text.push_str("all");
    scores_row(&mut text, &met.per_class, &met.weighted);
    write_text(out, &text)?;
    println!(
        "{} recordings: precision {:.4} recall {:.4} f1 {:.4}",
        names.len(),
        met.weighted.precision,
        met.weighted.recall,
        met.weighted.f1
    );
    Ok(())
}

pub fn cv(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let recs = read_cohort(data)?;
    let report = cross_validate(&recs, &cfg.pipeline(), &cfg.cv())?;
    fs::create_dir_all(out).map_err(|e| Error::Io { path: out.into(), source: e })?;
    report.write(&out.join("cv_report.csv"), Some(&out.join("cv_summary.json")))?;
    let a = report.aggregate;
    println!(
        "{} folds x {} rounds: precision {:.4} recall {:.4} f1 {:.4}",
        report.folds, report.rounds, a.precision, a.recall, a.f1
    );
    Ok(())
}

pub fn synth(
    cfg: &RunConfig,
    out: &Path,
    recordings: Option<usize>,
    epochs: Option<usize>,
    difficulty: Option<f64>,
    context_only: bool,
) -> Result<(), Failure> {
    let mut sc = if context_only { SynthConfig::context_only() } else { SynthConfig::default() };
    sc.seed = cfg.seed;
    if let Some(n) = recordings {
        sc.n_recordings = n;
    }
    if let Some(n) = epochs {
        sc.epochs_per_recording = n;
    }
    if let Some(d) = difficulty {
        sc.difficulty = d;
    }
    let cohort = generate_cohort(&sc)?;
    write_cohort(out, &cohort)?;
    println!(
        "wrote {} recordings x {} epochs to {}",
        sc.n_recordings,
        sc.epochs_per_recording,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn gradcheck(
    cfg: &RunConfig,
    kind: LayerKind,
    layers: usize,
    units: usize,
    steps: usize,
    classes: usize,
    inputs: usize,
    fd_step: f64,
) -> Result<(), Failure> {
    if !(fd_step > 0.0) {
        return Err(Failure::usage("--fd-step must be positive"));
    }
    let shape = NetShape::uniform(inputs, kind, layers, units, classes);
    shape.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let err = gradient_check(&shape, steps, cfg.seed, fd_step)?;
    println!("max relative error: {err:e}");
    if !(err < GRADCHECK_LIMIT) {
        return Err(Failure {
            code: 3,
            msg: format!("gradient check failed: {err:e} >= {GRADCHECK_LIMIT:e}"),
        });
    }
    Ok(())
}

pub fn sweep(cfg: &RunConfig, data: &Path, out: &Path) -> Result<(), Failure> {
    let recs = read_cohort(data)?;
    let prepared = prepare_all(&recs, &cfg.frame)?;
    let mut text = String::from("hidden_type,layers,units,precision,recall,f1\n");
    for &kind in &cfg.sweep_types {
        for &layers in &cfg.sweep_layers {
            for &units in &cfg.sweep_units {
                let mut p = cfg.pipeline();
                p.layers = vec![LayerSpec { kind, units }; layers];
                let r = cross_validate_prepared(&prepared, &p, &cfg.cv(), |_| {})?;
                let a = r.aggregate;
                let _ = writeln!(text, "{kind},{layers},{units},{},{},{}", a.precision, a.recall, a.f1);
                println!("{kind} {layers}x{units}: f1 {:.4}", a.f1);
            }
        }
    }
    write_text(out, &text)
}
