use sleepnet::ingest::{read_cohort, write_cohort, SleepStage};
use sleepnet::synth::{generate_cohort, stationary_distribution, SynthConfig};

fn gauss(x: f64, mu: f64, sd: f64) -> f64 {
    let z = (x - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

// Accuracy of the best possible classifier that only sees one epoch's mean
// heart rate, by brute-force integration over a fine grid.
fn bayes_accuracy_from_mean_hr(cfg: &SynthConfig, classes: &[usize]) -> f64 {
    let pi = stationary_distribution(&cfg.transition);
    let means = cfg.effective_hr_mean();
    let sds: Vec<f64> = cfg.hr_std.iter().map(|s| s / 30f64.sqrt()).collect();
    let mass: f64 = classes.iter().map(|&c| pi[c]).sum();
    let (lo, hi, dx) = (20.0, 140.0, 1e-3);
    let mut acc = 0.0;
    let mut x = lo;
    while x < hi {
        let best = classes
            .iter()
            .map(|&c| pi[c] / mass * gauss(x, means[c], sds[c]))
            .fold(0.0, f64::max);
        acc += best * dx;
        x += dx;
    }
    acc
}

fn epoch_mean_hr(rec: &sleepnet::ingest::Recording) -> Vec<f64> {
    let mut sums = vec![(0.0, 0usize); rec.num_epochs()];
    for s in rec.heart_rate().samples() {
        let k = (s.t / rec.epoch_seconds()) as usize;
        sums[k].0 += s.bpm;
        sums[k].1 += 1;
    }
    sums.into_iter().map(|(s, n)| s / n as f64).collect()
}

#[test]
fn stage_frequencies_match_the_stationary_distribution() {
    let cfg = SynthConfig::default();
    let cohort = generate_cohort(&cfg).unwrap();
    assert_eq!(cohort.len(), 16);
    let mut counts = [0usize; 5];
    let mut total = 0;
    for r in &cohort {
        assert_eq!(r.num_epochs(), 240);
        for s in r.labels() {
            counts[s.index()] += 1;
            total += 1;
        }
    }
    let pi = stationary_distribution(&cfg.transition);
    for s in 0..5 {
        let f = counts[s] as f64 / total as f64;
        assert!((f - pi[s]).abs() < 0.05, "stage {s}: {f} vs {}", pi[s]);
    }
}

#[test]
fn mean_hr_threshold_separates_wake_from_deep_sleep() {
    let cfg = SynthConfig::default();
    let means = cfg.effective_hr_mean();
    let threshold = 0.5 * (means[SleepStage::W.index()] + means[SleepStage::N3.index()]);
    let (mut right, mut n) = (0, 0);
    for r in generate_cohort(&cfg).unwrap() {
        for (s, hr) in r.labels().iter().zip(epoch_mean_hr(&r)) {
            match s {
                SleepStage::W => right += (hr > threshold) as usize,
                SleepStage::N3 => right += (hr <= threshold) as usize,
                _ => continue,
            }
            n += 1;
        }
    }
    assert!(n > 100);
    assert!(right as f64 / n as f64 > 0.9, "{right}/{n}");
}

#[test]
fn default_cohort_is_separable_per_epoch() {
    let cfg = SynthConfig::default();
    let five = bayes_accuracy_from_mean_hr(&cfg, &[0, 1, 2, 3, 4]);
    assert!(five > 0.95, "{five}");
    let wn3 = bayes_accuracy_from_mean_hr(&cfg, &[0, 3]);
    assert!(wn3 > 0.999, "{wn3}");

    let hard = SynthConfig { difficulty: 0.1, ..SynthConfig::default() };
    assert!(bayes_accuracy_from_mean_hr(&hard, &[0, 1, 2, 3, 4]) < five);
}

#[test]
fn cohort_round_trips_through_csv() {
    let cfg = SynthConfig {
        n_recordings: 3,
        epochs_per_recording: 30,
        seed: 5,
        ..SynthConfig::default()
    };
    let cohort = generate_cohort(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(dir.path(), &cohort).unwrap();
    let back = read_cohort(dir.path()).unwrap();
    assert_eq!(back, cohort);

    let ctx = SynthConfig { n_recordings: 2, epochs_per_recording: 12, ..SynthConfig::context_only() };
    let cohort = generate_cohort(&ctx).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_cohort(dir.path(), &cohort).unwrap();
    assert_eq!(read_cohort(dir.path()).unwrap(), cohort);
}
