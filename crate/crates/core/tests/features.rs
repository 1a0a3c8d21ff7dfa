use sleepnet::features::{frame_indices, low_level_features, FrameConfig};
use sleepnet::ingest::{HeartRateSeries, HrSample, Recording};
use sleepnet::synth::{generate_cohort, SynthConfig};

fn with_hr_shift(rec: &Recording, epoch: usize, delta: f64) -> Recording {
    let span = rec.epoch_seconds();
    let hr: Vec<HrSample> = rec
        .heart_rate()
        .samples()
        .iter()
        .map(|s| {
            let inside = (s.t / span) as usize == epoch;
            HrSample { t: s.t, bpm: if inside { s.bpm + delta } else { s.bpm } }
        })
        .collect();
    Recording::new(
        rec.subject_id(),
        HeartRateSeries::new(hr).unwrap(),
        rec.actigraphy().clone(),
        rec.labels().to_vec(),
        span,
    )
    .unwrap()
}

#[test]
fn heart_rate_change_stays_inside_its_frames() {
    let rec = generate_cohort(&SynthConfig {
        n_recordings: 1,
        epochs_per_recording: 30,
        seed: 3,
        ..SynthConfig::default()
    })
    .unwrap()
    .remove(0);
    let cfg = FrameConfig::default();
    let hr_cols = cfg.mean_rr_dim() + cfg.freq_dim();
    let before = low_level_features(&rec, &cfg).unwrap();
    for k in [0, 12, 29] {
        let after = low_level_features(&with_hr_shift(&rec, k, 15.0), &cfg).unwrap();
        for t in 0..30 {
            let frame = frame_indices(t, 30, cfg.frame_epochs).unwrap();
            let (a, b) = (before.row(t), after.row(t));
            let hr_same = (0..hr_cols).all(|j| a[j] == b[j]);
            assert_eq!(hr_same, !frame.contains(&k), "epoch {k} changed, row {t}");
            assert!((hr_cols..cfg.dim()).all(|j| a[j] == b[j]));
        }
    }
}

#[test]
fn frame_windows_at_the_edges() {
    assert_eq!(frame_indices(0, 30, 10).unwrap(), 0..10);
    assert_eq!(frame_indices(7, 30, 10).unwrap(), 2..12);
    assert_eq!(frame_indices(29, 30, 10).unwrap(), 20..30);
    assert!(frame_indices(0, 9, 10).is_err());
}
