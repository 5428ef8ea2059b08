//! End-to-end extraction quality on synthetic records with known truth.

use snz_core::extract::{extract_components, ExtractConfig, SourceKind};
use snz_core::signal::EPOCH_S;
use snz_core::synth::{generate, SynthConfig, SynthOutput};

/// Greedy one-to-one beat matching at the given tolerance; returns
/// (precision, recall, f1).
fn beat_f1(truth: &[f64], detected: &[f64], tol_s: f64) -> (f64, f64, f64) {
    let mut used = vec![false; detected.len()];
    let mut tp = 0usize;
    for &t in truth {
        let mut best: Option<(usize, f64)> = None;
        for (i, &d) in detected.iter().enumerate() {
            if used[i] {
                continue;
            }
            let err = (d - t).abs();
            if err <= tol_s && best.is_none_or(|(_, b)| err < b) {
                best = Some((i, err));
            }
        }
        if let Some((i, _)) = best {
            used[i] = true;
            tp += 1;
        }
    }
    let precision = if detected.is_empty() { 0.0 } else { tp as f64 / detected.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { tp as f64 / truth.len() as f64 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// Detected beat end-times recovered from the full pipeline for matching.
fn detected_beat_times(record: &snz_core::extract::RawRecord<f64>) -> Vec<f64> {
    let beats = snz_core::extract::detect_beats(
        record.channel("cardiac").unwrap(),
        &snz_core::extract::BeatDetectorConfig::default(),
    )
    .unwrap();
    // anchors start at the second peak; reconstruct the first from the gap
    let mut times = beats.end_times_s();
    if !times.is_empty() {
        let first = times[0] - beats.anchors[0].interval_ms / 1000.0;
        times.insert(0, first);
    }
    times
}

fn window_sets(out: &SynthOutput) -> (Vec<usize>, Vec<usize>) {
    let duration = out.clean.channels[0].duration_s();
    let n_windows = (duration / 2.0).floor() as usize;
    let mut burst = Vec::new();
    let mut quiet = Vec::new();
    'next: for k in 15..n_windows {
        let (lo, hi) = (k as f64 * 2.0, (k + 1) as f64 * 2.0);
        for &(s, e) in &out.truth.movement_intervals {
            if lo >= s && hi <= e {
                burst.push(k);
                continue 'next;
            }
            if hi > s && lo < e {
                continue 'next; // partial overlap: neither set
            }
        }
        quiet.push(k);
    }
    (burst, quiet)
}

#[test]
fn clean_records_meet_extraction_targets() {
    let mut worst_f1: f64 = 1.0;
    let mut worst_mae: f64 = 0.0;
    let mut burst_hit = 0usize;
    let mut burst_total = 0usize;
    let mut quiet_hit = 0usize;
    let mut quiet_total = 0usize;

    for seed in 0..10 {
        let cfg = SynthConfig { seed, duration_s: 900.0, ..Default::default() };
        let out = generate(&cfg).unwrap();

        // beats inside a movement interval are unrecoverable under the burst
        // noise and are carried by the movement channel instead, so the
        // detector is scored on the movement-free part of the record
        let detected = detected_beat_times(&out.clean);
        let in_movement = |t: f64| {
            out.truth.movement_intervals.iter().any(|&(s, e)| t >= s - 1.0 && t <= e + 1.0)
        };
        let truth_quiet: Vec<f64> =
            out.truth.beat_times_s.iter().copied().filter(|&t| !in_movement(t)).collect();
        let detected_quiet: Vec<f64> =
            detected.iter().copied().filter(|&t| !in_movement(t)).collect();
        let (_, _, f1) = beat_f1(&truth_quiet, &detected_quiet, 0.05);
        worst_f1 = worst_f1.min(f1);

        let extraction =
            extract_components(&out.clean, SourceKind::RespiratoryEffort, &ExtractConfig::default())
                .unwrap();
        let truth_wave = out.truth.true_ibi_wave(out.clean.channels[0].duration_s());
        let n = extraction.components.heartbeat.len().min(truth_wave.len());
        let mae = (0..n)
            .map(|i| (extraction.components.heartbeat.samples[i] - truth_wave.samples[i]).abs())
            .sum::<f64>()
            / n as f64;
        worst_mae = worst_mae.max(mae);

        // movement detector vs true burst windows
        let mask = &extraction.components.movement;
        let flagged = |k: usize| {
            let idx = k * 8;
            idx < mask.len() && mask.values[idx] == 1
        };
        let (burst, quiet) = window_sets(&out);
        let max_window = extraction.components.epochs() * EPOCH_S / 2;
        for &k in burst.iter().filter(|&&k| k < max_window) {
            burst_total += 1;
            if flagged(k) {
                burst_hit += 1;
            }
        }
        for &k in quiet.iter().filter(|&&k| k < max_window) {
            quiet_total += 1;
            if flagged(k) {
                quiet_hit += 1;
            }
        }
    }

    println!(
        "worst beat F1 {worst_f1:.4}; worst IBI MAE {worst_mae:.2} ms; \
         burst recall {}/{}; quiet false positives {}/{}",
        burst_hit, burst_total, quiet_hit, quiet_total
    );
    assert!(worst_f1 >= 0.95, "beat F1 {worst_f1}");
    assert!(worst_mae <= 30.0, "heartbeat MAE {worst_mae} ms");
    assert!(burst_total > 20, "too few burst windows to judge ({burst_total})");
    assert!(
        burst_hit as f64 >= 0.9 * burst_total as f64,
        "burst recall {burst_hit}/{burst_total}"
    );
    assert!(
        (quiet_hit as f64) < 0.02 * quiet_total as f64,
        "quiet false positives {quiet_hit}/{quiet_total}"
    );
}

#[test]
fn clean_breath_correlates_with_truth() {
    let cfg = SynthConfig { seed: 3, duration_s: 900.0, ..Default::default() };
    let out = generate(&cfg).unwrap();
    let extraction =
        extract_components(&out.clean, SourceKind::RespiratoryEffort, &ExtractConfig::default())
            .unwrap();
    let breath = &extraction.components.breath;
    let truth = out.truth.breath_wave();
    let n = breath.len().min(truth.len());
    let norm_b = (breath.samples[..n].iter().map(|v| v * v).sum::<f64>()).sqrt();
    let norm_t = (truth.samples[..n].iter().map(|v| v * v).sum::<f64>()).sqrt();
    let mut best = f64::MIN;
    // scan lags up to +-5 s
    for lag in -20i64..=20 {
        let mut acc = 0.0;
        for i in 0..n {
            let j = i as i64 + lag;
            let j = j.rem_euclid(n as i64) as usize;
            acc += breath.samples[i] * truth.samples[j];
        }
        best = best.max(acc / (norm_b * norm_t));
    }
    println!("breath correlation peak {best:.4}");
    assert!(best >= 0.8, "breath correlation {best}");
}


#[test]
fn burst_free_low_snr_detection_is_nearly_perfect() {
    // AR(1)-jittered RR at 10 dB SNR without movement bursts
    let cfg = SynthConfig {
        seed: 42,
        duration_s: 600.0,
        movement_rate: [0.0; 5],
        clean_snr_db: 10.0,
        ..Default::default()
    };
    let out = generate(&cfg).unwrap();
    let detected = detected_beat_times(&out.clean);
    let (_, _, f1) = beat_f1(&out.truth.beat_times_s, &detected, 0.05);
    assert!(f1 >= 0.95, "F1 {f1}");
}
