//! Heartbeat detection and inter-beat interval processing: envelope-based
//! peak picking, normal-to-normal interval cleaning, and interpolation of the
//! interval sequence into the 4 Hz heartbeat wave.

use crate::extract::filter::design_bessel_bandpass;
use crate::extract::filter::apply_filter;
use crate::num::Scalar;
use crate::signal::{SignalError, Waveform, COMPONENT_HZ};

/// One heartbeat anchor: interval end time in seconds plus interval length in
/// milliseconds. After cleaning, the end time no longer has to equal the
/// previous end time plus the interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatAnchor {
    pub end_time_s: f64,
    pub interval_ms: f64,
}

/// Sequence of heartbeat anchors, strictly increasing in time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BeatSeries {
    pub anchors: Vec<BeatAnchor>,
}

impl BeatSeries {
    pub fn new(anchors: Vec<BeatAnchor>) -> Self {
        debug_assert!(anchors.windows(2).all(|w| w[0].end_time_s < w[1].end_time_s));
        Self { anchors }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn intervals_ms(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| a.interval_ms).collect()
    }

    pub fn end_times_s(&self) -> Vec<f64> {
        self.anchors.iter().map(|a| a.end_time_s).collect()
    }
}

/// Tunables for the envelope/adaptive-threshold beat detector.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatDetectorConfig {
    /// Cardiac band the input is filtered to before envelope extraction.
    pub band_low_hz: f64,
    pub band_high_hz: f64,
    /// Width of the centered smoothing window applied to the squared signal.
    pub envelope_window_s: f64,
    /// Minimum spacing between accepted peaks.
    pub refractory_s: f64,
    /// Peak acceptance threshold = running median of the envelope times this.
    pub threshold_factor: f64,
    /// Width of the running-median window.
    pub median_window_s: f64,
    /// Segments whose coarse (2 s) envelope exceeds this multiple of its
    /// record-wide median are treated as movement artifacts and emit no
    /// beats; the interval cleaner bridges the gaps afterwards.
    pub artifact_mult: f64,
    pub artifact_window_s: f64,
    pub artifact_dilate_s: f64,
    /// Secondary threshold floor: a peak must also reach this fraction of
    /// the running mean envelope. The median of a duty-cycled beat envelope
    /// sits in the inter-beat valley, so the median-based threshold alone
    /// admits noise-floor maxima between beats.
    pub peak_mean_fraction: f64,
    /// Within this window after an accepted peak, a candidate must reach
    /// `tail_fraction` of that peak's envelope; rejects the band-pass ring
    /// tail that trails every beat.
    pub tail_guard_s: f64,
    pub tail_fraction: f64,
}

impl Default for BeatDetectorConfig {
    fn default() -> Self {
        Self {
            band_low_hz: 0.7,
            band_high_hz: 10.0,
            envelope_window_s: 0.15,
            refractory_s: 0.3,
            threshold_factor: 2.0,
            median_window_s: 10.0,
            artifact_mult: 10.0,
            artifact_window_s: 2.0,
            artifact_dilate_s: 0.5,
            peak_mean_fraction: 0.25,
            tail_guard_s: 0.7,
            tail_fraction: 0.35,
        }
    }
}

/// Centered moving average with a window of `win` samples (forced odd).
fn smooth(values: &[f64], win: usize) -> Vec<f64> {
    let win = win.max(1) | 1;
    let half = win / 2;
    let n = values.len();
    let mut prefix = vec![0.0f64; n + 1];
    for (i, &v) in values.iter().enumerate() {
        prefix[i + 1] = prefix[i] + v;
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(n);
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Running median of `values` over a centered window, evaluated on a coarse
/// grid and linearly interpolated in between.
fn running_median(values: &[f64], window: usize, grid_step: usize) -> Vec<f64> {
    let n = values.len();
    let half = (window / 2).max(1);
    let step = grid_step.max(1);
    let mut grid_idx = Vec::new();
    let mut grid_val = Vec::new();
    let mut i = 0usize;
    loop {
        let lo = i.saturating_sub(half);
        let hi = (i + half + 1).min(n);
        let mut chunk: Vec<f64> = values[lo..hi].to_vec();
        chunk.sort_by(|a, b| a.total_cmp(b));
        let m = chunk.len();
        let med = if m % 2 == 1 { chunk[m / 2] } else { 0.5 * (chunk[m / 2 - 1] + chunk[m / 2]) };
        grid_idx.push(i);
        grid_val.push(med);
        if i == n - 1 {
            break;
        }
        i = (i + step).min(n - 1);
    }
    let mut out = vec![0.0f64; n];
    let mut seg = 0usize;
    for (k, slot) in out.iter_mut().enumerate() {
        while seg + 1 < grid_idx.len() && grid_idx[seg + 1] < k {
            seg += 1;
        }
        if seg + 1 >= grid_idx.len() {
            *slot = grid_val[grid_idx.len() - 1];
        } else {
            let (i0, i1) = (grid_idx[seg], grid_idx[seg + 1]);
            let frac = (k as f64 - i0 as f64) / (i1 - i0) as f64;
            *slot = grid_val[seg] + (grid_val[seg + 1] - grid_val[seg]) * frac.clamp(0.0, 1.0);
        }
    }
    out
}

/// Median of a slice (copying); used for the artifact gate.
fn global_median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Dominant in-band frequency of the filtered signal, from the magnitude
/// spectrum of a centered chunk. Falls back to the geometric band center for
/// degenerate spectra.
fn dominant_frequency(samples: &[f64], fs: f64, low: f64, high: f64) -> f64 {
    let n_fft = 1usize << 14;
    let chunk = if samples.len() > n_fft {
        let start = (samples.len() - n_fft) / 2;
        &samples[start..start + n_fft]
    } else {
        samples
    };
    let mag = crate::fft::magnitude_spectrum(chunk, n_fft);
    let df = fs / n_fft as f64;
    let lo_bin = (low / df).ceil() as usize;
    let hi_bin = ((high / df).floor() as usize).min(mag.len() - 1);
    if lo_bin >= hi_bin {
        return (low * high).sqrt();
    }
    let (best_bin, &best) = mag[lo_bin..=hi_bin]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty bin range");
    if best <= 0.0 {
        return (low * high).sqrt();
    }
    (lo_bin + best_bin) as f64 * df
}

/// Detects heartbeats: cardiac band-pass, smoothed energy envelope, local
/// maxima above an adaptive running-median threshold with a refractory
/// period. High-energy movement segments are gated out entirely, and peak
/// times are compensated for the band-pass group delay at the dominant
/// cardiac frequency so the anchors line up with the underlying beats.
pub fn detect_beats<S: Scalar>(
    w: &Waveform<S>,
    cfg: &BeatDetectorConfig,
) -> Result<BeatSeries, SignalError> {
    if w.duration_s() < 10.0 {
        return Err(SignalError::TooShort(format!(
            "beat detection needs at least 10 s, got {:.2} s",
            w.duration_s()
        )));
    }
    let fs = w.sample_rate_hz;
    let coeffs = design_bessel_bandpass(cfg.band_low_hz, cfg.band_high_hz, 3, fs)?;

    // reflect-pad the front so the causal filter enters the record in steady
    // state instead of spraying an onset transient over the first seconds
    let pad = ((10.0 * fs) as usize).min(w.len().saturating_sub(1));
    let mut padded: Vec<f64> = Vec::with_capacity(w.len() + pad);
    for i in (1..=pad).rev() {
        padded.push(w.samples[i].into_f64());
    }
    padded.extend(w.samples.iter().map(|s| s.into_f64()));
    let filtered_padded =
        apply_filter(&coeffs, &Waveform::new(padded, fs, w.label.clone()))?;
    let filtered_f64: Vec<f64> = filtered_padded.samples[pad..].to_vec();
    let energy: Vec<f64> = filtered_f64.iter().map(|v| v * v).collect();
    let env = smooth(&energy, (cfg.envelope_window_s * fs).round() as usize);
    let median_win = (cfg.median_window_s * fs).round() as usize;
    let threshold = running_median(&env, median_win, (fs * 0.5).round().max(1.0) as usize);

    // artifact gate: a coarse envelope far above its record-wide median marks
    // movement segments that would otherwise spray spurious peaks
    let coarse = smooth(&env, (cfg.artifact_window_s * fs).round() as usize);
    let coarse_median = global_median(&coarse);
    let dilate = (cfg.artifact_dilate_s * fs).round() as usize;
    let mut artifact = vec![false; env.len()];
    for (i, &c) in coarse.iter().enumerate() {
        if c > cfg.artifact_mult * coarse_median {
            let lo = i.saturating_sub(dilate);
            let hi = (i + dilate + 1).min(env.len());
            artifact[lo..hi].iter_mut().for_each(|a| *a = true);
        }
    }

    // candidate local maxima above both threshold components, outside
    // artifact segments; the mean floor ignores artifact samples so bursts
    // do not inflate it
    let masked_env: Vec<f64> = env
        .iter()
        .zip(&artifact)
        .map(|(&e, &a)| if a { 0.0 } else { e })
        .collect();
    let mean_env = smooth(&masked_env, median_win);
    let mut candidates: Vec<usize> = Vec::new();
    for i in 1..env.len() - 1 {
        if !artifact[i]
            && env[i] > env[i - 1]
            && env[i] >= env[i + 1]
            && env[i] > threshold[i] * cfg.threshold_factor
            && env[i] > cfg.peak_mean_fraction * mean_env[i]
        {
            candidates.push(i);
        }
    }

    // refractory: keep the strongest peak in any conflicting pair
    candidates.sort_by(|&a, &b| env[b].total_cmp(&env[a]).then(a.cmp(&b)));
    let refractory = (cfg.refractory_s * fs).round() as i64;
    let mut accepted: Vec<usize> = Vec::new();
    for &c in &candidates {
        if accepted.iter().all(|&a| (a as i64 - c as i64).abs() >= refractory) {
            accepted.push(c);
        }
    }
    accepted.sort_unstable();

    // reject candidates sitting in the decay shadow of a recent stronger
    // peak (the band-pass impulse response rings after each beat)
    let guard = (cfg.tail_guard_s * fs).round() as usize;
    let mut guarded: Vec<usize> = Vec::with_capacity(accepted.len());
    for &c in &accepted {
        let shadowed = guarded.iter().rev().take_while(|&&q| c - q <= guard).any(|&q| {
            env[c] < cfg.tail_fraction * env[q]
        });
        if !shadowed {
            guarded.push(c);
        }
    }
    let accepted = guarded;

    if accepted.len() < 2 {
        return Err(SignalError::InsufficientBeats(format!(
            "found {} peak(s), need at least 2",
            accepted.len()
        )));
    }

    let f_dom = dominant_frequency(&filtered_f64, fs, cfg.band_low_hz, cfg.band_high_hz);
    let delay = coeffs.group_delay_s(f_dom);
    let times: Vec<f64> = accepted.iter().map(|&i| (i as f64 / fs - delay).max(0.0)).collect();
    let anchors = times
        .windows(2)
        .map(|pair| BeatAnchor {
            end_time_s: pair[1],
            interval_ms: (pair[1] - pair[0]) * 1000.0,
        })
        .collect();
    Ok(BeatSeries::new(anchors))
}

/// Parameters of the normal-to-normal interval cleaning rules.
#[derive(Debug, Clone, PartialEq)]
pub struct CleaningConfig {
    pub plausible_low_ms: f64,
    pub plausible_high_ms: f64,
    /// Relative deviation from the previous valid interval that marks an
    /// interval ectopic.
    pub ectopic_fraction: f64,
}

impl Default for CleaningConfig {
    fn default() -> Self {
        Self { plausible_low_ms: 300.0, plausible_high_ms: 2000.0, ectopic_fraction: 0.2 }
    }
}

/// Replaces intervals with normal-to-normal intervals: implausible and
/// ectopic values are removed, interior removals are linearly interpolated in
/// index space between surviving neighbors (end times preserved), and removed
/// values at either boundary are dropped together with their anchors.
pub fn clean_nn_intervals(
    beats: &BeatSeries,
    cfg: &CleaningConfig,
) -> Result<BeatSeries, SignalError> {
    let n = beats.len();
    if n == 0 {
        return Err(SignalError::InvalidInput("cleaning on empty beat series".into()));
    }
    let t: Vec<f64> = beats.intervals_ms();
    let mut keep = vec![true; n];
    for i in 0..n {
        if t[i] < cfg.plausible_low_ms || t[i] > cfg.plausible_high_ms {
            keep[i] = false;
        }
    }
    let mut prev_valid: Option<f64> = None;
    for i in 0..n {
        if !keep[i] {
            continue;
        }
        if let Some(pv) = prev_valid {
            if (t[i] - pv).abs() > cfg.ectopic_fraction * pv {
                keep[i] = false;
                continue;
            }
        }
        prev_valid = Some(t[i]);
    }

    let Some(first) = keep.iter().position(|&k| k) else {
        return Err(SignalError::EmptyAfterCleaning);
    };
    let last = keep.iter().rposition(|&k| k).expect("first exists so last does");

    let mut values = t.clone();
    let mut i = first;
    while i <= last {
        if keep[i] {
            i += 1;
            continue;
        }
        let lo = i - 1; // kept, by construction
        let mut hi = i;
        while !keep[hi] {
            hi += 1;
        }
        for k in i..hi {
            let frac = (k - lo) as f64 / (hi - lo) as f64;
            values[k] = values[lo] + (values[hi] - values[lo]) * frac;
        }
        i = hi;
    }

    let anchors = (first..=last)
        .map(|i| BeatAnchor { end_time_s: beats.anchors[i].end_time_s, interval_ms: values[i] })
        .collect();
    Ok(BeatSeries::new(anchors))
}

/// Linearly interpolates the anchor sequence into a 4 Hz wave over
/// `duration_s` seconds, padding with the first interval before the first
/// anchor and the last interval after the last anchor.
pub fn interpolate_ibi<S: Scalar>(
    beats: &BeatSeries,
    duration_s: f64,
) -> Result<Waveform<S>, SignalError> {
    if beats.is_empty() {
        return Err(SignalError::InvalidInput("interpolate_ibi on empty beat series".into()));
    }
    let n_out = crate::signal::resampled_len(
        (duration_s * 1_000_000.0).round() as usize,
        1_000_000.0,
        COMPONENT_HZ,
    );
    let anchors = &beats.anchors;
    let mut samples = Vec::with_capacity(n_out);
    let mut seg = 0usize;
    for k in 0..n_out {
        let t = k as f64 / COMPONENT_HZ;
        let v = if t <= anchors[0].end_time_s {
            anchors[0].interval_ms
        } else if t >= anchors[anchors.len() - 1].end_time_s {
            anchors[anchors.len() - 1].interval_ms
        } else {
            while anchors[seg + 1].end_time_s < t {
                seg += 1;
            }
            let (a, b) = (&anchors[seg], &anchors[seg + 1]);
            let frac = (t - a.end_time_s) / (b.end_time_s - a.end_time_s);
            a.interval_ms + (b.interval_ms - a.interval_ms) * frac
        };
        samples.push(S::of_f64(v));
    }
    Ok(Waveform::new(samples, COMPONENT_HZ, "heartbeat"))
}
