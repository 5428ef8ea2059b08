//! Body-movement detection from peak-to-peak amplitude against a trailing
//! dynamic baseline.

use crate::num::Scalar;
use crate::signal::{BinaryMask, SignalError, Waveform, COMPONENT_HZ};

/// Rolling-baseline parameters of the movement detector.
///
/// The record is tiled into `window_s`-second windows. Each window's
/// peak-to-peak amplitude is compared against mean + `multiplier` * std of
/// the most recent `baseline_windows` windows that were not themselves
/// flagged, so a detected movement does not poison the baseline that judges
/// the windows right after it.
#[derive(Debug, Clone, PartialEq)]
pub struct MovementBaseline {
    pub window_s: f64,
    pub baseline_windows: usize,
    pub multiplier: f64,
}

impl Default for MovementBaseline {
    fn default() -> Self {
        Self { window_s: 2.0, baseline_windows: 15, multiplier: 5.0 }
    }
}

impl MovementBaseline {
    /// Length of the baseline period in seconds.
    pub fn baseline_s(&self) -> f64 {
        self.window_s * self.baseline_windows as f64
    }
}

/// Flags 2-second windows whose peak-to-peak amplitude exceeds the dynamic
/// baseline threshold, and expands the per-window flags to a 4 Hz mask. The
/// first `baseline_windows` windows are never flagged. The baseline std is
/// floored at a relative epsilon so exactly-stationary features never trip
/// the strict-inequality threshold.
pub fn detect_movement<S: Scalar>(
    w: &Waveform<S>,
    cfg: &MovementBaseline,
) -> Result<BinaryMask, SignalError> {
    let min_duration = cfg.baseline_s() + cfg.window_s;
    if w.duration_s() < min_duration {
        return Err(SignalError::TooShort(format!(
            "movement detection needs at least {min_duration} s, got {:.2} s",
            w.duration_s()
        )));
    }
    let win = (cfg.window_s * w.sample_rate_hz).round() as usize;
    if win == 0 {
        return Err(SignalError::InvalidInput("window shorter than one sample".into()));
    }
    let n_windows = w.len() / win;

    let features: Vec<f64> = (0..n_windows)
        .map(|k| {
            let chunk = &w.samples[k * win..(k + 1) * win];
            let mut min = f64::INFINITY;
            let mut max = f64::NEG_INFINITY;
            for s in chunk {
                let v = s.into_f64();
                min = min.min(v);
                max = max.max(v);
            }
            max - min
        })
        .collect();

    let mut flags = vec![false; n_windows];
    let mut quiet: Vec<f64> = Vec::with_capacity(n_windows);
    for k in 0..n_windows {
        if k >= cfg.baseline_windows {
            let base = &quiet[quiet.len() - cfg.baseline_windows..];
            let n = base.len() as f64;
            let mean = base.iter().sum::<f64>() / n;
            let var = base.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt().max(1e-6 * mean.max(f64::MIN_POSITIVE));
            flags[k] = features[k] > mean + cfg.multiplier * std;
        }
        if !flags[k] {
            quiet.push(features[k]);
        }
    }

    let per_flag = (cfg.window_s * COMPONENT_HZ).round() as usize;
    let values = flags
        .iter()
        .flat_map(|&f| std::iter::repeat_n(u8::from(f), per_flag))
        .collect();
    Ok(BinaryMask::new(values, COMPONENT_HZ))
}
