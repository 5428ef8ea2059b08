//! Breath component extraction: band-pass filtering, resampling to 4 Hz,
//! cumulative integration for bed-sensor sources, and z-score normalization.

use crate::extract::filter::{apply_filter, design_bessel_bandpass};
use crate::num::Scalar;
use crate::signal::{resample_linear, zscore, SignalError, Waveform, COMPONENT_HZ};

/// Where a raw channel came from; decides whether the integration stage runs.
///
/// Bed-sensor signals reflect breathing flux and are integrated to line up in
/// phase with respiratory-effort (volume) signals, which are used as-is.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BreathSource {
    BedSensor,
    RespiratoryEffort,
}

/// Band and order of the breath band-pass filter.
#[derive(Debug, Clone, PartialEq)]
pub struct BreathConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BreathConfig {
    fn default() -> Self {
        Self { low_hz: 0.1, high_hz: 1.0 / 3.0, order: 3 }
    }
}

/// Cumulative trapezoidal integral with step `dt`, starting at zero.
fn cumulative_trapezoid<S: Scalar>(samples: &[S], dt: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(samples.len());
    let mut acc = 0.0f64;
    out.push(0.0);
    for pair in samples.windows(2) {
        acc += 0.5 * (pair[0].into_f64() + pair[1].into_f64()) * dt;
        out.push(acc);
    }
    out
}

/// Subtracts the least-squares line from `values` in place.
fn detrend_linear(values: &mut [f64]) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return;
    }
    let mean_x = (n - 1.0) / 2.0;
    let mean_y = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, &y) in values.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y - mean_y);
        sxx += dx * dx;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    for (i, y) in values.iter_mut().enumerate() {
        *y -= mean_y + slope * (i as f64 - mean_x);
    }
}

/// Runs the four-stage breath pipeline. Returns the 4 Hz z-scored wave and a
/// flag marking a degenerate (zero-variance) channel.
pub fn extract_breath<S: Scalar>(
    w: &Waveform<S>,
    source: BreathSource,
    cfg: &BreathConfig,
) -> Result<(Waveform<S>, bool), SignalError> {
    if w.duration_s() < 60.0 {
        return Err(SignalError::TooShort(format!(
            "breath extraction needs at least 60 s, got {:.2} s",
            w.duration_s()
        )));
    }
    let coeffs = design_bessel_bandpass(cfg.low_hz, cfg.high_hz, cfg.order, w.sample_rate_hz)?;
    let filtered = apply_filter(&coeffs, w)?;
    let resampled = resample_linear(&filtered, COMPONENT_HZ)?;

    let pre_norm = match source {
        BreathSource::RespiratoryEffort => resampled,
        BreathSource::BedSensor => {
            let mut integrated = cumulative_trapezoid(&resampled.samples, 1.0 / COMPONENT_HZ);
            detrend_linear(&mut integrated);
            Waveform::new(
                integrated.into_iter().map(S::of_f64).collect(),
                COMPONENT_HZ,
                resampled.label,
            )
        }
    };

    let (mut normalized, degenerate) = zscore(&pre_norm)?;
    normalized.label = "breath".into();
    Ok((normalized, degenerate))
}
