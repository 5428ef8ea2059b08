//! Generalization module: random amplification and speed perturbation with
//! coherent label resampling, plus the spectral signature diagnostic.

use rand::Rng;

use crate::num::Scalar;
use crate::signal::{
    BinaryMask, ComponentSet, SignalError, StageSequence, Waveform,
    COMPONENT_HZ, EPOCH_S, SAMPLES_PER_EPOCH,
};

/// Ranges of the augmentation draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    pub amp_low: f64,
    pub amp_high: f64,
    pub speed_low: f64,
    pub speed_high: f64,
    pub rng_seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self { amp_low: 0.9, amp_high: 1.1, speed_low: 0.75, speed_high: 1.25, rng_seed: 0 }
    }
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<(), SignalError> {
        if !(self.amp_low > 0.0 && self.amp_low <= self.amp_high) {
            return Err(SignalError::InvalidInput(format!(
                "amplification range [{}, {}] invalid",
                self.amp_low, self.amp_high
            )));
        }
        if !(self.speed_low > 0.0 && self.speed_low <= self.speed_high) {
            return Err(SignalError::InvalidInput(format!(
                "speed range [{}, {}] invalid",
                self.speed_low, self.speed_high
            )));
        }
        Ok(())
    }
}

fn scale_wave<S: Scalar>(w: &Waveform<S>, factor: f64) -> Waveform<S> {
    if factor == 1.0 {
        return w.clone();
    }
    let f = S::of_f64(factor);
    Waveform::new(w.samples.iter().map(|&v| v * f).collect(), w.sample_rate_hz, w.label.clone())
}

/// Scales heartbeat and breath by the given factors; the movement mask is a
/// 0/1 indicator and is never amplified.
pub fn amplify_with<S: Scalar>(c: &ComponentSet<S>, heartbeat_factor: f64, breath_factor: f64) -> ComponentSet<S> {
    ComponentSet {
        heartbeat: scale_wave(&c.heartbeat, heartbeat_factor),
        breath: scale_wave(&c.breath, breath_factor),
        movement: c.movement.clone(),
    }
}

/// Random amplification: heartbeat and breath scaled by independent uniform
/// draws from the configured range.
pub fn amplify<S: Scalar, R: Rng>(
    c: &ComponentSet<S>,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> ComponentSet<S> {
    let a1 = rng.random_range(cfg.amp_low..=cfg.amp_high);
    let a2 = rng.random_range(cfg.amp_low..=cfg.amp_high);
    amplify_with(c, a1, a2)
}

/// Index map for resampling `t_in` stage labels onto `t_out` positions:
/// each output epoch samples the stage at its center's original position.
/// Returned indices are zero-based and non-decreasing.
pub fn resample_labels(t_in: usize, t_out: usize) -> Vec<usize> {
    assert!(t_in >= 1 && t_out >= 1);
    (0..t_out as u64)
        .map(|j| {
            // floor(T * (i - 0.5) / T') with i = j + 1, in exact integers
            (t_in as u64 * (2 * j + 1) / (2 * t_out as u64)) as usize
        })
        .collect()
}

/// Time-resamples one 4 Hz wave by the factor `beta` onto `n_out` samples;
/// output sample `i` reads the source at fractional index `i * beta`.
fn stretch_wave<S: Scalar>(w: &Waveform<S>, beta: f64, n_out: usize) -> Waveform<S> {
    let samples = (0..n_out)
        .map(|i| crate::signal::interp_at(&w.samples, i as f64 * beta))
        .collect();
    Waveform::new(samples, COMPONENT_HZ, w.label.clone())
}

fn stretch_mask(m: &BinaryMask, beta: f64, n_out: usize) -> BinaryMask {
    let last = m.len() - 1;
    let values = (0..n_out)
        .map(|i| {
            let j = (i as f64 * beta + 0.5).floor() as usize;
            m.values[j.min(last)]
        })
        .collect();
    BinaryMask::new(values, COMPONENT_HZ)
}

/// Speed perturbation with an explicit factor: stretches all three components
/// by a common `beta` (> 1 plays faster, shortening the record), remaps the
/// labels through [`resample_labels`], and truncates everything to a whole
/// number of epochs. `beta = 1` is the identity.
pub fn speed_perturb_with<S: Scalar>(
    c: &ComponentSet<S>,
    stages: &StageSequence,
    beta: f64,
) -> Result<(ComponentSet<S>, StageSequence), SignalError> {
    let t_in = c.epochs();
    if stages.len() != t_in {
        return Err(SignalError::InvalidInput(format!(
            "stage count {} does not match {} epochs",
            stages.len(),
            t_in
        )));
    }
    if beta == 1.0 {
        return Ok((c.clone(), stages.clone()));
    }
    // new duration L' = L / beta seconds
    let t_out = ((t_in * EPOCH_S) as f64 / beta / EPOCH_S as f64).floor() as usize;
    if t_out == 0 {
        return Err(SignalError::TooShort(format!(
            "speed factor {beta} leaves no whole epoch from {t_in}"
        )));
    }
    let n_out = t_out * SAMPLES_PER_EPOCH;
    let out = ComponentSet::new(
        stretch_wave(&c.heartbeat, beta, n_out),
        stretch_wave(&c.breath, beta, n_out),
        stretch_mask(&c.movement, beta, n_out),
    )?;
    let map = resample_labels(t_in, t_out);
    let stages_out = StageSequence::new(map.iter().map(|&i| stages.stages[i]).collect());
    Ok((out, stages_out))
}

/// Speed perturbation with `beta` drawn uniformly from the configured range.
pub fn speed_perturb<S: Scalar, R: Rng>(
    c: &ComponentSet<S>,
    stages: &StageSequence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ComponentSet<S>, StageSequence), SignalError> {
    let beta = rng.random_range(cfg.speed_low..=cfg.speed_high);
    speed_perturb_with(c, stages, beta)
}

/// Applies the full augmentation (amplify then speed-perturb) with draws from
/// `rng`. Deterministic given the generator state.
pub fn augment_record<S: Scalar, R: Rng>(
    c: &ComponentSet<S>,
    stages: &StageSequence,
    cfg: &AugmentConfig,
    rng: &mut R,
) -> Result<(ComponentSet<S>, StageSequence), SignalError> {
    let amplified = amplify(c, cfg, rng);
    speed_perturb(&amplified, stages, cfg, rng)
}

/// Welch power spectral density: `segment`-sample Hann-windowed segments with
/// 50% overlap, one-sided, mean-detrended per segment.
pub fn welch_psd<S: Scalar>(samples: &[S], fs: f64, segment: usize) -> Vec<f64> {
    assert!(segment.is_power_of_two());
    let hop = segment / 2;
    let window: Vec<f64> = (0..segment)
        .map(|j| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / segment as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let n_bins = segment / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut n_segments = 0usize;
    let mut start = 0usize;
    while start + segment <= samples.len() {
        let chunk: Vec<f64> =
            samples[start..start + segment].iter().map(|s| s.into_f64()).collect();
        let mean = chunk.iter().sum::<f64>() / segment as f64;
        let mut re: Vec<f64> =
            chunk.iter().zip(&window).map(|(x, w)| (x - mean) * w).collect();
        let mut im = vec![0.0f64; segment];
        crate::fft::fft_inplace(&mut re, &mut im);
        for k in 0..n_bins {
            let power = re[k] * re[k] + im[k] * im[k];
            let one_sided = if k == 0 || k == segment / 2 { 1.0 } else { 2.0 };
            acc[k] += one_sided * power / (fs * win_power);
        }
        n_segments += 1;
        start += hop;
    }
    if n_segments > 0 {
        for v in &mut acc {
            *v /= n_segments as f64;
        }
    }
    acc
}

/// Concatenated Welch PSDs of the heartbeat and breath components, used as a
/// deterministic spectral signature of an augmented record.
pub fn spectral_signature<S: Scalar>(c: &ComponentSet<S>) -> Result<Vec<f64>, SignalError> {
    const SEGMENT: usize = 256;
    if c.heartbeat.len() < 2 * SEGMENT {
        return Err(SignalError::TooShort(format!(
            "spectral signature needs at least {} samples, got {}",
            2 * SEGMENT,
            c.heartbeat.len()
        )));
    }
    let mut out = welch_psd(&c.heartbeat.samples, COMPONENT_HZ, SEGMENT);
    out.extend(welch_psd(&c.breath.samples, COMPONENT_HZ, SEGMENT));
    Ok(out)
}
