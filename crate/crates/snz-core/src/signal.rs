//! Foundational sampled-signal types and rate conversion / normalization
//! utilities shared by the extraction, augmentation and model layers.

use thiserror::Error;

use crate::num::Scalar;

/// Errors produced by signal-level operations.
#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid band: {0}")]
    InvalidBand(String),
    #[error("sample rate mismatch: signal at {signal_hz} Hz, expected {expected_hz} Hz")]
    RateMismatch { signal_hz: f64, expected_hz: f64 },
    #[error("record too short: {0}")]
    TooShort(String),
    #[error("insufficient beats: {0}")]
    InsufficientBeats(String),
    #[error("empty after cleaning: every interval was removed")]
    EmptyAfterCleaning,
    #[error("inconsistent record: {0}")]
    InconsistentRecord(String),
}

/// Uniformly sampled real-valued channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform<S: Scalar> {
    pub samples: Vec<S>,
    pub sample_rate_hz: f64,
    pub label: String,
}

impl<S: Scalar> Waveform<S> {
    pub fn new(samples: Vec<S>, sample_rate_hz: f64, label: impl Into<String>) -> Self {
        assert!(sample_rate_hz > 0.0, "sample rate must be positive");
        Self { samples, sample_rate_hz, label: label.into() }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds, `len / rate`.
    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz
    }
}

/// Per-sample 0/1 indicator channel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub values: Vec<u8>,
    pub sample_rate_hz_times_1000: u64,
}

impl BinaryMask {
    pub fn new(values: Vec<u8>, sample_rate_hz: f64) -> Self {
        assert!(sample_rate_hz > 0.0, "sample rate must be positive");
        debug_assert!(values.iter().all(|&v| v <= 1));
        Self { values, sample_rate_hz_times_1000: (sample_rate_hz * 1000.0).round() as u64 }
    }

    pub fn sample_rate_hz(&self) -> f64 {
        self.sample_rate_hz_times_1000 as f64 / 1000.0
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.values.len() as f64 / self.sample_rate_hz()
    }
}

/// The five sleep stages with their fixed integer codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum Stage {
    Wake = 0,
    N1 = 1,
    N2 = 2,
    N3 = 3,
    Rem = 4,
}

impl Stage {
    pub const ALL: [Stage; 5] = [Stage::Wake, Stage::N1, Stage::N2, Stage::N3, Stage::Rem];
    pub const COUNT: usize = 5;

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Stage> {
        match code {
            0 => Some(Stage::Wake),
            1 => Some(Stage::N1),
            2 => Some(Stage::N2),
            3 => Some(Stage::N3),
            4 => Some(Stage::Rem),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stage::Wake => "W",
            Stage::N1 => "N1",
            Stage::N2 => "N2",
            Stage::N3 => "N3",
            Stage::Rem => "R",
        }
    }
}

/// Seconds per scoring epoch; one stage label covers this much signal.
pub const EPOCH_S: usize = 30;
/// Unified component sample rate in Hz.
pub const COMPONENT_HZ: f64 = 4.0;
/// Component samples per scoring epoch (30 s at 4 Hz).
pub const SAMPLES_PER_EPOCH: usize = 120;

/// Per-epoch sleep stage labels over 30-second epochs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StageSequence {
    pub stages: Vec<Stage>,
}

impl StageSequence {
    pub fn new(stages: Vec<Stage>) -> Self {
        Self { stages }
    }

    pub fn len(&self) -> usize {
        self.stages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn codes(&self) -> Vec<u8> {
        self.stages.iter().map(|s| s.code()).collect()
    }

    pub fn from_codes(codes: &[u8]) -> Option<Self> {
        codes.iter().map(|&c| Stage::from_code(c)).collect::<Option<Vec<_>>>().map(Self::new)
    }
}

/// Aligned 4 Hz triple fed to the model: interpolated inter-beat intervals in
/// milliseconds, z-scored breath wave, and the 0/1 body-movement mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentSet<S: Scalar> {
    pub heartbeat: Waveform<S>,
    pub breath: Waveform<S>,
    pub movement: BinaryMask,
}

impl<S: Scalar> ComponentSet<S> {
    /// Builds the set, checking the shared-rate and 120·T length invariants.
    pub fn new(
        heartbeat: Waveform<S>,
        breath: Waveform<S>,
        movement: BinaryMask,
    ) -> Result<Self, SignalError> {
        let set = Self { heartbeat, breath, movement };
        set.check_invariants()?;
        Ok(set)
    }

    pub fn check_invariants(&self) -> Result<(), SignalError> {
        let rate_ok = self.heartbeat.sample_rate_hz == COMPONENT_HZ
            && self.breath.sample_rate_hz == COMPONENT_HZ
            && self.movement.sample_rate_hz() == COMPONENT_HZ;
        if !rate_ok {
            return Err(SignalError::InvalidInput(format!(
                "components must share the {COMPONENT_HZ} Hz rate (got {}, {}, {})",
                self.heartbeat.sample_rate_hz,
                self.breath.sample_rate_hz,
                self.movement.sample_rate_hz()
            )));
        }
        let n = self.heartbeat.len();
        if self.breath.len() != n || self.movement.len() != n {
            return Err(SignalError::InvalidInput(format!(
                "component lengths differ: heartbeat {}, breath {}, movement {}",
                n,
                self.breath.len(),
                self.movement.len()
            )));
        }
        if n == 0 || !n.is_multiple_of(SAMPLES_PER_EPOCH) {
            return Err(SignalError::InvalidInput(format!(
                "component length {n} is not a positive multiple of {SAMPLES_PER_EPOCH}"
            )));
        }
        if self.movement.values.iter().any(|&v| v > 1) {
            return Err(SignalError::InvalidInput("movement mask holds non-binary values".into()));
        }
        Ok(())
    }

    /// Number of 30-second epochs covered.
    pub fn epochs(&self) -> usize {
        self.heartbeat.len() / SAMPLES_PER_EPOCH
    }
}

/// Output sample count for a resample: `floor(duration_s * target_hz)`.
///
/// Computed as `floor(len * target / rate)` with a snap to the nearest integer
/// when the exact value is integral up to float round-off, so rate pairs that
/// are exact rationals of each other never lose a trailing sample.
pub(crate) fn resampled_len(len: usize, rate_hz: f64, target_hz: f64) -> usize {
    let exact = len as f64 * target_hz / rate_hz;
    let nearest = exact.round();
    if (exact - nearest).abs() < 1e-9 * nearest.abs().max(1.0) {
        nearest as usize
    } else {
        exact.floor() as usize
    }
}

/// Linear interpolation of `samples` at fractional index `pos`, clamped to the
/// signal extent. An integral `pos` returns the underlying sample bit-exactly.
pub(crate) fn interp_at<S: Scalar>(samples: &[S], pos: f64) -> S {
    let last = samples.len() - 1;
    if pos <= 0.0 {
        return samples[0];
    }
    if pos >= last as f64 {
        return samples[last];
    }
    let i = pos.floor() as usize;
    let frac = pos - i as f64;
    if frac == 0.0 {
        return samples[i];
    }
    let a = samples[i].into_f64();
    let b = samples[i + 1].into_f64();
    S::of_f64(a + (b - a) * frac)
}

/// Resamples a waveform to `target_hz` by linear interpolation.
///
/// Output sample `i` sits at time `i / target_hz` and takes the linearly
/// interpolated value of the input there; the output carries
/// `floor(duration_s * target_hz)` samples.
pub fn resample_linear<S: Scalar>(
    w: &Waveform<S>,
    target_hz: f64,
) -> Result<Waveform<S>, SignalError> {
    if w.is_empty() {
        return Err(SignalError::InvalidInput("resample_linear on empty waveform".into()));
    }
    if target_hz.is_nan() || target_hz <= 0.0 {
        return Err(SignalError::InvalidInput(format!("target rate {target_hz} must be > 0")));
    }
    let n_out = resampled_len(w.len(), w.sample_rate_hz, target_hz);
    let step = w.sample_rate_hz / target_hz;
    let samples = (0..n_out).map(|i| interp_at(&w.samples, i as f64 * step)).collect();
    Ok(Waveform::new(samples, target_hz, w.label.clone()))
}

/// Z-score normalization over the full record using the population standard
/// deviation. A zero-variance input yields all zeros and `degenerate = true`
/// instead of an error, so dead channels do not abort batch extraction.
pub fn zscore<S: Scalar>(w: &Waveform<S>) -> Result<(Waveform<S>, bool), SignalError> {
    if w.len() < 2 {
        return Err(SignalError::InvalidInput(format!(
            "zscore needs at least 2 samples, got {}",
            w.len()
        )));
    }
    let n = w.len() as f64;
    let mean = w.samples.iter().map(|s| s.into_f64()).sum::<f64>() / n;
    let var = w.samples.iter().map(|s| (s.into_f64() - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    if std == 0.0 {
        let zeros = vec![S::zero(); w.len()];
        return Ok((Waveform::new(zeros, w.sample_rate_hz, w.label.clone()), true));
    }
    let samples = w.samples.iter().map(|s| S::of_f64((s.into_f64() - mean) / std)).collect();
    Ok((Waveform::new(samples, w.sample_rate_hz, w.label.clone()), false))
}

/// Resamples a binary mask by nearest-neighbor assignment, preserving the
/// {0, 1} value domain. Ties round toward the later input sample.
pub fn mask_resample_nearest(m: &BinaryMask, target_hz: f64) -> Result<BinaryMask, SignalError> {
    if m.is_empty() {
        return Err(SignalError::InvalidInput("mask_resample_nearest on empty mask".into()));
    }
    if target_hz.is_nan() || target_hz <= 0.0 {
        return Err(SignalError::InvalidInput(format!("target rate {target_hz} must be > 0")));
    }
    let rate = m.sample_rate_hz();
    let n_out = resampled_len(m.len(), rate, target_hz);
    let last = m.len() - 1;
    let values = (0..n_out)
        .map(|i| {
            let t = i as f64 / target_hz;
            let j = (t * rate + 0.5).floor() as usize;
            m.values[j.min(last)]
        })
        .collect();
    Ok(BinaryMask::new(values, target_hz))
}
