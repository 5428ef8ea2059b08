//! Synthetic parallel-record generator: a clean cardiac/respiratory-effort
//! style record and a degraded bed-sensor style record of the same
//! underlying night, with full ground truth for oracle tests.
//!
//! Stage physiology (heart-rate means, breathing rates, movement propensity)
//! is chosen to give the classifier learnable structure; the values are
//! artifact defaults, not measurements.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::extract::{BeatAnchor, BeatSeries, CHANNEL_CARDIAC, CHANNEL_RAW, CHANNEL_RESP};
use crate::extract::RawRecord;
use crate::rng::derive_rng;
use crate::signal::{Stage, StageSequence, Waveform, COMPONENT_HZ, EPOCH_S};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// Generator parameters; `..Default::default()` is the pinned configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub duration_s: f64,
    pub raw_rate_hz: f64,
    /// Stationary stage distribution targeted by the transition chain.
    pub stage_priors: [f64; 5],
    /// Per-epoch probability of jumping to a fresh prior draw; the chain
    /// `P = (1 - s) I + s 1 pi^T` has exactly `stage_priors` as its
    /// stationary distribution for any s in (0, 1].
    pub transition_jump: f64,
    /// Per-stage heart rate means in beats per minute (W, N1, N2, N3, R).
    pub hr_mean_bpm: [f64; 5],
    /// Per-stage RR jitter (ms, stationary std of the AR(1) process); REM
    /// variability is double the NREM stages.
    pub rr_jitter_ms: [f64; 5],
    pub rr_ar_coeff: f64,
    /// Per-stage breathing rate in Hz.
    pub breath_rate_hz: [f64; 5],
    /// Per-stage, per-epoch probability of a movement burst.
    pub movement_rate: [f64; 5],
    pub movement_min_s: f64,
    pub movement_max_s: f64,
    /// Bursts never start before this time so the movement detector's
    /// baseline has settled.
    pub movement_settle_s: f64,
    pub movement_amp: f64,
    pub clean_snr_db: f64,
    pub degraded_snr_db: f64,
    /// Slow multiplicative amplitude drift of the degraded record.
    pub drift_depth: f64,
    pub drift_period_s: f64,
    /// Probability that a beat's wavelet is missing from the degraded record.
    pub missed_beat_prob: f64,
    /// Per-record clock-rate miscalibration of the degraded sensor, drawn
    /// uniformly from this range: the device claims the nominal rate but its
    /// clock runs at `nominal * skew`, so measured intervals scale by the
    /// skew and the recording timebase stretches with it. This is the
    /// systematic part of the sensor gap that random amplification and speed
    /// perturbation are built to absorb.
    pub clock_skew_low: f64,
    pub clock_skew_high: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: 3600.0,
            raw_rate_hz: 100.0,
            stage_priors: [0.33, 0.03, 0.37, 0.14, 0.12],
            transition_jump: 0.10,
            hr_mean_bpm: [70.0, 65.0, 60.0, 58.0, 72.0],
            rr_jitter_ms: [30.0, 20.0, 20.0, 20.0, 40.0],
            rr_ar_coeff: 0.9,
            breath_rate_hz: [0.28, 0.22, 0.22, 0.22, 0.30],
            movement_rate: [0.35, 0.05, 0.02, 0.02, 0.05],
            movement_min_s: 2.0,
            movement_max_s: 10.0,
            movement_settle_s: 40.0,
            movement_amp: 15.0,
            clean_snr_db: 20.0,
            degraded_snr_db: 8.0,
            drift_depth: 0.3,
            drift_period_s: 600.0,
            missed_beat_prob: 0.08,
            clock_skew_low: 0.93,
            clock_skew_high: 1.07,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        if self.duration_s < 60.0 {
            return Err(SynthError::InvalidConfig(format!(
                "duration {} s too short (need >= 60 s)",
                self.duration_s
            )));
        }
        if self.raw_rate_hz.is_nan() || self.raw_rate_hz <= 20.0 {
            return Err(SynthError::InvalidConfig(format!(
                "raw rate {} Hz too low for cardiac content",
                self.raw_rate_hz
            )));
        }
        let prior_sum: f64 = self.stage_priors.iter().sum();
        if prior_sum <= 0.0 || self.stage_priors.iter().any(|&p| p < 0.0) {
            return Err(SynthError::InvalidConfig("stage priors must be a distribution".into()));
        }
        if !(0.0 < self.transition_jump && self.transition_jump <= 1.0) {
            return Err(SynthError::InvalidConfig("transition_jump must be in (0, 1]".into()));
        }
        if self.hr_mean_bpm.iter().any(|&b| !(20.0..=200.0).contains(&b)) {
            return Err(SynthError::InvalidConfig("heart rates out of range".into()));
        }
        if !(0.5 <= self.clock_skew_low
            && self.clock_skew_low <= self.clock_skew_high
            && self.clock_skew_high <= 2.0)
        {
            return Err(SynthError::InvalidConfig("clock skew range invalid".into()));
        }
        Ok(())
    }

    /// Stage priors rescaled to sum to exactly one (the defaults carry the
    /// rounding of their percentage source).
    pub fn normalized_priors(&self) -> [f64; 5] {
        let total: f64 = self.stage_priors.iter().sum();
        let mut out = self.stage_priors;
        for p in &mut out {
            *p /= total;
        }
        out
    }

    /// Row-stochastic transition matrix realized by the jump chain.
    pub fn transition_matrix(&self) -> [[f64; 5]; 5] {
        let priors = self.normalized_priors();
        let mut m = [[0.0; 5]; 5];
        for (i, row) in m.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.transition_jump * priors[j]
                    + if i == j { 1.0 - self.transition_jump } else { 0.0 };
            }
        }
        m
    }
}

/// Everything the generator knows about the night it synthesized.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    /// True beat instants in seconds, strictly increasing.
    pub beat_times_s: Vec<f64>,
    /// Interval lengths in ms; `rr_ms[i]` is the gap ending at beat `i + 1`.
    pub rr_ms: Vec<f64>,
    /// Breathing phase in radians at 4 Hz.
    pub breath_phase: Vec<f64>,
    /// Non-overlapping movement windows in seconds.
    pub movement_intervals: Vec<(f64, f64)>,
    pub stages: StageSequence,
}

impl GroundTruth {
    /// True anchors in the same form the beat pipeline produces.
    pub fn beat_series(&self) -> BeatSeries {
        BeatSeries::new(
            self.beat_times_s
                .windows(2)
                .map(|w| BeatAnchor { end_time_s: w[1], interval_ms: (w[1] - w[0]) * 1000.0 })
                .collect(),
        )
    }

    /// The true interpolated inter-beat-interval wave at 4 Hz.
    pub fn true_ibi_wave(&self, duration_s: f64) -> Waveform<f64> {
        crate::extract::interpolate_ibi(&self.beat_series(), duration_s)
            .expect("truth has at least one anchor")
    }

    /// Reference breath signal `sin(phase)` at 4 Hz.
    pub fn breath_wave(&self) -> Waveform<f64> {
        Waveform::new(
            self.breath_phase.iter().map(|p| p.sin()).collect(),
            COMPONENT_HZ,
            "breath-truth",
        )
    }
}

/// One generated night.
#[derive(Debug, Clone)]
pub struct SynthOutput {
    /// Clinical-style record: separate cardiac and respiratory channels.
    pub clean: RawRecord<f64>,
    /// Bed-sensor-style record: one mixed, noisier channel with drift and
    /// missing beats.
    pub degraded: RawRecord<f64>,
    pub truth: GroundTruth,
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn draw_stage(priors: &[f64; 5], rng: &mut ChaCha8Rng) -> Stage {
    let x: f64 = rng.random_range(0.0..1.0);
    let mut acc = 0.0;
    for (i, &p) in priors.iter().enumerate() {
        acc += p;
        if x < acc {
            return Stage::ALL[i];
        }
    }
    Stage::Rem
}

/// Samples `epochs` stage labels from the configured jump chain, starting at
/// the stationary distribution.
pub fn sample_stages(cfg: &SynthConfig, epochs: usize, rng: &mut ChaCha8Rng) -> StageSequence {
    let priors = cfg.normalized_priors();
    let mut stages = Vec::with_capacity(epochs);
    let mut current = draw_stage(&priors, rng);
    stages.push(current);
    for _ in 1..epochs {
        if rng.random_range(0.0..1.0) < cfg.transition_jump {
            current = draw_stage(&priors, rng);
        }
        stages.push(current);
    }
    StageSequence::new(stages)
}

fn stage_at(stages: &StageSequence, t: f64) -> Stage {
    let idx = (t / EPOCH_S as f64) as usize;
    stages.stages[idx.min(stages.len() - 1)]
}

/// Adds one Gaussian-windowed 5 Hz wavelet centered at `t0`.
fn add_wavelet(samples: &mut [f64], fs: f64, t0: f64, amp: f64) {
    const WIDTH_S: f64 = 0.04;
    const SUPPORT_S: f64 = 0.2;
    let lo = (((t0 - SUPPORT_S) * fs).ceil().max(0.0)) as usize;
    let hi = ((((t0 + SUPPORT_S) * fs).floor()) as usize).min(samples.len().saturating_sub(1));
    for (i, sample) in samples.iter_mut().enumerate().take(hi + 1).skip(lo) {
        let dt = i as f64 / fs - t0;
        *sample += amp
            * (-dt * dt / (2.0 * WIDTH_S * WIDTH_S)).exp()
            * (2.0 * std::f64::consts::PI * 5.0 * dt).sin();
    }
}

fn rms(samples: &[f64]) -> f64 {
    (samples.iter().map(|v| v * v).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Adds white noise at `snr_db` relative to `reference_rms` (the rms of the
/// physiological part, excluding movement bursts, so bursts do not inflate
/// the noise level).
fn add_noise(samples: &mut [f64], reference_rms: f64, snr_db: f64, rng: &mut ChaCha8Rng) {
    let noise_std = reference_rms.max(1e-12) / 10f64.powf(snr_db / 20.0);
    for v in samples.iter_mut() {
        *v += noise_std * normal(rng);
    }
}

/// Generates one parallel clean/degraded record pair with ground truth.
/// Fully deterministic in `cfg` (including the seed).
pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let fs = cfg.raw_rate_hz;
    let n = (cfg.duration_s * fs).round() as usize;
    let epochs = (cfg.duration_s / EPOCH_S as f64).floor() as usize;

    // stages from the jump chain, started at the stationary distribution
    let mut stage_rng = derive_rng(cfg.seed, 0);
    let stages = sample_stages(cfg, epochs, &mut stage_rng);

    // beat times: per-stage mean RR plus AR(1) jitter, clipped to the
    // plausible range so interval cleaning is the identity on the truth
    let mut rr_rng = derive_rng(cfg.seed, 1);
    let mut beat_times = Vec::new();
    let mut rr_ms = Vec::new();
    let mut ar_state = 0.0f64;
    let mut t = 0.3;
    beat_times.push(t);
    loop {
        let stage = stage_at(&stages, t).code() as usize;
        let innovation_scale = (1.0 - cfg.rr_ar_coeff * cfg.rr_ar_coeff).sqrt();
        ar_state = cfg.rr_ar_coeff * ar_state
            + cfg.rr_jitter_ms[stage] * innovation_scale * normal(&mut rr_rng);
        let rr = (60_000.0 / cfg.hr_mean_bpm[stage] + ar_state).clamp(300.0, 2000.0);
        let next = t + rr / 1000.0;
        if next >= cfg.duration_s - 0.3 {
            break;
        }
        beat_times.push(next);
        rr_ms.push(rr);
        t = next;
    }

    // continuous breathing phase, integrated across stage changes
    let n4 = (cfg.duration_s * COMPONENT_HZ).floor() as usize;
    let mut breath_phase = Vec::with_capacity(n4);
    let mut phase = 0.0f64;
    for i in 0..n4 {
        breath_phase.push(phase);
        let time = i as f64 / COMPONENT_HZ;
        phase += 2.0 * std::f64::consts::PI * cfg.breath_rate_hz
            [stage_at(&stages, time).code() as usize]
            / COMPONENT_HZ;
    }

    // movement bursts, concentrated in wake, none before the settle time
    let mut move_rng = derive_rng(cfg.seed, 2);
    let mut movement_intervals: Vec<(f64, f64)> = Vec::new();
    for e in 0..epochs {
        let stage = stages.stages[e].code() as usize;
        if move_rng.random_range(0.0..1.0) >= cfg.movement_rate[stage] {
            continue;
        }
        let epoch_start = (e * EPOCH_S) as f64;
        let start = epoch_start + move_rng.random_range(0.0..EPOCH_S as f64 - cfg.movement_min_s);
        let length = move_rng.random_range(cfg.movement_min_s..=cfg.movement_max_s);
        let end = (start + length).min(cfg.duration_s);
        if start < cfg.movement_settle_s {
            continue;
        }
        if let Some(&(_, prev_end)) = movement_intervals.last() {
            if start <= prev_end + 2.0 {
                continue;
            }
        }
        movement_intervals.push((start, end));
    }

    // deterministic signal parts
    let mut cardiac_part = vec![0.0f64; n];
    for &bt in &beat_times {
        add_wavelet(&mut cardiac_part, fs, bt, 1.0);
    }
    let breath_amp = 0.5;
    let breath_part: Vec<f64> = (0..n)
        .map(|i| {
            // re-integrate at the raw rate for smooth channel synthesis
            let idx4 = ((i as f64 / fs) * COMPONENT_HZ) as usize;
            let frac = (i as f64 / fs) * COMPONENT_HZ - idx4 as f64;
            let p0 = breath_phase[idx4.min(n4 - 1)];
            let p1 = breath_phase[(idx4 + 1).min(n4 - 1)];
            breath_amp * (p0 + (p1 - p0) * frac).sin()
        })
        .collect();

    let mut burst_rng = derive_rng(cfg.seed, 3);
    let mut make_burst_noise = |intervals: &[(f64, f64)]| -> Vec<f64> {
        let mut out = vec![0.0f64; n];
        for &(start, end) in intervals {
            let lo = (start * fs) as usize;
            let hi = ((end * fs) as usize).min(n);
            for v in out[lo..hi].iter_mut() {
                *v = cfg.movement_amp * burst_rng.random_range(-1.0..1.0);
            }
        }
        out
    };
    let burst_cardiac = make_burst_noise(&movement_intervals);
    let burst_resp = make_burst_noise(&movement_intervals);
    let burst_raw = make_burst_noise(&movement_intervals);

    // clean record: separate channels
    let cardiac_rms = rms(&cardiac_part);
    let breath_rms = rms(&breath_part);
    let mut clean_cardiac: Vec<f64> =
        cardiac_part.iter().zip(&burst_cardiac).map(|(a, b)| a + b).collect();
    let mut clean_resp: Vec<f64> =
        breath_part.iter().zip(&burst_resp).map(|(a, b)| a + b).collect();
    let mut clean_noise_rng = derive_rng(cfg.seed, 4);
    add_noise(&mut clean_cardiac, cardiac_rms, cfg.clean_snr_db, &mut clean_noise_rng);
    add_noise(&mut clean_resp, breath_rms, cfg.clean_snr_db, &mut clean_noise_rng);

    // degraded record: mixed channel, missing wavelets, drift, more noise
    let mut missed_rng = derive_rng(cfg.seed, 5);
    let mut degraded_cardiac = vec![0.0f64; n];
    for &bt in &beat_times {
        if missed_rng.random_range(0.0..1.0) >= cfg.missed_beat_prob {
            add_wavelet(&mut degraded_cardiac, fs, bt, 1.0);
        }
    }
    let mut degraded_rng = derive_rng(cfg.seed, 6);
    let drift_phase = degraded_rng.random_range(0.0..2.0 * std::f64::consts::PI);
    let degraded_real: Vec<f64> = (0..n)
        .map(|i| {
            let time = i as f64 / fs;
            let drift = 1.0
                + cfg.drift_depth
                    * (2.0 * std::f64::consts::PI * time / cfg.drift_period_s + drift_phase)
                        .sin();
            (degraded_cardiac[i] + breath_part[i] + burst_raw[i]) * drift
        })
        .collect();

    // clock skew: the degraded device samples the same night with a
    // miscalibrated clock; device sample i sits at real index i / skew
    let skew = degraded_rng.random_range(cfg.clock_skew_low..=cfg.clock_skew_high);
    let n_dev = (n as f64 * skew).floor() as usize;
    let mut degraded_raw: Vec<f64> = (0..n_dev)
        .map(|i| crate::signal::interp_at(&degraded_real, i as f64 / skew))
        .collect();
    let physio_rms = (cardiac_rms * cardiac_rms + breath_rms * breath_rms).sqrt();
    add_noise(&mut degraded_raw, physio_rms, cfg.degraded_snr_db, &mut degraded_rng);

    // the degraded hypnogram lives on the device timebase: each device epoch
    // center maps back to real time through the skew
    let epochs_dev = (n_dev as f64 / fs / EPOCH_S as f64).floor() as usize;
    let stages_dev = StageSequence::new(
        (0..epochs_dev)
            .map(|i| stage_at(&stages, EPOCH_S as f64 * (i as f64 + 0.5) / skew))
            .collect(),
    );

    let truth = GroundTruth {
        beat_times_s: beat_times,
        rr_ms,
        breath_phase,
        movement_intervals,
        stages: stages.clone(),
    };
    let clean = RawRecord {
        id: format!("synth-{:08x}-clean", cfg.seed),
        channels: vec![
            Waveform::new(clean_cardiac, fs, CHANNEL_CARDIAC),
            Waveform::new(clean_resp, fs, CHANNEL_RESP),
        ],
        stages: Some(stages.clone()),
    };
    let degraded = RawRecord {
        id: format!("synth-{:08x}-degraded", cfg.seed),
        channels: vec![Waveform::new(degraded_raw, fs, CHANNEL_RAW)],
        stages: Some(stages_dev),
    };
    Ok(SynthOutput { clean, degraded, truth })
}
