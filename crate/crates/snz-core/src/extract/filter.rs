//! Band-pass Bessel filter design and cascaded-biquad filtering.
//!
//! Design path: analog low-pass Bessel prototype normalized to -3 dB at
//! 1 rad/s, low-pass to band-pass transform (doubling the order), bilinear
//! transform pre-warped at the geometric center frequency, then factoring
//! into stable second-order sections.

use num_complex::Complex64;

use crate::num::Scalar;
use crate::signal::{SignalError, Waveform};

/// One second-order section: numerator (b0, b1, b2) over (1, a1, a2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b0: f64,
    pub b1: f64,
    pub b2: f64,
    pub a1: f64,
    pub a2: f64,
}

impl Biquad {
    /// Complex response at digital angular frequency `theta` (rad/sample).
    fn response(&self, theta: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -theta);
        let z2 = Complex64::from_polar(1.0, -2.0 * theta);
        let num = Complex64::new(self.b0, 0.0) + z1 * self.b1 + z2 * self.b2;
        let den = Complex64::new(1.0, 0.0) + z1 * self.a1 + z2 * self.a2;
        num / den
    }

    /// Moduli of the two denominator roots.
    pub fn pole_moduli(&self) -> [f64; 2] {
        let disc = Complex64::new(self.a1 * self.a1 - 4.0 * self.a2, 0.0).sqrt();
        let p1 = (-self.a1 + disc.re) / 2.0;
        let p1im = disc.im / 2.0;
        let p2 = (-self.a1 - disc.re) / 2.0;
        let p2im = -disc.im / 2.0;
        [(p1 * p1 + p1im * p1im).sqrt(), (p2 * p2 + p2im * p2im).sqrt()]
    }
}

/// Cascaded second-order sections plus the design metadata they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoeffs {
    pub sections: Vec<Biquad>,
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub fs_hz: f64,
}

impl FilterCoeffs {
    /// Largest pole modulus across all sections; stable iff < 1.
    pub fn max_pole_modulus(&self) -> f64 {
        self.sections
            .iter()
            .flat_map(|s| s.pole_moduli())
            .fold(0.0f64, |acc, m| acc.max(m))
    }

    /// Complex frequency response at `freq_hz`.
    pub fn response_at(&self, freq_hz: f64) -> Complex64 {
        let theta = 2.0 * std::f64::consts::PI * freq_hz / self.fs_hz;
        self.sections.iter().map(|s| s.response(theta)).product()
    }

    /// Group delay in seconds at `freq_hz`, by numeric phase differentiation.
    pub fn group_delay_s(&self, freq_hz: f64) -> f64 {
        let theta = 2.0 * std::f64::consts::PI * freq_hz / self.fs_hz;
        let delta = 1e-6;
        let hi = self.response_at((theta + delta) * self.fs_hz / (2.0 * std::f64::consts::PI));
        let lo = self.response_at((theta - delta) * self.fs_hz / (2.0 * std::f64::consts::PI));
        let mut dphi = hi.arg() - lo.arg();
        while dphi > std::f64::consts::PI {
            dphi -= 2.0 * std::f64::consts::PI;
        }
        while dphi < -std::f64::consts::PI {
            dphi += 2.0 * std::f64::consts::PI;
        }
        -dphi / (2.0 * delta) / self.fs_hz
    }
}

/// Coefficients of the reversed Bessel polynomial of degree `n`, ascending
/// powers. Built from theta_n = (2n-1) theta_{n-1} + s^2 theta_{n-2}.
fn reversed_bessel_poly(n: usize) -> Vec<f64> {
    let mut prev: Vec<f64> = vec![1.0]; // theta_0
    if n == 0 {
        return prev;
    }
    let mut cur: Vec<f64> = vec![1.0, 1.0]; // theta_1 = 1 + s
    for k in 2..=n {
        let mut next = vec![0.0; k + 1];
        let scale = (2 * k - 1) as f64;
        for (i, &c) in cur.iter().enumerate() {
            next[i] += scale * c;
        }
        for (i, &c) in prev.iter().enumerate() {
            next[i + 2] += c;
        }
        prev = cur;
        cur = next;
    }
    cur
}

/// Durand-Kerner root finding for a real polynomial in ascending coefficients.
fn poly_roots(coeffs: &[f64]) -> Vec<Complex64> {
    let n = coeffs.len() - 1;
    let lead = coeffs[n];
    let monic: Vec<f64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |x: Complex64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in monic.iter().rev() {
            acc = acc * x + c;
        }
        acc
    };
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..n).map(|k| seed.powu(k as u32 + 1)).collect();
    for _ in 0..200 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let mut denom = Complex64::new(1.0, 0.0);
            for j in 0..n {
                if j != i {
                    denom *= roots[i] - roots[j];
                }
            }
            let step = eval(roots[i]) / denom;
            roots[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-14 {
            break;
        }
    }
    roots
}

/// Analog Bessel low-pass prototype (zeros, poles, gain) normalized so the
/// magnitude response is -3 dB at 1 rad/s and unity at DC.
fn bessel_lowpass_prototype(order: usize) -> (Vec<Complex64>, f64) {
    let coeffs = reversed_bessel_poly(order);
    let poles = poly_roots(&coeffs);
    let k = coeffs[0]; // theta_n(0); DC gain k / prod(-p) = 1

    // -3 dB frequency of the delay-normalized prototype via bisection on
    // |den(jw)|^2 = 2 k^2.
    let den_mag2 = |w: f64| -> f64 {
        let jw = Complex64::new(0.0, w);
        let mut acc = Complex64::new(0.0, 0.0);
        for &c in coeffs.iter().rev() {
            acc = acc * jw + c;
        }
        acc.norm_sqr()
    };
    let target = 2.0 * k * k;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while den_mag2(hi) < target {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if den_mag2(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let w3 = 0.5 * (lo + hi);

    let scaled: Vec<Complex64> = poles.iter().map(|p| p / w3).collect();
    let k_scaled = k / w3.powi(order as i32);
    (scaled, k_scaled)
}

/// Designs the band-pass Bessel filter as cascaded second-order sections.
///
/// The defaults used by the breath pipeline are `low_hz = 0.1`,
/// `high_hz = 1/3`, `order = 3`; the band-pass transform doubles the order.
pub fn design_bessel_bandpass(
    low_hz: f64,
    high_hz: f64,
    order: usize,
    fs_hz: f64,
) -> Result<FilterCoeffs, SignalError> {
    if !(low_hz > 0.0 && low_hz < high_hz && high_hz < fs_hz / 2.0) {
        return Err(SignalError::InvalidBand(format!(
            "need 0 < low ({low_hz}) < high ({high_hz}) < fs/2 ({})",
            fs_hz / 2.0
        )));
    }
    if order == 0 || order > 12 {
        return Err(SignalError::InvalidBand(format!("unsupported filter order {order}")));
    }

    let (lp_poles, lp_gain) = bessel_lowpass_prototype(order);

    // Pre-warp anchored at the geometric center: the bilinear constant is
    // chosen so the center frequency maps exactly, and the band edges are
    // warped with the same constant.
    let pi = std::f64::consts::PI;
    let fc = (low_hz * high_hz).sqrt();
    let c = 2.0 * pi * fc / (pi * fc / fs_hz).tan();
    let w_lo = c * (pi * low_hz / fs_hz).tan();
    let w_hi = c * (pi * high_hz / fs_hz).tan();
    let wo = (w_lo * w_hi).sqrt();
    let bw = w_hi - w_lo;

    // low-pass -> band-pass: poles double, `order` zeros appear at s = 0
    let mut bp_poles = Vec::with_capacity(2 * order);
    for p in &lp_poles {
        let half = p * (bw / 2.0);
        let disc = (half * half - Complex64::new(wo * wo, 0.0)).sqrt();
        bp_poles.push(half + disc);
        bp_poles.push(half - disc);
    }
    let bp_gain = lp_gain * bw.powi(order as i32);

    // bilinear: s = c (z - 1) / (z + 1)
    let cc = Complex64::new(c, 0.0);
    let z_poles: Vec<Complex64> = bp_poles.iter().map(|p| (cc + p) / (cc - p)).collect();
    // analog zeros: `order` at s = 0 (map to z = +1), `order` at infinity
    // (map to z = -1)
    let num_prod: Complex64 = (0..order).map(|_| cc).product(); // prod(c - 0)
    let den_prod: Complex64 = bp_poles.iter().map(|p| cc - p).product();
    let k_z = bp_gain * (num_prod / den_prod).re;

    // pair conjugate poles into sections; each section takes one z=+1 and one
    // z=-1 zero, so its numerator is (z - 1)(z + 1) = z^2 - 1
    let mut pairs = pair_conjugate_poles(&z_poles)?;
    pairs.sort_by(|a, b| {
        let ma = a.0.norm_sqr().max(a.1.norm_sqr());
        let mb = b.0.norm_sqr().max(b.1.norm_sqr());
        ma.total_cmp(&mb)
    });

    let mut sections = Vec::with_capacity(order);
    for (idx, (p, q)) in pairs.iter().enumerate() {
        let a1 = -(p + q).re;
        let a2 = (p * q).re;
        let gain = if idx == 0 { k_z } else { 1.0 };
        sections.push(Biquad { b0: gain, b1: 0.0, b2: -gain, a1, a2 });
    }

    let coeffs = FilterCoeffs { sections, low_hz, high_hz, order, fs_hz };
    debug_assert!(coeffs.max_pole_modulus() < 1.0, "designed filter must be stable");
    Ok(coeffs)
}

/// Groups a conjugate-symmetric pole set into (p, conj p) pairs; leftover
/// real poles are paired with each other.
fn pair_conjugate_poles(
    poles: &[Complex64],
) -> Result<Vec<(Complex64, Complex64)>, SignalError> {
    let tol = 1e-9;
    let mut complex: Vec<Complex64> = poles.iter().copied().filter(|p| p.im > tol).collect();
    let mut reals: Vec<f64> = poles
        .iter()
        .filter(|p| p.im.abs() <= tol)
        .map(|p| p.re)
        .collect();
    complex.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
    reals.sort_by(|a, b| a.total_cmp(b));

    let mut pairs: Vec<(Complex64, Complex64)> = complex.iter().map(|p| (*p, p.conj())).collect();
    if !reals.len().is_multiple_of(2) {
        return Err(SignalError::InvalidBand(
            "band-pass pole set is not conjugate symmetric".into(),
        ));
    }
    for chunk in reals.chunks(2) {
        pairs.push((Complex64::new(chunk[0], 0.0), Complex64::new(chunk[1], 0.0)));
    }
    if 2 * pairs.len() != poles.len() {
        return Err(SignalError::InvalidBand("pole pairing lost a pole".into()));
    }
    Ok(pairs)
}

/// Applies the cascade causally in a single pass with zero initial state.
/// Output length equals input length.
pub fn apply_filter<S: Scalar>(
    coeffs: &FilterCoeffs,
    w: &Waveform<S>,
) -> Result<Waveform<S>, SignalError> {
    let rel = (w.sample_rate_hz - coeffs.fs_hz).abs() / coeffs.fs_hz.max(1e-12);
    if rel > 1e-9 {
        return Err(SignalError::RateMismatch {
            signal_hz: w.sample_rate_hz,
            expected_hz: coeffs.fs_hz,
        });
    }
    if w.is_empty() {
        return Err(SignalError::InvalidInput("apply_filter on empty waveform".into()));
    }
    let mut data: Vec<f64> = w.samples.iter().map(|s| s.into_f64()).collect();
    for s in &coeffs.sections {
        // direct form II transposed
        let (mut z1, mut z2) = (0.0f64, 0.0f64);
        for x in data.iter_mut() {
            let input = *x;
            let y = s.b0 * input + z1;
            z1 = s.b1 * input - s.a1 * y + z2;
            z2 = s.b2 * input - s.a2 * y;
            *x = y;
        }
    }
    let samples = data.into_iter().map(S::of_f64).collect();
    Ok(Waveform::new(samples, w.sample_rate_hz, w.label.clone()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fft::magnitude_spectrum;

    #[test]
    fn reversed_bessel_matches_known_orders() {
        assert_eq!(reversed_bessel_poly(2), vec![3.0, 3.0, 1.0]);
        assert_eq!(reversed_bessel_poly(3), vec![15.0, 15.0, 6.0, 1.0]);
        assert_eq!(reversed_bessel_poly(4), vec![105.0, 105.0, 45.0, 10.0, 1.0]);
    }

    #[test]
    fn cubic_roots_recovered() {
        // (x - 1)(x - 2)(x - 3) = x^3 - 6x^2 + 11x - 6
        let mut roots = poly_roots(&[-6.0, 11.0, -6.0, 1.0]);
        roots.sort_by(|a, b| a.re.total_cmp(&b.re));
        for (r, expect) in roots.iter().zip([1.0, 2.0, 3.0]) {
            assert!((r.re - expect).abs() < 1e-10 && r.im.abs() < 1e-10);
        }
    }

    #[test]
    fn prototype_is_unity_at_dc_and_half_power_at_one() {
        let (poles, k) = bessel_lowpass_prototype(3);
        let h = |w: f64| -> f64 {
            let jw = Complex64::new(0.0, w);
            let den: Complex64 = poles.iter().map(|p| jw - p).product();
            (Complex64::new(k, 0.0) / den).norm()
        };
        assert!((h(0.0) - 1.0).abs() < 1e-10);
        assert!((h(1.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn designed_filter_is_stable() {
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, 100.0).unwrap();
        assert_eq!(f.sections.len(), 3);
        assert!(f.max_pole_modulus() < 1.0);
    }

    #[test]
    fn band_edges_are_validated() {
        assert!(design_bessel_bandpass(0.0, 0.3, 3, 100.0).is_err());
        assert!(design_bessel_bandpass(0.4, 0.3, 3, 100.0).is_err());
        assert!(design_bessel_bandpass(0.1, 60.0, 3, 100.0).is_err());
    }

    #[test]
    fn impulse_response_gain_profile() {
        let fs = 100.0;
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, fs).unwrap();
        let n_fft = 1 << 18;
        let mut impulse = vec![0.0f64; n_fft];
        impulse[0] = 1.0;
        let out = apply_filter(&f, &Waveform::new(impulse, fs, "impulse")).unwrap();
        let mag = magnitude_spectrum(&out.samples, n_fft);
        let df = fs / n_fft as f64;
        let peak = mag.iter().copied().fold(0.0f64, f64::max);
        let at = |freq: f64| mag[(freq / df).round() as usize];
        let center = (0.1f64 * (1.0 / 3.0)).sqrt();
        assert!(at(center) >= 0.9 * peak, "center gain {} vs peak {}", at(center), peak);
        assert!(at(0.01) <= 0.1 * peak, "low stop gain {}", at(0.01));
        assert!(at(1.5) <= 0.1 * peak, "high stop gain {}", at(1.5));
    }

    #[test]
    fn filter_is_linear() {
        let fs = 100.0;
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, fs).unwrap();
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|i| ((i * 13 % 97) as f64 - 48.0) / 48.0).collect();
        let y: Vec<f64> = (0..n).map(|i| ((i * 7 % 51) as f64 - 25.0) / 25.0).collect();
        let (a, b) = (1.7, -0.6);
        let combo: Vec<f64> = x.iter().zip(&y).map(|(xi, yi)| a * xi + b * yi).collect();
        let fx = apply_filter(&f, &Waveform::new(x, fs, "x")).unwrap();
        let fy = apply_filter(&f, &Waveform::new(y, fs, "y")).unwrap();
        let fc = apply_filter(&f, &Waveform::new(combo, fs, "c")).unwrap();
        for i in 0..n {
            let expect = a * fx.samples[i] + b * fy.samples[i];
            assert!((fc.samples[i] - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn dc_is_rejected() {
        let fs = 100.0;
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, fs).unwrap();
        let n = (120.0 * fs) as usize;
        let w = Waveform::new(vec![1.0f64; n], fs, "dc");
        let out = apply_filter(&f, &w).unwrap();
        let tail_start = (60.0 * fs) as usize;
        let tail_max =
            out.samples[tail_start..].iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!(tail_max <= 1e-3, "tail magnitude {tail_max}");
    }

    #[test]
    fn in_band_sine_passes_near_unity() {
        let fs = 100.0;
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, fs).unwrap();
        let n = (300.0 * fs) as usize;
        let x: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 0.2 * i as f64 / fs).sin())
            .collect();
        let out = apply_filter(&f, &Waveform::new(x, fs, "sine")).unwrap();
        let tail = &out.samples[(200.0 * fs) as usize..];
        let amp = tail.iter().fold(0.0f64, |acc, &v| acc.max(v.abs()));
        assert!((0.7..=1.05).contains(&amp), "steady-state amplitude {amp}");
    }

    #[test]
    fn time_shift_equivariance_on_interior() {
        let fs = 100.0;
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, fs).unwrap();
        let n = 4000;
        let shift = 250usize;
        let x: Vec<f64> = (0..n)
            .map(|i| (0.2 * i as f64 / fs * 2.0 * std::f64::consts::PI).sin()
                + 0.3 * ((i * 17 % 113) as f64 / 113.0 - 0.5))
            .collect();
        let mut shifted = vec![0.0f64; shift];
        shifted.extend_from_slice(&x);
        let y = apply_filter(&f, &Waveform::new(x, fs, "x")).unwrap();
        let y_shifted = apply_filter(&f, &Waveform::new(shifted, fs, "xs")).unwrap();
        // compare away from the onset transient of the shifted run
        for i in 2000..n {
            let a = y.samples[i];
            let b = y_shifted.samples[i + shift];
            assert!((a - b).abs() < 1e-9, "at {i}: {a} vs {b}");
        }
    }

    #[test]
    fn rate_mismatch_is_an_error() {
        let f = design_bessel_bandpass(0.1, 1.0 / 3.0, 3, 100.0).unwrap();
        let w = Waveform::new(vec![0.0f64; 100], 50.0, "wrong");
        assert!(matches!(apply_filter(&f, &w), Err(SignalError::RateMismatch { .. })));
    }
}
