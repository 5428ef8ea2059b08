//! Minimal radix-2 FFT used by the Welch spectral diagnostic and by tests
//! that measure filter responses from impulse data.

/// In-place iterative radix-2 Cooley-Tukey transform on interleaved
/// (re, im) pairs. `n` must be a power of two.
pub fn fft_inplace(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    assert_eq!(n, im.len());
    assert!(n.is_power_of_two(), "fft length {n} must be a power of two");
    if n <= 1 {
        return;
    }

    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            re.swap(i, j);
            im.swap(i, j);
        }
    }

    let mut len = 2;
    while len <= n {
        let ang = -2.0 * std::f64::consts::PI / len as f64;
        let (w_re, w_im) = (ang.cos(), ang.sin());
        for start in (0..n).step_by(len) {
            let mut cur_re = 1.0;
            let mut cur_im = 0.0;
            for k in 0..len / 2 {
                let a = start + k;
                let b = start + k + len / 2;
                let t_re = re[b] * cur_re - im[b] * cur_im;
                let t_im = re[b] * cur_im + im[b] * cur_re;
                re[b] = re[a] - t_re;
                im[b] = im[a] - t_im;
                re[a] += t_re;
                im[a] += t_im;
                let next_re = cur_re * w_re - cur_im * w_im;
                cur_im = cur_re * w_im + cur_im * w_re;
                cur_re = next_re;
            }
        }
        len <<= 1;
    }
}

/// Magnitude spectrum of a real signal zero-padded to `n_fft` points.
/// Returns `n_fft / 2 + 1` one-sided magnitudes.
pub fn magnitude_spectrum(signal: &[f64], n_fft: usize) -> Vec<f64> {
    let mut re = vec![0.0; n_fft];
    let mut im = vec![0.0; n_fft];
    let copy = signal.len().min(n_fft);
    re[..copy].copy_from_slice(&signal[..copy]);
    fft_inplace(&mut re, &mut im);
    (0..=n_fft / 2).map(|k| (re[k] * re[k] + im[k] * im[k]).sqrt()).collect()
}
