//! Frequency-domain signal synthesis and analysis helpers.
//!
//! Noise is synthesized by shaping white complex spectra and inverse-FFTing,
//! which keeps every draw deterministic given its RNG stream and makes the
//! planted in-band power exactly controllable.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex64, FftPlanner};

/// Synthesize a real signal of length `n` at `rate` Hz whose half-spectrum
/// magnitudes are given by `magnitude(f_hz)`; phases and bin amplitudes are
/// drawn from `rng` as complex standard normals.
pub fn shaped_noise(
    n: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
    magnitude: impl Fn(f64) -> f64,
) -> Vec<f64> {
    assert!(n >= 2 && n % 2 == 0, "signal length must be even and >= 2");
    let mut spec = vec![Complex64::new(0.0, 0.0); n];
    let half = n / 2;
    for k in 1..half {
        let f = k as f64 * rate / n as f64;
        let sigma = magnitude(f);
        let zr: f64 = rng.sample(StandardNormal);
        let zi: f64 = rng.sample(StandardNormal);
        let c = Complex64::new(zr, zi) * (sigma / std::f64::consts::SQRT_2);
        spec[k] = c;
        spec[n - k] = c.conj();
    }
    // Nyquist bin: real-valued.
    let f_nyq = half as f64 * rate / n as f64;
    let z: f64 = rng.sample(StandardNormal);
    spec[half] = Complex64::new(z * magnitude(f_nyq), 0.0);

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(n);
    ifft.process(&mut spec);
    // Unnormalized inverse; scale so bin sigma maps directly to time-domain
    // contribution of sqrt(1/n) per bin.
    let scale = 1.0 / (n as f64).sqrt();
    spec.iter().map(|c| c.re * scale).collect()
}

/// One-sided periodogram `|X_k|^2 / n` for `k = 0..n/2`.
pub fn periodogram(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(n);
    fft.process(&mut buf);
    buf[..=n / 2].iter().map(|c| c.norm_sqr() / n as f64).collect()
}

/// Total periodogram power in `[lo_hz, hi_hz]` for a signal at `rate` Hz.
pub fn band_power(x: &[f64], rate: f64, lo_hz: f64, hi_hz: f64) -> f64 {
    let n = x.len();
    let p = periodogram(x);
    let mut total = 0.0;
    for (k, pk) in p.iter().enumerate() {
        let f = k as f64 * rate / n as f64;
        if f >= lo_hz && f <= hi_hz {
            total += pk;
        }
    }
    total
}

/// Indices of periodogram bins falling inside `[lo_hz, hi_hz]`.
pub fn band_bins(n: usize, rate: f64, lo_hz: f64, hi_hz: f64) -> Vec<usize> {
    (0..=n / 2)
        .filter(|&k| {
            let f = k as f64 * rate / n as f64;
            f >= lo_hz && f <= hi_hz
        })
        .collect()
}

/// Two-sample permutation test on the difference of means. Returns the
/// p-value of |mean(a) - mean(b)| under `perms` seeded label permutations.
pub fn permutation_test(a: &[f64], b: &[f64], perms: usize, rng: &mut ChaCha8Rng) -> f64 {
    let observed = mean(a) - mean(b);
    let observed = observed.abs();
    let mut pool: Vec<f64> = a.iter().chain(b.iter()).copied().collect();
    let na = a.len();
    let mut hits = 0usize;
    for _ in 0..perms {
        // Partial Fisher-Yates: shuffle the first na positions.
        for i in 0..na {
            let j = rng.gen_range(i..pool.len());
            pool.swap(i, j);
        }
        let stat = (mean(&pool[..na]) - mean(&pool[na..])).abs();
        if stat >= observed {
            hits += 1;
        }
    }
    (hits + 1) as f64 / (perms + 1) as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}
