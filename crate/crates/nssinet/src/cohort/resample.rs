//! Anti-aliased downsampling via windowed-sinc polyphase interpolation.
//!
//! The rate ratio is reduced to `L/M`; output sample `j` sits at input
//! position `j*M/L`, evaluated exactly in integer arithmetic so the polyphase
//! tap offsets repeat with period `L` and the result is deterministic. Each
//! output's tap weights are renormalized to sum to one, which makes constant
//! signals a fixed point of the resampler everywhere, including boundaries.

use ndarray::Array2;

use super::Trial;
use crate::error::{Error, Result};

/// Half-width of the sinc kernel, in input samples.
const KERNEL_HALF_WIDTH: usize = 48;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn blackman(x: f64) -> f64 {
    // x in [-1, 1]
    let t = std::f64::consts::PI * (x + 1.0);
    0.42 - 0.5 * (t).cos() + 0.08 * (2.0 * t).cos()
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let p = std::f64::consts::PI * x;
        p.sin() / p
    }
}

/// Resample a multichannel signal from `from_rate` to `to_rate` (Hz).
/// Only downsampling (or the identity) is supported; the resulting length
/// `len * to_rate / from_rate` must be an integer.
pub fn resample_signal(data: &Array2<f32>, from_rate: u32, to_rate: u32) -> Result<Array2<f32>> {
    if from_rate == 0 || to_rate == 0 {
        return Err(Error::Config("sampling rates must be positive".into()));
    }
    if to_rate > from_rate {
        return Err(Error::Config(format!(
            "upsampling unsupported: requested {to_rate} Hz from {from_rate} Hz"
        )));
    }
    if to_rate == from_rate {
        return Ok(data.clone());
    }
    let (channels, in_len) = data.dim();
    let out_len_num = in_len as u64 * to_rate as u64;
    if out_len_num % from_rate as u64 != 0 {
        return Err(Error::Shape(format!(
            "resampling {in_len} samples from {from_rate} to {to_rate} Hz gives a non-integer length"
        )));
    }
    let out_len = (out_len_num / from_rate as u64) as usize;

    let g = gcd(to_rate as u64, from_rate as u64);
    let l = (to_rate as u64 / g) as usize; // interpolation factor
    let m = (from_rate as u64 / g) as usize; // decimation factor

    // Low-pass cutoff in cycles per input sample; to_rate < from_rate here.
    let cutoff = 0.5 * (to_rate as f64) / (from_rate as f64);
    let half = KERNEL_HALF_WIDTH as f64;

    // Precompute the L polyphase tap rows: output j has fractional offset
    // (j*M mod L)/L against input sample floor(j*M/L).
    let taps_per_side = KERNEL_HALF_WIDTH as isize;
    let mut phases: Vec<Vec<f64>> = Vec::with_capacity(l);
    for phase in 0..l {
        let frac = phase as f64 / l as f64;
        let mut row = Vec::with_capacity(2 * KERNEL_HALF_WIDTH + 1);
        for k in -taps_per_side..=taps_per_side {
            // distance from the output position to input sample (base + k)
            let d = k as f64 - frac;
            let w = if d.abs() <= half { blackman(d / half) } else { 0.0 };
            row.push(2.0 * cutoff * sinc(2.0 * cutoff * d) * w);
        }
        phases.push(row);
    }

    let mut out = Array2::<f32>::zeros((channels, out_len));
    for ch in 0..channels {
        let x = data.row(ch);
        for j in 0..out_len {
            let num = j * m;
            let base = (num / l) as isize;
            let phase = num % l;
            let row = &phases[phase];
            let mut acc = 0.0f64;
            let mut wsum = 0.0f64;
            for (i, k) in (-taps_per_side..=taps_per_side).enumerate() {
                let s = base + k;
                if s < 0 || s >= in_len as isize {
                    continue;
                }
                let w = row[i];
                acc += w * f64::from(x[s as usize]);
                wsum += w;
            }
            out[[ch, j]] = if wsum.abs() > 1e-12 { (acc / wsum) as f32 } else { 0.0 };
        }
    }
    Ok(out)
}

/// Resample a trial to `to_rate`.
pub fn resample(trial: &Trial, to_rate: u32) -> Result<Trial> {
    if to_rate == trial.rate() {
        return Ok(trial.clone());
    }
    let data = resample_signal(trial.data(), trial.rate(), to_rate)?;
    Trial::new(data, to_rate)
}
