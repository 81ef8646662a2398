//! Monaural spectral distance between two signals from their auditory
//! excitation patterns.

use serde::{Deserialize, Serialize};

use crate::dsp::fft::rfft;
use crate::dsp::{erb_bandwidth, erb_number, erb_number_to_hz};

/// Weights of the absolute, ripple and slope terms, and the dB value that
/// maps to a distance of 1.
const W_ABSOLUTE: f64 = 0.5;
const W_RIPPLE: f64 = 0.3;
const W_SLOPE: f64 = 0.2;
const DB_SCALE: f64 = 10.0;
/// Slope term is the fitted slope over this many ERB.
const SLOPE_SPAN_ERB: f64 = 10.0;

const LOW_HZ: f64 = 100.0;
const HIGH_HZ: f64 = 10_000.0;
const STEP_ERB: f64 = 0.5;
const WELCH_LEN: usize = 4096;
/// Bands this far below the reference maximum do not contribute.
const RANGE_DB: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDistance {
    pub value: f64,
    pub absolute_db: f64,
    pub ripple_db: f64,
    pub slope_db: f64,
}

fn welch_power(x: &[f64]) -> Vec<f64> {
    let n = WELCH_LEN;
    let hop = n / 2;
    let w: Vec<f64> = (0..n).map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos()).collect();
    let mut acc = vec![0.0; n / 2 + 1];
    let mut start = 0;
    let mut frames = 0;
    loop {
        let seg: Vec<f64> = (0..n).map(|i| x.get(start + i).copied().unwrap_or(0.0) * w[i]).collect();
        for (a, v) in acc.iter_mut().zip(rfft(&seg, n)) {
            *a += v.norm_sqr();
        }
        frames += 1;
        start += hop;
        if start + n > x.len() {
            break;
        }
    }
    acc.iter_mut().for_each(|a| *a /= frames as f64);
    acc
}

/// Excitation pattern in dB at ERB-spaced centers from 100 Hz to 10 kHz,
/// using rounded-exponential auditory filters on the long-term spectrum.
/// Returns `(erb_numbers, levels_db)`.
pub fn excitation_pattern(x: &[f64], sample_rate: f64) -> (Vec<f64>, Vec<f64>) {
    let p = welch_power(x);
    let df = sample_rate / WELCH_LEN as f64;
    let mut z = erb_number(LOW_HZ);
    let (mut zs, mut levels) = (Vec::new(), Vec::new());
    while erb_number_to_hz(z) <= HIGH_HZ {
        let fc = erb_number_to_hz(z);
        let pr = 4.0 * fc / erb_bandwidth(fc);
        let mut e = 0.0;
        let k0 = ((fc * 0.2) / df).floor() as usize;
        let k1 = (((fc * 1.8) / df).ceil() as usize).min(p.len() - 1);
        for (k, pk) in p.iter().enumerate().take(k1 + 1).skip(k0.max(1)) {
            let g = ((k as f64 * df - fc) / fc).abs();
            e += pk * (1.0 + pr * g) * (-pr * g).exp();
        }
        zs.push(z);
        levels.push(10.0 * e.max(1e-300).log10());
        z += STEP_ERB;
    }
    (zs, levels)
}

/// Distance of `test` from `reference` after matching their overall
/// levels. Zero for identical or merely scaled signals.
pub fn spectral_distance(reference: &[f64], test: &[f64], sample_rate: f64) -> SpectralDistance {
    let (z, er) = excitation_pattern(reference, sample_rate);
    let (_, et) = excitation_pattern(test, sample_rate);
    let top = er.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let idx: Vec<usize> = (0..z.len()).filter(|&i| er[i] > top - RANGE_DB).collect();
    if idx.len() < 2 {
        return SpectralDistance {
            value: 0.0,
            absolute_db: 0.0,
            ripple_db: 0.0,
            slope_db: 0.0,
        };
    }
    let n = idx.len() as f64;
    let raw: Vec<f64> = idx.iter().map(|&i| et[i] - er[i]).collect();
    let offset = raw.iter().sum::<f64>() / n;
    let d: Vec<f64> = raw.iter().map(|v| v - offset).collect();
    let zz: Vec<f64> = idx.iter().map(|&i| z[i]).collect();
    let zm = zz.iter().sum::<f64>() / n;
    let sxx: f64 = zz.iter().map(|v| (v - zm).powi(2)).sum();
    let sxy: f64 = zz.iter().zip(&d).map(|(a, b)| (a - zm) * b).sum();
    let slope = sxy / sxx;
    let absolute_db = d.iter().map(|v| v.abs()).sum::<f64>() / n;
    let ripple_db = (zz.iter().zip(&d).map(|(a, b)| (b - slope * (a - zm)).powi(2)).sum::<f64>() / n).sqrt();
    let slope_db = slope.abs() * SLOPE_SPAN_ERB;
    SpectralDistance {
        value: (W_ABSOLUTE * absolute_db + W_RIPPLE * ripple_db + W_SLOPE * slope_db) / DB_SCALE,
        absolute_db,
        ripple_db,
        slope_db,
    }
}
