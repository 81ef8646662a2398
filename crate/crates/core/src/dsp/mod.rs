//! Signal-processing building blocks shared by rendering, the hearing-aid
//! algorithms and the metrics.

pub mod bands;
pub mod convolve;
pub mod fft;
pub mod fracdelay;
pub mod stft;

pub use bands::{erb_bandwidth, erb_number, erb_number_to_hz, BandGrid};
pub use convolve::{convolve_full, Convolver};
pub use fracdelay::{delay_signal, FRACTIONAL_DELAY_TAPS};
pub use stft::{Spectrogram, Stft};

/// Mean square of a signal; zero for an empty slice.
pub fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

pub fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

pub fn db_power(p: f64) -> f64 {
    10.0 * p.log10()
}

pub fn db_to_amp(db: f64) -> f64 {
    10f64.powf(db / 20.0)
}

/// Modified Bessel function of the first kind, order zero (power series).
pub fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k as f64 * k as f64);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
