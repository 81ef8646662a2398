//! Real FFT helpers backed by a per-thread planner cache.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

thread_local! {
    static PLANNER: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

pub fn forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub fn inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    PLANNER.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// Forward transform of `x` zero-padded (or truncated) to length `n`.
/// Returns `n / 2 + 1` bins, unnormalized.
pub fn rfft(x: &[f64], n: usize) -> Vec<Complex64> {
    let plan = forward_plan(n);
    let mut input = vec![0.0; n];
    let m = x.len().min(n);
    input[..m].copy_from_slice(&x[..m]);
    let mut out = plan.make_output_vec();
    plan.process(&mut input, &mut out).expect("fft length is consistent");
    out
}

/// Inverse of [`rfft`], including the `1/n` normalization. The imaginary
/// parts of the DC and Nyquist bins are ignored.
pub fn irfft(spec: &[Complex64], n: usize) -> Vec<f64> {
    let plan = inverse_plan(n);
    let mut input = spec.to_vec();
    input.resize(n / 2 + 1, Complex64::new(0.0, 0.0));
    input[0].im = 0.0;
    if n % 2 == 0 {
        input[n / 2].im = 0.0;
    }
    let mut out = plan.make_output_vec();
    plan.process(&mut input, &mut out).expect("fft length is consistent");
    let scale = 1.0 / n as f64;
    out.iter_mut().for_each(|v| *v *= scale);
    out
}

/// Bin center frequencies for an `n`-point real transform.
pub fn bin_frequencies(n: usize, sample_rate: f64) -> Vec<f64> {
    (0..=n / 2).map(|k| k as f64 * sample_rate / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let x: Vec<f64> = (0..100).map(|i| ((i * 37) % 11) as f64 - 5.0).collect();
        let y = irfft(&rfft(&x, 128), 128);
        for i in 0..100 {
            assert!((x[i] - y[i]).abs() < 1e-12);
        }
        assert!(y[100..].iter().all(|v| v.abs() < 1e-12));
    }
}
