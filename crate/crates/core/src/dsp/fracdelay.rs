//! Band-limited fractional delay with a Kaiser-windowed sinc kernel.

use super::bessel_i0;

pub const FRACTIONAL_DELAY_TAPS: usize = 64;
const HALF: i64 = (FRACTIONAL_DELAY_TAPS / 2) as i64;
const KAISER_BETA: f64 = 8.0;

/// Kernel taps for a delay of `frac` samples, `0 <= frac < 1`. Tap `j`
/// multiplies `x[n - j]` for `j` in `-(HALF - 1) ..= HALF`.
fn kernel(frac: f64) -> [f64; FRACTIONAL_DELAY_TAPS] {
    let mut h = [0.0; FRACTIONAL_DELAY_TAPS];
    let norm = bessel_i0(KAISER_BETA);
    for (i, tap) in h.iter_mut().enumerate() {
        let j = i as i64 - (HALF - 1);
        let t = j as f64 - frac;
        let sinc = if t.abs() < 1e-12 {
            1.0
        } else {
            (std::f64::consts::PI * t).sin() / (std::f64::consts::PI * t)
        };
        let u = t / HALF as f64;
        let win = if u.abs() < 1.0 {
            bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / norm
        } else {
            0.0
        };
        *tap = sinc * win;
    }
    let sum: f64 = h.iter().sum();
    h.iter_mut().for_each(|v| *v /= sum);
    h
}

/// Delays `x` by `delay` samples (any real value, negative reads ahead) and
/// returns `out_len` samples. Integer delays are exact copies.
pub fn delay_signal(x: &[f64], delay: f64, out_len: usize) -> Vec<f64> {
    let mut y = vec![0.0; out_len];
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as i64;
    let n_in = x.len() as i64;
    if frac < 1e-12 {
        for (n, out) in y.iter_mut().enumerate() {
            let src = n as i64 - whole;
            if (0..n_in).contains(&src) {
                *out = x[src as usize];
            }
        }
        return y;
    }
    let h = kernel(frac);
    for (n, out) in y.iter_mut().enumerate() {
        let base = n as i64 - whole;
        let mut acc = 0.0;
        for (i, &tap) in h.iter().enumerate() {
            let src = base - (i as i64 - (HALF - 1));
            if (0..n_in).contains(&src) {
                acc += tap * x[src as usize];
            }
        }
        *out = acc;
    }
    y
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::fft::rfft;

    #[test]
    fn integer_delay_is_exact() {
        let x: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let y = delay_signal(&x, 7.0, 60);
        assert!(y[..7].iter().all(|&v| v == 0.0));
        assert_eq!(&y[7..57], &x[..50]);
        let z = delay_signal(&x, -3.0, 47);
        assert_eq!(&z[..], &x[3..50]);
    }

    #[test]
    fn half_sample_delay_has_flat_magnitude_and_linear_phase() {
        let mut imp = vec![0.0; 256];
        imp[64] = 1.0;
        let y = delay_signal(&imp, 10.5, 256);
        let spec = rfft(&y, 256);
        for (k, v) in spec.iter().enumerate() {
            let f = k as f64 / 256.0;
            // up to 0.4 fs the response is flat within 0.05 dB
            if f <= 0.4 {
                assert!((20.0 * v.norm().log10()).abs() < 0.05, "bin {k}: {}", v.norm());
                let expected = -2.0 * std::f64::consts::PI * f * 74.5;
                let err = (v.arg() - expected).rem_euclid(2.0 * std::f64::consts::PI);
                let err = err.min(2.0 * std::f64::consts::PI - err);
                assert!(err < 1e-3, "bin {k}");
            }
        }
    }

    #[test]
    fn delays_compose() {
        let x: Vec<f64> = (0..400).map(|i| (i as f64 * 0.05).sin() * (i as f64 * 0.011).cos()).collect();
        let a = delay_signal(&delay_signal(&x, 3.25, 500), 2.75, 500);
        let b = delay_signal(&x, 6.0, 500);
        for n in 80..340 {
            assert!((a[n] - b[n]).abs() < 1e-4, "{n}: {} {}", a[n], b[n]);
        }
    }
}
