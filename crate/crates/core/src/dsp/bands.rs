//! Third-octave band grid with FFT-based band power integration, and ERB
//! scale helpers.

use serde::{Deserialize, Serialize};

use super::fft::rfft;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandGrid {
    pub centers: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BandGrid {
    /// Base-10 third-octave bands with centers `1000 * 10^(n/10)` from
    /// 100 Hz up to 8 kHz (20 bands).
    pub fn third_octave() -> Self {
        Self::third_octave_range(-10, 9)
    }

    /// Bands with indices `lo ..= hi` relative to the 1 kHz band.
    pub fn third_octave_range(lo: i32, hi: i32) -> Self {
        let centers: Vec<f64> = (lo..=hi).map(|n| 1000.0 * 10f64.powf(n as f64 / 10.0)).collect();
        let k = 10f64.powf(1.0 / 20.0);
        Self {
            lower: centers.iter().map(|c| c / k).collect(),
            upper: centers.iter().map(|c| c * k).collect(),
            centers,
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Index of the band containing `f`, if any.
    pub fn band_of(&self, f: f64) -> Option<usize> {
        (0..self.len()).find(|&b| f >= self.lower[b] && f < self.upper[b])
    }

    /// Nominal label for band `b`, e.g. "1000" or "1250".
    pub fn label(&self, b: usize) -> String {
        const NOMINAL: [f64; 11] = [1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0, 10.0];
        let c = self.centers[b];
        let decade = 10f64.powf(c.log10().floor());
        let mantissa = c / decade;
        let nominal = NOMINAL
            .iter()
            .copied()
            .min_by(|a, b| (a - mantissa).abs().total_cmp(&(b - mantissa).abs()))
            .unwrap();
        format!("{}", (nominal * decade).round() as i64)
    }

    /// Per-band mean-square power of `x` by integrating its full-length
    /// spectrum. Bands sum to the total power of the in-range content.
    pub fn band_powers(&self, x: &[f64], sample_rate: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.len()];
        let n = x.len();
        if n == 0 {
            return out;
        }
        let spec = rfft(x, n);
        let norm = 1.0 / (n as f64 * n as f64);
        for (k, v) in spec.iter().enumerate() {
            let f = k as f64 * sample_rate / n as f64;
            if let Some(b) = self.band_of(f) {
                let twice = k != 0 && !(n % 2 == 0 && k == n / 2);
                out[b] += v.norm_sqr() * norm * if twice { 2.0 } else { 1.0 };
            }
        }
        out
    }
}

/// Equivalent rectangular bandwidth of the auditory filter at `f` Hz.
pub fn erb_bandwidth(f: f64) -> f64 {
    24.7 * (4.37 * f / 1000.0 + 1.0)
}

/// ERB-number (Cam) of frequency `f`.
pub fn erb_number(f: f64) -> f64 {
    21.4 * (4.37 * f / 1000.0 + 1.0).log10()
}

pub fn erb_number_to_hz(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) * 1000.0 / 4.37
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn grid_is_contiguous_and_monotone() {
        let g = BandGrid::third_octave();
        assert_eq!(g.len(), 20);
        assert!((g.centers[0] - 100.0).abs() < 1e-9);
        assert_eq!(g.label(0), "100");
        assert_eq!(g.label(10), "1000");
        assert_eq!(g.label(19), "8000");
        assert_eq!(g.label(5), "315");
        for b in 1..g.len() {
            assert!((g.lower[b] - g.upper[b - 1]).abs() < 1e-9);
            assert!(g.centers[b] > g.centers[b - 1]);
        }
    }

    #[test]
    fn sine_lands_in_its_band() {
        let g = BandGrid::third_octave();
        let fs = 48_000.0;
        let x: Vec<f64> = (0..48_000).map(|n| (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / fs).sin()).collect();
        let p = g.band_powers(&x, fs);
        let total: f64 = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64;
        assert!(p[10] / total > 0.95);
    }

    #[test]
    fn white_noise_rises_one_db_per_band() {
        let g = BandGrid::third_octave();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<f64> = (0..480_000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let p = g.band_powers(&x, 48_000.0);
        let fit: Vec<f64> = (0..g.len()).map(|b| 10.0 * (p[b] / (g.upper[b] - g.lower[b])).log10()).collect();
        let mean = fit.iter().sum::<f64>() / fit.len() as f64;
        for v in &fit[3..] {
            assert!((v - mean).abs() < 0.5);
        }
        let total: f64 = p.iter().sum();
        let covered = (g.upper[19] - g.lower[0]) / 24_000.0;
        let expected = x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64 * covered;
        assert!((10.0 * (total / expected).log10()).abs() < 0.2);
    }

    #[test]
    fn silence_is_zero() {
        let p = BandGrid::third_octave().band_powers(&[0.0; 1000], 48_000.0);
        assert!(p.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn erb_round_trip() {
        for f in [50.0, 236.0, 1296.0, 4000.0] {
            assert!((erb_number_to_hz(erb_number(f)) - f).abs() < 1e-9);
        }
        assert!((erb_bandwidth(1000.0) - 132.639).abs() < 1e-3);
    }
}
