//! Binaural noise reduction steered by interaural coherence: the vector
//! strength of the recursively averaged unit phasor of the interaural
//! phase difference sets a common gain `gamma^beta(f)` for both sides.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{frame_smoothing, Algorithm, AlgorithmKind, Plan};
use crate::dsp::{Spectrogram, Stft};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoherenceConfig {
    pub tau_s: f64,
    /// `beta` is zero below this frequency.
    pub beta_zero_below_hz: f64,
    /// `beta` rises linearly to its maximum at this frequency.
    pub beta_full_at_hz: f64,
    pub beta_max: f64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self {
            tau_s: 0.04,
            beta_zero_below_hz: 500.0,
            beta_full_at_hz: 1000.0,
            beta_max: 0.5,
        }
    }
}

impl CoherenceConfig {
    pub fn beta(&self, f: f64) -> f64 {
        if f < self.beta_zero_below_hz {
            0.0
        } else if f >= self.beta_full_at_hz {
            self.beta_max
        } else {
            self.beta_max * (f - self.beta_zero_below_hz) / (self.beta_full_at_hz - self.beta_zero_below_hz)
        }
    }
}

pub struct CoherenceNr {
    stft: Stft,
    alpha: f64,
    beta: Vec<f64>,
}

/// Cross power (relative to the input mean) below which a bin's phase
/// is treated as undefined. Without it, convolution round-off in silent
/// stretches (~1e-15) enters the average as full-weight random phasors.
const PHASOR_FLOOR: f64 = 1e-9;

/// Phasor of `l * conj(r)`: unit length well above `floor`, shrinking
/// continuously to zero below it.
pub(crate) fn ipd_phasor(l: Complex64, r: Complex64, floor: f64) -> Complex64 {
    let p = l * r.conj();
    let m = p.norm();
    if m > 0.0 {
        p / m.max(floor)
    } else {
        Complex64::new(0.0, 0.0)
    }
}

impl CoherenceNr {
    pub fn new(cfg: CoherenceConfig, stft: Stft, sample_rate: f64) -> Self {
        let alpha = frame_smoothing(cfg.tau_s, stft.hop(), sample_rate);
        let beta = (0..stft.n_bins()).map(|k| cfg.beta(stft.bin_frequency(k, sample_rate))).collect();
        Self { stft, alpha, beta }
    }

    /// Coherence per frame and bin.
    pub fn coherence(&self, input: &[Spectrogram]) -> Vec<Vec<f64>> {
        let (l, r) = (&input[0], &input[1]);
        let bins = self.beta.len();
        let mut acc = vec![Complex64::new(0.0, 0.0); bins];
        let cells = (l.n_frames() * bins).max(1) as f64;
        let mean: f64 = l.frames.iter().zip(&r.frames).flat_map(|(a, b)| a.iter().zip(b)).map(|(a, b)| a.norm() * b.norm()).sum::<f64>() / cells;
        let floor = PHASOR_FLOOR * mean;
        (0..l.n_frames())
            .map(|t| {
                (0..bins)
                    .map(|k| {
                        let u = ipd_phasor(l.frames[t][k], r.frames[t][k], floor);
                        acc[k] = if t == 0 { u } else { acc[k] * self.alpha + u * (1.0 - self.alpha) };
                        acc[k].norm().min(1.0)
                    })
                    .collect()
            })
            .collect()
    }
}

impl Algorithm for CoherenceNr {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::BinauralNr
    }

    fn stft(&self) -> &Stft {
        &self.stft
    }

    fn plan(&self, input: &[Spectrogram], _oracle_noise: Option<&[Spectrogram]>) -> Result<Plan> {
        let gains = self
            .coherence(input)
            .into_iter()
            .map(|row| row.iter().zip(&self.beta).map(|(g, &b)| g.powf(b)).collect())
            .collect();
        Ok(Plan::Gain { gains, refs: vec![0, 1] })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::AudioBuffer;
    use crate::dsp::{power, BandGrid};
    use crate::haalgo::testutil::{diffuse_stems, indices};
    use crate::haalgo::{process, shadow_filter};
    use crate::hrir::ChannelSelection;
    use crate::stimulus::white_noise;

    fn nr() -> CoherenceNr {
        CoherenceNr::new(CoherenceConfig::default(), Stft::default(), 48_000.0)
    }

    #[test]
    fn identical_channels_are_fully_coherent() {
        let x = white_noise(24_000, 1);
        let b = AudioBuffer::new(48_000, vec![x.clone(), x.clone()]).unwrap();
        let spec: Vec<_> = b.samples.iter().map(|c| Stft::default().analyze(c)).collect();
        let c = nr().coherence(&spec);
        for row in &c[4..c.len() - 4] {
            assert!(row[1..].iter().all(|&g| (g - 1.0).abs() < 1e-9));
        }
        let out = process(&nr(), &b, None).unwrap();
        let err = out.channel(0).iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / power(&x) / x.len() as f64;
        assert!(err < 1e-6);
    }

    #[test]
    fn independent_noise_is_attenuated_above_500_hz() {
        let b = AudioBuffer::new(48_000, vec![white_noise(48_000, 1), white_noise(48_000, 2)]).unwrap();
        let spec: Vec<_> = b.samples.iter().map(|c| Stft::default().analyze(c)).collect();
        let c = nr().coherence(&spec);
        let mean: f64 = c[50..].iter().map(|r| r[100]).sum::<f64>() / (c.len() - 50) as f64;
        assert!(mean < 0.6, "{mean}");
        let out = process(&nr(), &b, None).unwrap();
        let g = BandGrid::third_octave();
        let (pi, po) = (g.band_powers(b.channel(0), 48_000.0), g.band_powers(out.channel(0), 48_000.0));
        let low = 10.0 * (po[5] / pi[5]).log10();
        assert!(low.abs() < 0.1, "beta is zero at 315 Hz, got {low} dB");
        assert!(po[15] < pi[15]);
    }

    #[test]
    fn common_scaling_leaves_coherence_unchanged() {
        let b = AudioBuffer::new(48_000, vec![white_noise(12_000, 3), white_noise(12_000, 4)]).unwrap();
        let s1: Vec<_> = b.samples.iter().map(|c| Stft::default().analyze(c)).collect();
        let s2: Vec<_> = b.scaled(7.5).samples.iter().map(|c| Stft::default().analyze(c)).collect();
        let (c1, c2) = (nr().coherence(&s1), nr().coherence(&s2));
        for (a, b) in c1.iter().flatten().zip(c2.iter().flatten()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn diffuse_scene_gains_above_one_khz() {
        let stems = diffuse_stems(2.0);
        let sel = indices(&ChannelSelection::binaural_nr().roles);
        let mix = stems.mix(0.0).unwrap().select(&sel);
        let out = shadow_filter(&nr(), &mix).unwrap();
        let g = BandGrid::third_octave();
        let fs = 48_000.0;
        let (ti, ni) = (g.band_powers(mix.target.channel(0), fs), g.band_powers(mix.noise.channel(0), fs));
        let (to, no) = (g.band_powers(out.target.channel(0), fs), g.band_powers(out.noise.channel(0), fs));
        let hi: Vec<f64> = (10..g.len()).map(|b| 10.0 * ((to[b] / no[b]) / (ti[b] / ni[b])).log10()).collect();
        let mean = hi.iter().sum::<f64>() / hi.len() as f64;
        // the 2-6 dB range is checked by the acceptance suite; here only the sign and the best band
        assert!(mean > 1.0, "mean improvement above 1 kHz {mean} dB");
        assert!(hi.iter().cloned().fold(f64::MIN, f64::max) > 2.0);
    }
}
