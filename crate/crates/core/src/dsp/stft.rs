//! Short-time Fourier analysis and overlap-add synthesis with a
//! square-root periodic Hann window.

use num_complex::Complex64;

use super::fft::{forward_plan, inverse_plan};

pub const DEFAULT_FRAME: usize = 512;
pub const DEFAULT_HOP: usize = 256;

#[derive(Debug, Clone)]
pub struct Stft {
    frame: usize,
    hop: usize,
    window: Vec<f64>,
}

/// Frames of one channel; `frames[t][k]` is bin `k` of frame `t`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub signal_len: usize,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn n_bins(&self) -> usize {
        self.frames.first().map_or(0, |f| f.len())
    }
}

impl Default for Stft {
    fn default() -> Self {
        Self::new(DEFAULT_FRAME, DEFAULT_HOP)
    }
}

impl Stft {
    /// `frame` must be a multiple of `2 * hop` for the Hann window to sum
    /// to one after squaring.
    pub fn new(frame: usize, hop: usize) -> Self {
        assert!(frame % hop == 0 && frame >= 2 * hop, "unsupported frame/hop");
        let gain = (2.0 * hop as f64 / frame as f64).sqrt();
        let window = (0..frame)
            .map(|n| {
                let hann = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / frame as f64).cos();
                hann.sqrt() * gain
            })
            .collect();
        Self { frame, hop, window }
    }

    pub fn frame_len(&self) -> usize {
        self.frame
    }

    pub fn hop(&self) -> usize {
        self.hop
    }

    pub fn n_bins(&self) -> usize {
        self.frame / 2 + 1
    }

    pub fn bin_frequency(&self, k: usize, sample_rate: f64) -> f64 {
        k as f64 * sample_rate / self.frame as f64
    }

    /// Frame `t` covers samples `t * hop - (frame - hop) .. t * hop + hop`.
    pub fn analyze(&self, x: &[f64]) -> Spectrogram {
        let lead = self.frame - self.hop;
        let n_frames = x.len().div_ceil(self.hop) + lead / self.hop;
        let fwd = forward_plan(self.frame);
        let mut scratch = fwd.make_scratch_vec();
        let mut buf = vec![0.0; self.frame];
        let frames = (0..n_frames)
            .map(|t| {
                for (j, v) in buf.iter_mut().enumerate() {
                    let idx = (t * self.hop + j) as i64 - lead as i64;
                    let s = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
                    *v = s * self.window[j];
                }
                let mut out = fwd.make_output_vec();
                fwd.process_with_scratch(&mut buf, &mut out, &mut scratch)
                    .expect("fft length is consistent");
                out
            })
            .collect();
        Spectrogram {
            frames,
            signal_len: x.len(),
        }
    }

    pub fn synthesize(&self, spec: &Spectrogram) -> Vec<f64> {
        let lead = self.frame - self.hop;
        let inv = inverse_plan(self.frame);
        let mut scratch = inv.make_scratch_vec();
        let mut y = vec![0.0; spec.signal_len];
        let mut buf = vec![0.0; self.frame];
        let scale = 1.0 / self.frame as f64;
        for (t, frame) in spec.frames.iter().enumerate() {
            let mut s = frame.clone();
            s[0].im = 0.0;
            let last = s.len() - 1;
            s[last].im = 0.0;
            inv.process_with_scratch(&mut s, &mut buf, &mut scratch)
                .expect("fft length is consistent");
            for (j, &v) in buf.iter().enumerate() {
                let idx = (t * self.hop + j) as i64 - lead as i64;
                if idx >= 0 && (idx as usize) < y.len() {
                    y[idx as usize] += v * scale * self.window[j];
                }
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_reconstruction_on_white_noise() {
        let stft = Stft::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for len in [1, 255, 256, 1000, 48_000] {
            let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let y = stft.synthesize(&stft.analyze(&x));
            let err: f64 = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum();
            let sig: f64 = x.iter().map(|a| a * a).sum();
            assert!(10.0 * (err / sig).log10() < -80.0, "len {len}");
        }
    }
}
