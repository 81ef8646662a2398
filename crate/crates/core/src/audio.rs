//! Multichannel sample buffers and 32-bit float WAV I/O.

use std::path::Path;

use hound::{SampleFormat, WavSpec};

use crate::error::{Error, Result};

/// Channel-major audio: `samples[ch][n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<Vec<f64>>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<Vec<f64>>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let len = first.len();
            if samples.iter().any(|c| c.len() != len) {
                return Err(Error::InvalidParameter("channels differ in length".into()));
            }
        }
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(Self { sample_rate, samples })
    }

    pub fn silent(sample_rate: u32, channels: usize, len: usize) -> Self {
        Self {
            sample_rate,
            samples: vec![vec![0.0; len]; channels],
        }
    }

    pub fn mono(sample_rate: u32, x: Vec<f64>) -> Self {
        Self {
            sample_rate,
            samples: vec![x],
        }
    }

    pub fn channels(&self) -> usize {
        self.samples.len()
    }

    pub fn len(&self) -> usize {
        self.samples.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.sample_rate as f64
    }

    pub fn channel(&self, ch: usize) -> &[f64] {
        &self.samples[ch]
    }

    pub fn select(&self, channels: &[usize]) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            samples: channels.iter().map(|&c| self.samples[c].clone()).collect(),
        }
    }

    pub fn scaled(&self, g: f64) -> AudioBuffer {
        AudioBuffer {
            sample_rate: self.sample_rate,
            samples: self.samples.iter().map(|c| c.iter().map(|v| v * g).collect()).collect(),
        }
    }

    /// Samplewise sum; buffers must agree in rate and shape.
    pub fn add(&self, other: &AudioBuffer) -> Result<AudioBuffer> {
        self.check_same_shape(other)?;
        Ok(AudioBuffer {
            sample_rate: self.sample_rate,
            samples: self
                .samples
                .iter()
                .zip(&other.samples)
                .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
                .collect(),
        })
    }

    pub fn add_assign_scaled(&mut self, other: &AudioBuffer, g: f64) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, b) in self.samples.iter_mut().zip(&other.samples) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += g * y;
            }
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &AudioBuffer) -> Result<()> {
        if self.sample_rate != other.sample_rate {
            return Err(Error::RateMismatch {
                expected: self.sample_rate,
                found: other.sample_rate,
            });
        }
        if self.channels() != other.channels() {
            return Err(Error::ChannelMismatch {
                expected: self.channels(),
                found: other.channels(),
            });
        }
        if self.len() != other.len() {
            return Err(Error::InvalidParameter(format!(
                "buffer lengths differ: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn write_wav(&self, path: &Path) -> Result<()> {
        let spec = WavSpec {
            channels: self.channels() as u16,
            sample_rate: self.sample_rate,
            bits_per_sample: 32,
            sample_format: SampleFormat::Float,
        };
        let mut w = hound::WavWriter::create(path, spec)?;
        for n in 0..self.len() {
            for ch in &self.samples {
                w.write_sample(ch[n] as f32)?;
            }
        }
        w.finalize()?;
        Ok(())
    }

    /// Reads a WAV file (float or integer PCM) into a buffer scaled to
    /// `[-1, 1]`.
    pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
        let mut r = hound::WavReader::open(path)?;
        let spec = r.spec();
        let n_ch = spec.channels as usize;
        let interleaved: Vec<f64> = match spec.sample_format {
            SampleFormat::Float => r.samples::<f32>().map(|s| s.map(f64::from)).collect::<std::result::Result<_, _>>()?,
            SampleFormat::Int => {
                let scale = 1.0 / (1u64 << (spec.bits_per_sample - 1)) as f64;
                r.samples::<i32>()
                    .map(|s| s.map(|v| v as f64 * scale))
                    .collect::<std::result::Result<_, _>>()?
            }
        };
        let len = interleaved.len() / n_ch.max(1);
        let mut samples = vec![Vec::with_capacity(len); n_ch];
        for frame in interleaved.chunks_exact(n_ch) {
            for (c, &v) in frame.iter().enumerate() {
                samples[c].push(v);
            }
        }
        AudioBuffer::new(spec.sample_rate, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wav_round_trip_is_float_exact() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.wav");
        let b = AudioBuffer::new(48_000, vec![vec![0.5, -0.25, 0.125], vec![1.0, 0.0, -1.0]]).unwrap();
        b.write_wav(&p).unwrap();
        let r = AudioBuffer::read_wav(&p).unwrap();
        assert_eq!(r, b);
    }

    #[test]
    fn rejects_ragged_and_nonfinite() {
        assert!(AudioBuffer::new(48_000, vec![vec![0.0; 3], vec![0.0; 2]]).is_err());
        assert!(AudioBuffer::new(48_000, vec![vec![f64::NAN]]).is_err());
    }
}
