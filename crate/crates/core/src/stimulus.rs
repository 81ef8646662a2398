//! Test signals: a synthetic speech-like talker, multi-talker cafeteria
//! babble, white noise, and loading of user-supplied recordings.

use std::f64::consts::PI;
use std::path::PathBuf;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::error::{Error, Result};

/// Female-range vowel formants (F1, F2, F3) in Hz.
const VOWELS: [[f64; 3]; 6] = [
    [850.0, 1220.0, 2810.0],
    [310.0, 2790.0, 3310.0],
    [370.0, 950.0, 2670.0],
    [560.0, 2320.0, 2950.0],
    [500.0, 900.0, 2800.0],
    [690.0, 1660.0, 2950.0],
];
const FORMANT_BW: [f64; 4] = [90.0, 110.0, 170.0, 250.0];
const F4: f64 = 4100.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TalkerParams {
    pub f0_mean: f64,
    pub syllable_rate: f64,
    pub seed: u64,
}

impl TalkerParams {
    pub fn female(seed: u64) -> Self {
        Self {
            f0_mean: 210.0,
            syllable_rate: 4.0,
            seed,
        }
    }
}

struct Segment {
    start: usize,
    len: usize,
    vowel: usize,
    fricative: Option<(usize, f64)>,
}

/// Two-pole resonator with unit gain at DC.
struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self { y1: 0.0, y2: 0.0 }
    }

    fn step(&mut self, x: f64, freq: f64, bw: f64, fs: f64) -> f64 {
        let r = (-PI * bw / fs).exp();
        let a1 = -2.0 * r * (2.0 * PI * freq / fs).cos();
        let a2 = r * r;
        let g = 1.0 + a1 + a2;
        let y = g * x - a1 * self.y1 - a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

fn plan_segments(len: usize, fs: f64, p: &TalkerParams, rng: &mut ChaCha8Rng) -> Vec<Segment> {
    let mut segs = Vec::new();
    let mut t = (rng.gen_range(0.0..0.15) * fs) as usize;
    let mut until_pause = rng.gen_range(5..10);
    while t < len {
        let dur = (rng.gen_range(0.7..1.3) / p.syllable_rate * fs) as usize;
        let fricative = rng
            .gen_bool(0.35)
            .then(|| ((rng.gen_range(0.04..0.09) * fs) as usize, rng.gen_range(2500.0..6500.0)));
        segs.push(Segment {
            start: t,
            len: dur,
            vowel: rng.gen_range(0..VOWELS.len()),
            fricative,
        });
        t += dur + fricative.map_or(0, |f| f.0);
        until_pause -= 1;
        if until_pause == 0 {
            t += (rng.gen_range(0.2..0.5) * fs) as usize;
            until_pause = rng.gen_range(5..10);
        }
    }
    segs
}

/// Speech-like signal: a harmonic voice source with an intonation contour,
/// passed through time-varying formant resonators, gated into syllables
/// with fricative noise onsets and pauses. Normalized to 0.05 RMS.
pub fn synthetic_speech(len: usize, sample_rate: f64, p: &TalkerParams) -> Vec<f64> {
    let fs = sample_rate;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let segs = plan_segments(len, fs, p, &mut rng);
    let mut env = vec![0.0; len];
    let mut fric_env = vec![0.0; len];
    let mut fric_freq = vec![4000.0; len];
    let mut formant_target = vec![VOWELS[0]; len];
    for s in &segs {
        let (fl, ff) = s.fricative.unwrap_or((0, 4000.0));
        for i in 0..fl {
            let n = s.start + i;
            if n >= len {
                break;
            }
            fric_env[n] = (PI * i as f64 / fl as f64).sin().powi(2);
            fric_freq[n] = ff;
        }
        let v0 = s.start + fl;
        for i in 0..s.len {
            let n = v0 + i;
            if n >= len {
                break;
            }
            env[n] = (PI * i as f64 / s.len as f64).sin().powf(1.5);
            formant_target[n] = VOWELS[s.vowel];
        }
    }
    let phase0: f64 = rng.gen_range(0.0..2.0 * PI);
    let max_h = ((0.45 * fs) / (0.7 * p.f0_mean)).floor() as usize;
    let amps: Vec<f64> = (1..=max_h).map(|h| 1.0 / h as f64).collect();
    let smooth = (-1.0 / (0.02 * fs)).exp();
    let mut formants = VOWELS[0];
    let mut res: Vec<Resonator> = (0..4).map(|_| Resonator::new()).collect();
    let mut fric_res = Resonator::new();
    let mut phase = 0.0f64;
    let mut prev_voiced = 0.0;
    let mut out = vec![0.0; len];
    for n in 0..len {
        let t = n as f64 / fs;
        let f0 = p.f0_mean * (1.0 + 0.12 * (2.0 * PI * 0.6 * t + phase0).sin() + 0.05 * (2.0 * PI * 2.3 * t).sin());
        phase = (phase + 2.0 * PI * f0 / fs) % (2.0 * PI);
        let z = Complex64::from_polar(1.0, phase);
        let mut zh = z;
        let mut src = 0.0;
        for (h, &a) in amps.iter().enumerate() {
            let fh = (h + 1) as f64 * f0;
            if fh > 0.45 * fs {
                break;
            }
            src += a * zh.im / (1.0 + (fh / 5000.0).powi(4));
            zh *= z;
        }
        for (f, target) in formants.iter_mut().zip(formant_target[n]) {
            *f = smooth * *f + (1.0 - smooth) * target;
        }
        let mut v = src * env[n];
        for (k, r) in res.iter_mut().enumerate() {
            let f = if k < 3 { formants[k] } else { F4 };
            v = r.step(v, f, FORMANT_BW[k], fs);
        }
        // lip radiation: first-order high-pass, about +6 dB per octave
        let radiated = 4.0 * (v - 0.9 * prev_voiced);
        prev_voiced = v;
        let noise: f64 = StandardNormal.sample(&mut rng);
        let fr = fric_res.step(noise * fric_env[n], fric_freq[n], 1800.0, fs);
        out[n] = radiated + 0.08 * fr;
    }
    normalize_rms(&mut out, 0.05);
    out
}

/// Cafeteria-like babble: several synthetic talkers of mixed voice range
/// plus stationary speech-shaped noise. Normalized to 0.05 RMS.
pub fn synthetic_babble(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6ba6_b1e5);
    let mut out = vec![0.0; len];
    for _ in 0..6 {
        let p = TalkerParams {
            f0_mean: rng.gen_range(105.0..240.0),
            syllable_rate: rng.gen_range(3.0..5.0),
            seed: rng.gen(),
        };
        let t = synthetic_speech(len, sample_rate, &p);
        for (o, v) in out.iter_mut().zip(t) {
            *o += v;
        }
    }
    let shaped = speech_shaped_noise(len, sample_rate, rng.gen());
    let g = 0.5 * rms(&out) / rms(&shaped).max(1e-30);
    for (o, v) in out.iter_mut().zip(shaped) {
        *o += g * v;
    }
    normalize_rms(&mut out, 0.05);
    out
}

/// Gaussian noise with a long-term speech-like spectrum: flat to 500 Hz,
/// then falling about 6 dB per octave.
pub fn speech_shaped_noise(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut x = white_noise(len, seed);
    let mut lp = Resonator::new();
    let mut hp_state = 0.0;
    let a = (-2.0 * PI * 80.0 / sample_rate).exp();
    for v in x.iter_mut() {
        let y = lp.step(*v, 0.0, 1000.0, sample_rate);
        // one-pole high-pass removes rumble below 80 Hz
        hp_state = a * hp_state + (1.0 - a) * y;
        *v = y - hp_state;
    }
    x
}

pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn rms(x: &[f64]) -> f64 {
    crate::dsp::power(x).sqrt()
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let r = rms(x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v *= target / r);
    }
}

/// Splits `recording` into `count` non-overlapping consecutive segments.
pub fn noise_segments(recording: &[f64], count: usize, seg_len: usize) -> Result<Vec<Vec<f64>>> {
    if recording.len() < count * seg_len {
        return Err(Error::InvalidParameter(format!(
            "noise recording has {} samples, need {} for {count} segments",
            recording.len(),
            count * seg_len
        )));
    }
    Ok(recording.chunks_exact(seg_len).take(count).map(|c| c.to_vec()).collect())
}

/// Where the target and noise signals come from. Paths are optional; when
/// absent the synthetic talker and babble are used.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StimulusConfig {
    #[serde(default)]
    pub target_path: Option<PathBuf>,
    #[serde(default)]
    pub noise_path: Option<PathBuf>,
    pub duration_s: f64,
}

impl Default for StimulusConfig {
    fn default() -> Self {
        Self {
            target_path: None,
            noise_path: None,
            duration_s: 8.4,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Stimuli {
    pub sample_rate: u32,
    pub target: Arc<Vec<f64>>,
    pub noise: Vec<Arc<Vec<f64>>>,
}

impl Stimuli {
    pub fn prepare(cfg: &StimulusConfig, sample_rate: u32, n_noise: usize, seed: u64) -> Result<Self> {
        let len = (cfg.duration_s * sample_rate as f64).round() as usize;
        if len == 0 {
            return Err(Error::Config("stimulus duration must be positive".into()));
        }
        let target = match &cfg.target_path {
            Some(p) => load_mono(p, sample_rate, len)?,
            None => synthetic_speech(len, sample_rate as f64, &TalkerParams::female(seed)),
        };
        let recording = match &cfg.noise_path {
            Some(p) => load_mono(p, sample_rate, len * n_noise)?,
            None => synthetic_babble(len * n_noise, sample_rate as f64, seed),
        };
        let noise = noise_segments(&recording, n_noise, len)?.into_iter().map(Arc::new).collect();
        Ok(Self {
            sample_rate,
            target: Arc::new(target),
            noise,
        })
    }
}

fn load_mono(path: &std::path::Path, sample_rate: u32, len: usize) -> Result<Vec<f64>> {
    let buf = AudioBuffer::read_wav(path)?;
    if buf.sample_rate != sample_rate {
        return Err(Error::RateMismatch {
            expected: sample_rate,
            found: buf.sample_rate,
        });
    }
    if buf.len() < len {
        return Err(Error::InvalidParameter(format!(
            "{} holds {} samples, need {len}",
            path.display(),
            buf.len()
        )));
    }
    Ok(buf.channel(0)[..len].to_vec())
}
