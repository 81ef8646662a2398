//! Hearing-aid algorithms on a shared STFT core.
//!
//! Each algorithm derives a time-variant linear operation (per frame and
//! frequency bin) from the signal it observes, and that operation is then
//! applied to any number of signals. Shadow filtering uses this split:
//! parameters come from the mixture only and the identical operation is
//! applied to the mixture, the target stem and the noise stem.

mod adm;
mod coherence;
mod mvdr;
mod scnr;

pub use adm::{Adm, AdmConfig};
pub use coherence::{CoherenceConfig, CoherenceNr};
pub use mvdr::{design_mvdr, Beamformer, BeamformerDesign, MvdrConfig};
pub use scnr::{ScNr, ScNrConfig};

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::binsim::RenderOutput;
use crate::dsp::{Spectrogram, Stft};
use crate::error::{Error, Result};
use crate::hrir::{ChannelSelection, HrirSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgorithmKind {
    Beamformer,
    Adm,
    BinauralNr,
    ScNr,
}

impl AlgorithmKind {
    pub const ALL: [AlgorithmKind; 4] = [Self::Beamformer, Self::Adm, Self::BinauralNr, Self::ScNr];

    pub fn token(&self) -> &'static str {
        match self {
            Self::Beamformer => "beamformer",
            Self::Adm => "adm",
            Self::BinauralNr => "binaural_nr",
            Self::ScNr => "sc_nr",
        }
    }

    /// Microphones read by the algorithm, in input order.
    pub fn selection(&self) -> ChannelSelection {
        match self {
            Self::Beamformer => ChannelSelection::beamformer(),
            Self::Adm => ChannelSelection::adm(),
            Self::BinauralNr => ChannelSelection::binaural_nr(),
            Self::ScNr => ChannelSelection::single_channel_nr(),
        }
    }
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for AlgorithmKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.token() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown algorithm '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub frame: usize,
    pub hop: usize,
    pub mvdr: MvdrConfig,
    pub adm: AdmConfig,
    pub coherence: CoherenceConfig,
    pub sc_nr: ScNrConfig,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            frame: crate::dsp::stft::DEFAULT_FRAME,
            hop: crate::dsp::stft::DEFAULT_HOP,
            mvdr: MvdrConfig::default(),
            adm: AdmConfig::default(),
            coherence: CoherenceConfig::default(),
            sc_nr: ScNrConfig::default(),
        }
    }
}

/// A time-variant linear operation in the STFT domain.
#[derive(Debug, Clone)]
pub enum Plan {
    /// Output `o` is `gains[t][k] * input[refs[o]]`.
    Gain { gains: Vec<Vec<f64>>, refs: Vec<usize> },
    /// A single output `sum_i coeffs[t][k][i] * input[i]`.
    Mix { coeffs: Vec<Vec<Vec<Complex64>>> },
}

impl Plan {
    pub fn apply(&self, input: &[Spectrogram]) -> Vec<Spectrogram> {
        match self {
            Plan::Gain { gains, refs } => refs
                .iter()
                .map(|&r| Spectrogram {
                    frames: input[r]
                        .frames
                        .iter()
                        .zip(gains)
                        .map(|(f, g)| f.iter().zip(g).map(|(x, &gk)| x * gk).collect())
                        .collect(),
                    signal_len: input[r].signal_len,
                })
                .collect(),
            Plan::Mix { coeffs } => {
                let frames = coeffs
                    .iter()
                    .enumerate()
                    .map(|(t, ct)| {
                        ct.iter()
                            .enumerate()
                            .map(|(k, ck)| ck.iter().zip(input).map(|(c, x)| c * x.frames[t][k]).sum())
                            .collect()
                    })
                    .collect();
                vec![Spectrogram {
                    frames,
                    signal_len: input[0].signal_len,
                }]
            }
        }
    }
}

pub trait Algorithm: Send + Sync {
    fn kind(&self) -> AlgorithmKind;

    fn n_inputs(&self) -> usize {
        self.kind().selection().len()
    }

    fn stft(&self) -> &Stft;

    /// Derives the processing from the observed input. `oracle_noise` is
    /// the noise component of the input, used only by algorithms that
    /// assume perfect noise knowledge.
    fn plan(&self, input: &[Spectrogram], oracle_noise: Option<&[Spectrogram]>) -> Result<Plan>;
}

fn check_input(alg: &dyn Algorithm, input: &AudioBuffer) -> Result<()> {
    if input.channels() != alg.n_inputs() {
        return Err(Error::ChannelMismatch {
            expected: alg.n_inputs(),
            found: input.channels(),
        });
    }
    Ok(())
}

fn analyze(stft: &Stft, b: &AudioBuffer) -> Vec<Spectrogram> {
    b.samples.iter().map(|c| stft.analyze(c)).collect()
}

fn synthesize(stft: &Stft, specs: &[Spectrogram], sample_rate: u32) -> Result<AudioBuffer> {
    AudioBuffer::new(sample_rate, specs.iter().map(|s| stft.synthesize(s)).collect())
}

/// Runs an algorithm on a single signal.
pub fn process(alg: &dyn Algorithm, input: &AudioBuffer, oracle_noise: Option<&AudioBuffer>) -> Result<AudioBuffer> {
    check_input(alg, input)?;
    let stft = alg.stft();
    let x = analyze(stft, input);
    let n = oracle_noise.map(|b| analyze(stft, b));
    let plan = alg.plan(&x, n.as_deref())?;
    synthesize(stft, &plan.apply(&x), input.sample_rate)
}

#[derive(Debug, Clone)]
pub struct ShadowOutput {
    pub mixture: AudioBuffer,
    pub target: AudioBuffer,
    pub noise: AudioBuffer,
}

/// Derives the processing from the mixture and applies it identically to
/// the mixture and both stems. `stems` must hold the algorithm's inputs.
pub fn shadow_filter(alg: &dyn Algorithm, stems: &RenderOutput) -> Result<ShadowOutput> {
    check_input(alg, &stems.mixture)?;
    stems.target.check_same_shape(&stems.mixture)?;
    stems.noise.check_same_shape(&stems.mixture)?;
    let scale = stems.mixture.samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
    for ((m, t), n) in stems
        .mixture
        .samples
        .iter()
        .flatten()
        .zip(stems.target.samples.iter().flatten())
        .zip(stems.noise.samples.iter().flatten())
    {
        if (m - t - n).abs() > 1e-9 * scale.max(1e-300) {
            return Err(Error::StemMismatch("mixture differs from target + noise".into()));
        }
    }
    let stft = alg.stft();
    let xm = analyze(stft, &stems.mixture);
    let xt = analyze(stft, &stems.target);
    let xn = analyze(stft, &stems.noise);
    let plan = alg.plan(&xm, Some(&xn))?;
    let fs = stems.mixture.sample_rate;
    Ok(ShadowOutput {
        mixture: synthesize(stft, &plan.apply(&xm), fs)?,
        target: synthesize(stft, &plan.apply(&xt), fs)?,
        noise: synthesize(stft, &plan.apply(&xn), fs)?,
    })
}

/// Instantiates an algorithm. The beamformer design is computed from `set`.
pub fn build_algorithm(
    kind: AlgorithmKind,
    cfg: &AlgorithmConfig,
    set: &HrirSet,
    speed_of_sound: f64,
) -> Result<Arc<dyn Algorithm>> {
    let stft = Stft::new(cfg.frame, cfg.hop);
    let fs = set.sample_rate() as f64;
    Ok(match kind {
        AlgorithmKind::Beamformer => {
            let design = design_mvdr(set, cfg.mvdr.steering_azimuth, &cfg.mvdr, cfg.frame)?;
            Arc::new(Beamformer::new(Arc::new(design), cfg.mvdr.clone(), stft, fs))
        }
        AlgorithmKind::Adm => Arc::new(Adm::new(cfg.adm.clone(), set.mic_spacing(), speed_of_sound, stft, fs)),
        AlgorithmKind::BinauralNr => Arc::new(CoherenceNr::new(cfg.coherence.clone(), stft, fs)),
        AlgorithmKind::ScNr => Arc::new(ScNr::new(cfg.sc_nr.clone(), stft)),
    })
}

/// One-pole smoothing coefficient for time constant `tau` at frame rate
/// `sample_rate / hop`.
pub(crate) fn frame_smoothing(tau: f64, hop: usize, sample_rate: f64) -> f64 {
    if tau <= 0.0 {
        0.0
    } else {
        (-(hop as f64) / (tau * sample_rate)).exp()
    }
}
