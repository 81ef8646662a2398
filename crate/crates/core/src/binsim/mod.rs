//! Rendering of virtual sources to hearing-aid and in-ear microphones,
//! either through a loudspeaker reproduction method or as a free-field
//! reference.
//!
//! Every loudspeaker feed of a single source is the same delayed signal
//! `x(t - |r|/c) / |r|` scaled by a method weight, so a source can be
//! rendered by convolving that signal once with the weighted sum of the
//! speaker-to-receiver responses. [`render_speaker_feeds`] and
//! [`render_to_receiver`] expose the explicit two-stage form.

mod scene;

pub use scene::{
    mix_scene, random_noise_layout, render_stems, RenderOutput, SceneFile, SceneSpec, SceneStems, SourceSpec,
};

use serde::{Deserialize, Serialize};

use crate::audio::AudioBuffer;
use crate::dsp::fracdelay::delay_signal;
use crate::dsp::Convolver;
use crate::error::{Error, Result};
use crate::geometry::{ListenerPose, Position2D, SpeakerArray};
use crate::hrir::{ChannelSelection, HrirSet};
use crate::panner::{self, PannerOptions, ReproductionMethod};

/// A mono signal emitted from a position in the horizontal plane.
#[derive(Debug, Clone, Copy)]
pub struct VirtualSource<'a> {
    pub signal: &'a [f64],
    pub sample_rate: u32,
    pub position: Position2D,
}

/// How a source reaches the listener.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Reproduction {
    /// Free-field reference.
    Reference,
    Method(ReproductionMethod),
}

impl Reproduction {
    pub fn token(&self) -> &'static str {
        match self {
            Self::Reference => "reference",
            Self::Method(m) => m.token(),
        }
    }
}

/// `x(t - d/c) / d`, truncated to the input length.
pub fn propagate(signal: &[f64], distance: f64, speed_of_sound: f64, sample_rate: u32) -> Vec<f64> {
    let mut y = delay_signal(signal, distance / speed_of_sound * sample_rate as f64, signal.len());
    y.iter_mut().for_each(|v| *v /= distance);
    y
}

/// Loudspeaker signals for one source: channel `k` is
/// `(w_k / |r|) x(t - |r|/c)`.
pub fn render_speaker_feeds(
    method: ReproductionMethod,
    array: &SpeakerArray,
    source: &VirtualSource,
    pipeline_rate: u32,
    opts: &PannerOptions,
) -> Result<AudioBuffer> {
    if source.sample_rate != pipeline_rate {
        return Err(Error::RateMismatch {
            expected: pipeline_rate,
            found: source.sample_rate,
        });
    }
    let w = panner::weights(method, array, &source.position, opts)?;
    let base = delay_signal(
        source.signal,
        w.source_delay * pipeline_rate as f64,
        source.signal.len(),
    );
    let samples = w
        .weights
        .iter()
        .map(|&wk| {
            let g = wk * w.source_attenuation;
            base.iter().map(|v| v * g).collect()
        })
        .collect();
    AudioBuffer::new(pipeline_rate, samples)
}

/// Responses from every speaker of an array to the selected receiver
/// channels at one listener pose.
#[derive(Debug, Clone)]
pub struct ReceiverIrs {
    channels: Vec<usize>,
    // irs[speaker][channel]
    irs: Vec<Vec<Vec<f64>>>,
}

impl ReceiverIrs {
    pub fn new(
        array: &SpeakerArray,
        set: &HrirSet,
        pose: &ListenerPose,
        sel: &ChannelSelection,
        speed_of_sound: f64,
    ) -> Result<Self> {
        let channels = set.channel_indices(sel)?;
        let irs = array
            .positions()
            .iter()
            .map(|p| set.translate_listener(pose, p, speed_of_sound, &channels))
            .collect::<Result<_>>()?;
        Ok(Self { channels, irs })
    }

    pub fn speaker(&self, k: usize) -> &[Vec<f64>] {
        &self.irs[k]
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    /// `sum_k w_k h_k` per channel, skipping zero weights.
    pub fn combine(&self, weights: &[f64]) -> Vec<Vec<f64>> {
        let len = self.irs[0][0].len();
        let mut out = vec![vec![0.0; len]; self.channels.len()];
        for (k, &w) in weights.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (o, h) in out.iter_mut().zip(&self.irs[k]) {
                for (a, b) in o.iter_mut().zip(h) {
                    *a += w * b;
                }
            }
        }
        out
    }
}

/// Sums each loudspeaker feed convolved with its speaker-to-receiver
/// response, for every selected channel.
pub fn render_to_receiver(
    feeds: &AudioBuffer,
    array: &SpeakerArray,
    set: &HrirSet,
    pose: &ListenerPose,
    sel: &ChannelSelection,
    speed_of_sound: f64,
) -> Result<AudioBuffer> {
    if feeds.channels() != array.count() {
        return Err(Error::ChannelMismatch {
            expected: array.count(),
            found: feeds.channels(),
        });
    }
    if feeds.sample_rate != set.sample_rate() {
        return Err(Error::RateMismatch {
            expected: set.sample_rate(),
            found: feeds.sample_rate,
        });
    }
    let rx = ReceiverIrs::new(array, set, pose, sel, speed_of_sound)?;
    let matrix: Vec<Vec<Vec<f64>>> = (0..rx.n_channels())
        .map(|c| (0..array.count()).map(|k| rx.irs[k][c].clone()).collect())
        .collect();
    let inputs: Vec<&[f64]> = feeds.samples.iter().map(|c| c.as_slice()).collect();
    let out = Convolver::new(&matrix).process(&inputs, feeds.len());
    AudioBuffer::new(feeds.sample_rate, out)
}

/// Free-field rendering: the source convolved with the response for its
/// direction and distance as seen from the listener. The loudspeaker path
/// of the array (`1/R` and `R/c` for radius `R`) is included so that a
/// source placed on a speaker renders identically through that speaker.
pub fn render_reference(
    source: &VirtualSource,
    set: &HrirSet,
    pose: &ListenerPose,
    sel: &ChannelSelection,
    array_radius: f64,
    speed_of_sound: f64,
) -> Result<AudioBuffer> {
    if source.sample_rate != set.sample_rate() {
        return Err(Error::RateMismatch {
            expected: set.sample_rate(),
            found: source.sample_rate,
        });
    }
    let channels = set.channel_indices(sel)?;
    let irs = set.translate_listener(pose, &source.position, speed_of_sound, &channels)?;
    let x = propagate(source.signal, array_radius, speed_of_sound, set.sample_rate());
    convolve_channels(&x, &irs, set.sample_rate())
}

fn convolve_channels(x: &[f64], irs: &[Vec<f64>], sample_rate: u32) -> Result<AudioBuffer> {
    let matrix: Vec<Vec<Vec<f64>>> = irs.iter().map(|h| vec![h.clone()]).collect();
    let out = Convolver::new(&matrix).process(&[x], x.len());
    AudioBuffer::new(sample_rate, out)
}

/// Renders sources for one (reproduction, array, pose, channel selection)
/// condition. Speaker responses are computed once at construction.
pub struct Renderer<'a> {
    set: &'a HrirSet,
    array: SpeakerArray,
    pose: ListenerPose,
    reproduction: Reproduction,
    sel: ChannelSelection,
    channels: Vec<usize>,
    opts: PannerOptions,
    receiver: Option<ReceiverIrs>,
}

impl<'a> Renderer<'a> {
    pub fn new(
        set: &'a HrirSet,
        array: &SpeakerArray,
        pose: ListenerPose,
        reproduction: Reproduction,
        sel: &ChannelSelection,
        opts: PannerOptions,
    ) -> Result<Self> {
        if !array.contains(&pose.offset) {
            return Err(Error::OutOfRegion(format!(
                "listener offset {:.3} m is not inside the {:.3} m array",
                pose.offset.norm(),
                array.radius()
            )));
        }
        let channels = set.channel_indices(sel)?;
        let receiver = match reproduction {
            Reproduction::Reference => None,
            Reproduction::Method(_) => Some(ReceiverIrs::new(array, set, &pose, sel, opts.speed_of_sound)?),
        };
        Ok(Self {
            set,
            array: array.clone(),
            pose,
            reproduction,
            sel: sel.clone(),
            channels,
            opts,
            receiver,
        })
    }

    pub fn selection(&self) -> &ChannelSelection {
        &self.sel
    }

    pub fn sample_rate(&self) -> u32 {
        self.set.sample_rate()
    }

    /// Per-channel response applied after the propagation term, and that
    /// term's `(distance)` for `x(t - d/c) / d`.
    pub fn source_path(&self, position: &Position2D) -> Result<(Vec<Vec<f64>>, f64)> {
        match (self.reproduction, &self.receiver) {
            (Reproduction::Method(m), Some(rx)) => {
                let w = panner::weights(m, &self.array, position, &self.opts)?;
                Ok((rx.combine(&w.weights), position.norm()))
            }
            _ => {
                let irs = self
                    .set
                    .translate_listener(&self.pose, position, self.opts.speed_of_sound, &self.channels)?;
                Ok((irs, self.array.radius()))
            }
        }
    }

    pub fn render(&self, signal: &[f64], position: &Position2D) -> Result<AudioBuffer> {
        let (irs, distance) = self.source_path(position)?;
        let x = propagate(signal, distance, self.opts.speed_of_sound, self.sample_rate());
        convolve_channels(&x, &irs, self.sample_rate())
    }
}
