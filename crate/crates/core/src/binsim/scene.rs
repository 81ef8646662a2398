//! Target-plus-noise scenes with SNR calibration at a reference channel.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Renderer, Reproduction};
use crate::audio::AudioBuffer;
use crate::dsp::{db_to_amp, power};
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, ListenerPose, Position2D, SpeakerArray};
use crate::hrir::{ChannelRole, ChannelSelection, HrirSet};
use crate::panner::PannerOptions;

#[derive(Debug, Clone)]
pub struct SourceSpec {
    pub signal: Arc<Vec<f64>>,
    pub azimuth: f64,
    pub distance: f64,
    /// Level offset applied before calibration, dB.
    pub level_db: f64,
}

impl SourceSpec {
    pub fn position(&self) -> Position2D {
        Position2D::from_polar(self.azimuth, self.distance)
    }
}

#[derive(Debug, Clone)]
pub struct SceneSpec {
    pub sample_rate: u32,
    pub target: SourceSpec,
    pub noises: Vec<SourceSpec>,
    pub nominal_snr_db: f64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        let len = self.target.signal.len();
        for (i, n) in self.noises.iter().enumerate() {
            if n.signal.len() != len {
                return Err(Error::InvalidParameter(format!("noise {i} length differs from target")));
            }
            for m in &self.noises[..i] {
                if angular_distance(m.azimuth, n.azimuth) < 1e-9 {
                    return Err(Error::InvalidParameter(format!("duplicate noise azimuth {}°", n.azimuth)));
                }
            }
        }
        for s in std::iter::once(&self.target).chain(&self.noises) {
            if !(s.distance > 0.0 && s.distance.is_finite() && s.azimuth.is_finite()) {
                return Err(Error::InvalidParameter("source position must be finite and off-origin".into()));
            }
        }
        Ok(())
    }
}

/// Separately rendered target and (level-weighted, summed) noise, before
/// SNR calibration.
#[derive(Debug, Clone)]
pub struct SceneStems {
    pub target: AudioBuffer,
    pub noise: AudioBuffer,
    /// Channel index (within the stems) used for SNR calibration.
    pub calibration_channel: usize,
}

#[derive(Debug, Clone)]
pub struct RenderOutput {
    pub mixture: AudioBuffer,
    pub target: AudioBuffer,
    pub noise: AudioBuffer,
    /// Gain applied to the noise stem to reach the nominal SNR.
    pub noise_gain: f64,
}

impl RenderOutput {
    pub fn select(&self, channels: &[usize]) -> RenderOutput {
        RenderOutput {
            mixture: self.mixture.select(channels),
            target: self.target.select(channels),
            noise: self.noise.select(channels),
            noise_gain: self.noise_gain,
        }
    }
}

impl SceneStems {
    /// Scales the noise so that the broadband SNR at the calibration
    /// channel equals `snr_db`, and forms the mixture.
    pub fn mix(&self, snr_db: f64) -> Result<RenderOutput> {
        let pt = power(self.target.channel(self.calibration_channel));
        let pn = power(self.noise.channel(self.calibration_channel));
        if !(pt > 0.0) || !(pn > 0.0) {
            return Err(Error::CannotCalibrate(format!(
                "reference channel power is zero (target {pt:e}, noise {pn:e})"
            )));
        }
        let g = (pt / pn).sqrt() * db_to_amp(-snr_db);
        let noise = self.noise.scaled(g);
        let mixture = self.target.add(&noise)?;
        Ok(RenderOutput {
            mixture,
            target: self.target.clone(),
            noise,
            noise_gain: g,
        })
    }
}

/// Renders target and noises of a scene with `renderer`. The renderer's
/// selection must include `calibration` (normally the left in-ear channel).
pub fn render_stems(scene: &SceneSpec, renderer: &Renderer, calibration: ChannelRole) -> Result<SceneStems> {
    scene.validate()?;
    if scene.sample_rate != renderer.sample_rate() {
        return Err(Error::RateMismatch {
            expected: renderer.sample_rate(),
            found: scene.sample_rate,
        });
    }
    let calibration_channel = renderer
        .selection()
        .position(calibration)
        .ok_or_else(|| Error::InvalidParameter(format!("calibration channel {calibration} not rendered")))?;
    let target = renderer
        .render(&scene.target.signal, &scene.target.position())?
        .scaled(db_to_amp(scene.target.level_db));
    let mut noise = AudioBuffer::silent(target.sample_rate, target.channels(), target.len());
    for n in &scene.noises {
        let r = renderer.render(&n.signal, &n.position())?;
        noise.add_assign_scaled(&r, db_to_amp(n.level_db))?;
    }
    Ok(SceneStems {
        target,
        noise,
        calibration_channel,
    })
}

/// Renders a scene at its nominal SNR, calibrated at the left in-ear
/// channel, returning the requested channels.
pub fn mix_scene(
    scene: &SceneSpec,
    reproduction: Reproduction,
    array: &SpeakerArray,
    set: &HrirSet,
    pose: ListenerPose,
    sel: &ChannelSelection,
    opts: PannerOptions,
) -> Result<RenderOutput> {
    let mut roles = sel.roles.clone();
    if !roles.contains(&ChannelRole::InEarL) {
        roles.push(ChannelRole::InEarL);
    }
    let renderer = Renderer::new(set, array, pose, reproduction, &ChannelSelection::new(&roles), opts)?;
    let stems = render_stems(scene, &renderer, ChannelRole::InEarL)?;
    let out = stems.mix(scene.nominal_snr_db)?;
    Ok(out.select(&(0..sel.len()).collect::<Vec<_>>()))
}

/// `count` noise positions with distinct uniformly random azimuths and
/// distances uniform in `[min_distance, max_distance]`.
pub fn random_noise_layout(count: usize, seed: u64, min_distance: f64, max_distance: f64) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(f64, f64)> = Vec::with_capacity(count);
    while out.len() < count {
        let az: f64 = rng.gen_range(0.0..360.0);
        let d: f64 = rng.gen_range(min_distance..=max_distance);
        if out.iter().all(|&(a, _)| angular_distance(a, az) > 1e-6) {
            out.push((az, d));
        }
    }
    out
}

/// Scene description file (TOML):
///
/// ```toml
/// nominal_snr_db = 0.0
/// [target]
/// path = "speech.wav"
/// azimuth = 0.0
/// distance = 3.0
/// [[noise]]
/// path = "babble.wav"
/// azimuth = 135.0
/// distance = 2.0
/// level_db = 0.0
/// ```
///
/// Relative paths are resolved against the file's directory. Noise
/// signals are cut or zero-padded to the target length.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub nominal_snr_db: f64,
    pub target: SceneFileSource,
    #[serde(default)]
    pub noise: Vec<SceneFileSource>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFileSource {
    pub path: PathBuf,
    pub azimuth: f64,
    pub distance: f64,
    #[serde(default)]
    pub level_db: f64,
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<SceneFile> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_scene(&self, base_dir: &Path, sample_rate: u32) -> Result<SceneSpec> {
        let read = |s: &SceneFileSource, len: Option<usize>| -> Result<SourceSpec> {
            let p = if s.path.is_absolute() { s.path.clone() } else { base_dir.join(&s.path) };
            let buf = AudioBuffer::read_wav(&p)?;
            if buf.sample_rate != sample_rate {
                return Err(Error::RateMismatch {
                    expected: sample_rate,
                    found: buf.sample_rate,
                });
            }
            let mut x = buf.channel(0).to_vec();
            if let Some(l) = len {
                x.resize(l, 0.0);
            }
            Ok(SourceSpec {
                signal: Arc::new(x),
                azimuth: s.azimuth,
                distance: s.distance,
                level_db: s.level_db,
            })
        };
        let target = read(&self.target, None)?;
        let len = target.signal.len();
        let noises = self.noise.iter().map(|n| read(n, Some(len))).collect::<Result<_>>()?;
        let scene = SceneSpec {
            sample_rate,
            target,
            noises,
            nominal_snr_db: self.nominal_snr_db,
        };
        scene.validate()?;
        Ok(scene)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hrir::{synth_sphere_hrir, SphereOptions};
    use crate::panner::ReproductionMethod;
    use crate::stimulus::white_noise;

    fn scene(noises: usize, snr: f64) -> SceneSpec {
        let layout = random_noise_layout(noises, 11, 1.5, 2.5);
        SceneSpec {
            sample_rate: 48_000,
            target: SourceSpec {
                signal: Arc::new(white_noise(4800, 1)),
                azimuth: 0.0,
                distance: 3.0,
                level_db: 0.0,
            },
            noises: layout
                .iter()
                .enumerate()
                .map(|(i, &(azimuth, distance))| SourceSpec {
                    signal: Arc::new(white_noise(4800, 100 + i as u64)),
                    azimuth,
                    distance,
                    level_db: 0.0,
                })
                .collect(),
            nominal_snr_db: snr,
        }
    }

    #[test]
    fn calibrated_snr_and_additivity() {
        let set = synth_sphere_hrir(&SphereOptions::default()).unwrap();
        let array = SpeakerArray::new(8, 3.0, 0.0).unwrap();
        for (n, snr) in [(1, 0.0), (3, 20.0), (3, -7.5)] {
            let sc = scene(n, snr);
            let out = mix_scene(
                &sc,
                Reproduction::Method(ReproductionMethod::Vbap),
                &array,
                &set,
                ListenerPose::center(),
                &ChannelSelection::localization(),
                PannerOptions::default(),
            )
            .unwrap();
            let measured = 10.0 * (power(out.target.channel(0)) / power(out.noise.channel(0))).log10();
            assert!((measured - snr).abs() < 0.01);
            for c in 0..2 {
                for i in 0..out.mixture.len() {
                    let s = out.target.samples[c][i] + out.noise.samples[c][i];
                    assert!((out.mixture.samples[c][i] - s).abs() <= 1e-12 * s.abs().max(1.0));
                }
            }
        }
    }

    #[test]
    fn noise_gain_follows_power_ratio() {
        let target = AudioBuffer::mono(48_000, vec![1.0, -1.0, 1.0, -1.0]);
        let noise = AudioBuffer::mono(48_000, vec![2.0, 2.0, -2.0, -2.0]);
        let stems = SceneStems {
            target,
            noise,
            calibration_channel: 0,
        };
        let at0 = stems.mix(0.0).unwrap().noise_gain;
        let at20 = stems.mix(20.0).unwrap().noise_gain;
        assert!((at0 - 0.5).abs() < 1e-12);
        assert!((at20 / at0 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn silent_stem_cannot_calibrate() {
        let stems = SceneStems {
            target: AudioBuffer::mono(48_000, vec![1.0; 4]),
            noise: AudioBuffer::mono(48_000, vec![0.0; 4]),
            calibration_channel: 0,
        };
        assert!(matches!(stems.mix(0.0), Err(Error::CannotCalibrate(_))));
    }

    #[test]
    fn layout_is_seeded_and_distinct() {
        let a = random_noise_layout(20, 5, 1.5, 4.0);
        assert_eq!(a, random_noise_layout(20, 5, 1.5, 4.0));
        assert_ne!(a, random_noise_layout(20, 6, 1.5, 4.0));
        for (i, p) in a.iter().enumerate() {
            assert!((1.5..=4.0).contains(&p.1));
            for q in &a[..i] {
                assert!(angular_distance(p.0, q.0) > 1e-6);
            }
        }
    }

    #[test]
    fn duplicate_noise_azimuths_are_rejected() {
        let mut sc = scene(2, 0.0);
        sc.noises[1].azimuth = sc.noises[0].azimuth + 360.0;
        assert!(sc.validate().is_err());
    }
}
