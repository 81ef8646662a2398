//! Adaptive differential microphone: forward and backward cardioids from a
//! front/rear omni pair by delay-and-subtract, combined as
//! `C_F - beta C_B` with `beta` adapted per band by normalized LMS to
//! minimize output power, followed by low-frequency equalization.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Algorithm, AlgorithmKind, Plan};
use crate::dsp::{db_to_amp, Spectrogram, Stft};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdmConfig {
    /// Normalized LMS step size.
    pub step: f64,
    /// Band edges in Hz; `beta` is adapted independently in each band.
    pub band_edges_hz: Vec<f64>,
    pub initial_beta: f64,
    /// Upper limit of the low-frequency equalization gain.
    pub eq_max_db: f64,
}

impl Default for AdmConfig {
    fn default() -> Self {
        Self {
            step: 0.05,
            band_edges_hz: vec![0.0, 707.0, 1414.0, 2828.0, f64::INFINITY],
            initial_beta: 0.0,
            eq_max_db: 30.0,
        }
    }
}

pub struct Adm {
    cfg: AdmConfig,
    stft: Stft,
    /// `exp(-i w T)` per bin.
    delay: Vec<Complex64>,
    eq: Vec<f64>,
    band_of_bin: Vec<usize>,
}

impl Adm {
    /// `spacing` is the front-to-rear microphone distance in meters.
    pub fn new(cfg: AdmConfig, spacing: f64, speed_of_sound: f64, stft: Stft, sample_rate: f64) -> Self {
        let t = spacing / speed_of_sound;
        let bins = stft.n_bins();
        let eq_max = db_to_amp(cfg.eq_max_db);
        let freqs: Vec<f64> = (0..bins).map(|k| stft.bin_frequency(k, sample_rate)).collect();
        let delay = freqs.iter().map(|f| Complex64::from_polar(1.0, -2.0 * PI * f * t)).collect();
        let eq = freqs
            .iter()
            .map(|f| {
                let r = (Complex64::new(1.0, 0.0) - Complex64::from_polar(1.0, -4.0 * PI * f * t)).norm();
                if r * eq_max < 1.0 { eq_max } else { 1.0 / r }
            })
            .collect();
        let n_bands = cfg.band_edges_hz.len().saturating_sub(1).max(1);
        let band_of_bin = freqs
            .iter()
            .map(|&f| {
                (0..n_bands)
                    .find(|&b| f >= cfg.band_edges_hz[b] && f < cfg.band_edges_hz[b + 1])
                    .unwrap_or(n_bands - 1)
            })
            .collect();
        Self {
            cfg,
            stft,
            delay,
            eq,
            band_of_bin,
        }
    }

    fn n_bands(&self) -> usize {
        self.cfg.band_edges_hz.len().saturating_sub(1).max(1)
    }
}

impl Algorithm for Adm {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Adm
    }

    fn stft(&self) -> &Stft {
        &self.stft
    }

    fn plan(&self, input: &[Spectrogram], _oracle_noise: Option<&[Spectrogram]>) -> Result<Plan> {
        let (front, rear) = (&input[0], &input[1]);
        let nb = self.n_bands();
        let mut beta = vec![self.cfg.initial_beta.clamp(0.0, 1.0); nb];
        let mut coeffs = Vec::with_capacity(front.n_frames());
        for t in 0..front.n_frames() {
            let mut ct = Vec::with_capacity(self.delay.len());
            let mut num = vec![0.0; nb];
            let mut den = vec![0.0; nb];
            for (k, &z) in self.delay.iter().enumerate() {
                let f = front.frames[t][k];
                let b = rear.frames[t][k];
                let cf = f - b * z;
                let cb = b - f * z;
                let band = self.band_of_bin[k];
                let y = cf - cb * beta[band];
                num[band] += (cb.conj() * y).re;
                den[band] += cb.norm_sqr();
                let e = self.eq[k];
                // Y = (C_F - beta C_B) EQ written in terms of F and B
                ct.push(vec![(1.0 + z * beta[band]) * e, -(z + beta[band]) * e]);
            }
            for b in 0..nb {
                if den[b] > 0.0 {
                    beta[b] = (beta[b] + self.cfg.step * num[b] / den[b]).clamp(0.0, 1.0);
                }
            }
            coeffs.push(ct);
        }
        Ok(Plan::Mix { coeffs })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binsim::{render_stems, Renderer, Reproduction, SceneSpec, SourceSpec};
    use crate::dsp::{power, BandGrid};
    use crate::geometry::{ListenerPose, SpeakerArray};
    use crate::haalgo::testutil::{diffuse_stems, indices, set};
    use crate::haalgo::{process, shadow_filter};
    use crate::hrir::{ChannelRole, ChannelSelection};
    use crate::panner::PannerOptions;
    use crate::stimulus::{synthetic_speech, white_noise, TalkerParams};
    use std::sync::Arc;

    fn adm() -> Adm {
        Adm::new(AdmConfig::default(), 0.01, 343.0, Stft::default(), 48_000.0)
    }

    /// Non-adaptive front cardioid (beta held at zero).
    fn fixed() -> Adm {
        let cfg = AdmConfig {
            step: 0.0,
            ..AdmConfig::default()
        };
        Adm::new(cfg, 0.01, 343.0, Stft::default(), 48_000.0)
    }

    #[test]
    fn rear_noise_is_cancelled() {
        let len = 96_000;
        let scene = SceneSpec {
            sample_rate: 48_000,
            target: SourceSpec {
                signal: Arc::new(synthetic_speech(len, 48_000.0, &TalkerParams::female(1))),
                azimuth: 0.0,
                distance: 3.0,
                level_db: 0.0,
            },
            noises: vec![SourceSpec {
                signal: Arc::new(white_noise(len, 2)),
                azimuth: 180.0,
                distance: 3.0,
                level_db: 0.0,
            }],
            nominal_snr_db: 0.0,
        };
        let array = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let r = Renderer::new(set(), &array, ListenerPose::center(), Reproduction::Reference, &ChannelSelection::all(), PannerOptions::default()).unwrap();
        let stems = render_stems(&scene, &r, ChannelRole::InEarL).unwrap();
        let sel = indices(&ChannelSelection::adm().roles);
        let mix = stems.mix(0.0).unwrap().select(&sel);
        let out = shadow_filter(&adm(), &mix).unwrap();
        // skip the adaptation transient
        let s = 24_000;
        let g = BandGrid::third_octave();
        let f = |x: &[f64]| g.band_powers(&x[s..], 48_000.0);
        let (ti, ni) = (f(mix.target.channel(0)), f(mix.noise.channel(0)));
        let (to, no) = (f(out.target.channel(0)), f(out.noise.channel(0)));
        let imp: Vec<f64> = (0..g.len()).map(|b| 10.0 * ((to[b] / no[b]) / (ti[b] / ni[b])).log10()).collect();
        let mean = imp.iter().sum::<f64>() / imp.len() as f64;
        let best = imp.iter().cloned().fold(f64::MIN, f64::max);
        assert!(mean >= 10.0, "band-averaged improvement {mean} dB");
        assert!(best >= 15.0, "best band {best} dB");
    }

    #[test]
    fn diffuse_noise_improvement_in_expected_range() {
        let stems = diffuse_stems(2.0);
        let sel = indices(&ChannelSelection::adm().roles);
        let mix = stems.mix(0.0).unwrap().select(&sel);
        let out = shadow_filter(&adm(), &mix).unwrap();
        let g = BandGrid::third_octave();
        let fs = 48_000.0;
        let (ti, ni) = (g.band_powers(mix.target.channel(0), fs), g.band_powers(mix.noise.channel(0), fs));
        let (to, no) = (g.band_powers(out.target.channel(0), fs), g.band_powers(out.noise.channel(0), fs));
        let mean: f64 = (0..g.len()).map(|b| 10.0 * ((to[b] / no[b]) / (ti[b] / ni[b])).log10()).sum::<f64>() / g.len() as f64;
        assert!((2.0..=8.0).contains(&mean), "mean improvement {mean} dB");
    }

    #[test]
    fn frontal_target_alone_stays_close_to_front_cardioid() {
        let stems = diffuse_stems(1.0);
        let sel = indices(&ChannelSelection::adm().roles);
        let x = stems.target.select(&sel);
        let out = process(&adm(), &x, None).unwrap();
        let cardioid = process(&fixed(), &x, None).unwrap();
        let ratio = 10.0 * (power(out.channel(0)) / power(cardioid.channel(0))).log10();
        assert!(ratio.abs() < 1.0, "{ratio} dB");
    }

    #[test]
    fn output_power_not_above_front_cardioid() {
        let stems = diffuse_stems(2.0);
        let sel = indices(&ChannelSelection::adm().roles);
        let x = stems.noise.select(&sel);
        let adaptive = process(&adm(), &x, None).unwrap();
        let cardioid = process(&fixed(), &x, None).unwrap();
        let s = 24_000;
        assert!(power(&adaptive.channel(0)[s..]) <= power(&cardioid.channel(0)[s..]));
    }
}
