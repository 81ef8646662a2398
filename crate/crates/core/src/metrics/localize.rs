//! Binaural localization model: a complex gammatone filterbank, interaural
//! phase differences of the band signals (fine structure) and of their
//! envelopes, turned into time differences with the instantaneous
//! frequency, coherence-gated glimpses, and a lookup table from time
//! difference to direction built from free-field renderings of the same
//! HRIR set.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use super::rms_finite;
use crate::audio::AudioBuffer;
use crate::binsim::{Renderer, Reproduction};
use crate::dsp::{erb_bandwidth, erb_number, erb_number_to_hz};
use crate::error::{Error, Result};
use crate::geometry::{ListenerPose, Position2D, SpeakerArray};
use crate::hrir::{ChannelSelection, HrirSet};
use crate::panner::PannerOptions;
use crate::stimulus::white_noise;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LocalizerConfig {
    pub first_band_hz: f64,
    /// Bands up to here use the fine-structure phase.
    pub fine_structure_max_hz: f64,
    /// Bands above the fine-structure range and up to here use the envelope.
    pub envelope_max_hz: f64,
    /// Band spacing in ERB.
    pub band_spacing_erb: f64,
    pub coherence_tau_s: f64,
    pub envelope_coherence_tau_s: f64,
    pub coherence_threshold: f64,
    /// Center of the complex modulation filter applied to band envelopes.
    pub modulation_hz: f64,
    /// Glimpses are only taken from band levels within this range of the
    /// band's mean level.
    pub level_floor_db: f64,
    /// Rate at which glimpse conditions are evaluated.
    pub glimpse_rate_hz: f64,
    pub table_step_deg: f64,
    pub table_signal_s: f64,
    pub table_seed: u64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            first_band_hz: 236.0,
            fine_structure_max_hz: 1296.0,
            envelope_max_hz: 4000.0,
            band_spacing_erb: 1.0,
            coherence_tau_s: 0.005,
            envelope_coherence_tau_s: 0.02,
            coherence_threshold: 0.98,
            modulation_hz: 150.0,
            level_floor_db: -30.0,
            glimpse_rate_hz: 2000.0,
            table_step_deg: 5.0,
            table_signal_s: 0.5,
            table_seed: 0x10ca1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationEstimate {
    /// Mean direction in degrees (positive to the left) from the
    /// fine-structure bands, `None` without glimpses.
    pub fine: Option<f64>,
    pub envelope: Option<f64>,
    pub fine_glimpses: usize,
    pub envelope_glimpses: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PleResult {
    pub value: Option<f64>,
    /// Targets without an estimate in either condition.
    pub excluded: usize,
}

/// RMS difference of direction estimates over matching targets.
pub fn ple(reference: &[Option<f64>], test: &[Option<f64>]) -> Result<PleResult> {
    if reference.len() != test.len() {
        return Err(Error::GridMismatch("reference and test target lists differ".into()));
    }
    let mut excluded = 0;
    let diffs: Vec<f64> = reference
        .iter()
        .zip(test)
        .filter_map(|(r, t)| match (r, t) {
            (Some(r), Some(t)) => Some(r - t),
            _ => {
                excluded += 1;
                None
            }
        })
        .collect();
    Ok(PleResult {
        value: rms_finite(diffs),
        excluded,
    })
}

#[derive(Clone, Copy)]
struct Glimpse {
    ipd: f64,
    ild_db: f64,
    /// Instantaneous frequency of the band signal in Hz.
    freq: f64,
}

/// 4th-order all-pole complex gammatone: four cascaded complex one-pole
/// sections, unit gain at `fc`.
fn gammatone(x: &[f64], fc: f64, bandwidth: f64, fs: f64, order: usize) -> Vec<Complex64> {
    let r = (-2.0 * PI * bandwidth / fs).exp();
    let z = Complex64::from_polar(r, 2.0 * PI * fc / fs);
    let g = 1.0 - r;
    // All sections in one pass so successive samples pipeline.
    let mut s = vec![Complex64::new(0.0, 0.0); order];
    x.iter()
        .map(|&v| {
            let mut u = Complex64::new(v, 0.0);
            for st in s.iter_mut() {
                *st = u * g + *st * z;
                u = *st;
            }
            u
        })
        .collect()
}

fn one_pole(tau: f64, fs: f64) -> f64 {
    (-1.0 / (tau * fs)).exp()
}

/// Analytic modulation signal of a band: the envelope with its slowly
/// varying mean removed, through a complex band-pass at `fm`.
fn envelope_signal(band: &[Complex64], fm: f64, fs: f64) -> Vec<Complex64> {
    let a = one_pole(0.02, fs);
    let mut mean = 0.0;
    let e: Vec<f64> = band
        .iter()
        .map(|v| {
            let e = v.norm_sqr().sqrt();
            mean = a * mean + (1.0 - a) * e;
            e - mean
        })
        .collect();
    gammatone(&e, fm, fm, fs, 2)
}

/// Coherence-gated glimpses from a pair of complex band signals.
fn glimpses(l: &[Complex64], r: &[Complex64], tau: f64, skip: usize, fs: f64, cfg: &LocalizerConfig) -> Vec<Glimpse> {
    let n = l.len().min(r.len());
    if n == 0 {
        return Vec::new();
    }
    let a = one_pole(tau, fs);
    let mean_level: f64 = (0..n).map(|i| l[i].norm_sqr() + r[i].norm_sqr()).sum::<f64>() / n as f64;
    let level_floor = mean_level * 10f64.powf(cfg.level_floor_db / 10.0);
    let step = ((fs / cfg.glimpse_rate_hz).round() as usize).max(1);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut rot = Complex64::new(0.0, 0.0);
    let (mut pl, mut pr) = (0.0, 0.0);
    let mut prev_gamma = 0.0;
    let mut out = Vec::new();
    for i in 0..n {
        let p = l[i] * r[i].conj();
        let m = p.norm_sqr().sqrt();
        let u = if m > 0.0 { p / m } else { Complex64::new(0.0, 0.0) };
        acc = acc * a + u * (1.0 - a);
        pl = a * pl + (1.0 - a) * l[i].norm_sqr();
        pr = a * pr + (1.0 - a) * r[i].norm_sqr();
        if i > 0 {
            rot = rot * a + (l[i] * l[i - 1].conj() + r[i] * r[i - 1].conj()) * (1.0 - a);
        }
        if i % step != 0 {
            continue;
        }
        let gamma = acc.norm();
        let freq = rot.arg() * fs / (2.0 * PI);
        if i >= skip && gamma > cfg.coherence_threshold && gamma > prev_gamma && pl + pr > level_floor && m > 0.0 && freq > 0.0 {
            out.push(Glimpse {
                ipd: p.arg(),
                ild_db: 10.0 * (pl / pr).log10(),
                freq,
            });
        }
        prev_gamma = gamma;
    }
    out
}

/// Direction lookup for one band: interaural time difference in seconds
/// at each table angle.
#[derive(Debug, Clone)]
struct BandTable {
    itd: Vec<f64>,
}

impl BandTable {
    fn invert(&self, angles: &[f64], v: f64) -> f64 {
        let c = angles.len() / 2;
        let t = &self.itd;
        let (range, up): (Vec<usize>, bool) = if v >= t[c] { ((c..t.len()).collect(), true) } else { ((0..=c).rev().collect(), false) };
        for w in range.windows(2) {
            let (i, j) = (w[0], w[1]);
            if (t[i] - v) * (t[j] - v) <= 0.0 && t[i] != t[j] {
                let f = (v - t[i]) / (t[j] - t[i]);
                return angles[i] + f * (angles[j] - angles[i]);
            }
        }
        // beyond the table: the angle with the most extreme delay
        let best = range
            .iter()
            .copied()
            .max_by(|&i, &j| {
                let (a, b) = if up { (t[i], t[j]) } else { (-t[i], -t[j]) };
                a.total_cmp(&b)
            })
            .unwrap();
        angles[best]
    }

    fn bounds(&self) -> (f64, f64) {
        self.itd.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    }

    /// Time difference of a glimpse. Of the `2 pi` branches of its phase
    /// that fall inside the table range, the one on the side indicated by
    /// the level difference wins.
    fn itd_of(&self, g: &Glimpse) -> f64 {
        let (lo, hi) = self.bounds();
        let margin = 50e-6;
        let w = 2.0 * PI * g.freq;
        let cands: Vec<f64> = [g.ipd, g.ipd + 2.0 * PI, g.ipd - 2.0 * PI]
            .into_iter()
            .map(|p| p / w)
            .filter(|&c| c >= lo - margin && c <= hi + margin)
            .collect();
        match cands.len() {
            0 => g.ipd / w,
            1 => cands[0],
            _ => cands
                .iter()
                .copied()
                .find(|&c| c.signum() == g.ild_db.signum() && g.ild_db != 0.0)
                .unwrap_or_else(|| cands.iter().copied().min_by(|a, b| a.abs().total_cmp(&b.abs())).unwrap()),
        }
    }
}

pub struct Localizer {
    cfg: LocalizerConfig,
    sample_rate: f64,
    centers: Vec<f64>,
    n_fine: usize,
    angles: Vec<f64>,
    tables: Vec<BandTable>,
}

struct BandGlimpses {
    per_band: Vec<Vec<Glimpse>>,
}

impl Localizer {
    /// Builds the lookup table from free-field renderings of a noise
    /// stimulus at lateral angles -90..90 through the in-ear channels.
    pub fn build(set: &HrirSet, cfg: &LocalizerConfig, speed_of_sound: f64) -> Result<Self> {
        let fs = set.sample_rate() as f64;
        let mut centers = Vec::new();
        let mut e = erb_number(cfg.first_band_hz);
        while erb_number_to_hz(e) <= cfg.envelope_max_hz * (1.0 + 1e-9) {
            centers.push(erb_number_to_hz(e));
            e += cfg.band_spacing_erb;
        }
        let n_fine = centers.iter().filter(|&&f| f <= cfg.fine_structure_max_hz * (1.0 + 1e-3)).count();
        let steps = (90.0 / cfg.table_step_deg).round() as i64;
        let angles: Vec<f64> = (-steps..=steps).map(|i| i as f64 * cfg.table_step_deg).collect();
        let mut loc = Self {
            cfg: cfg.clone(),
            sample_rate: fs,
            centers,
            n_fine,
            angles,
            tables: Vec::new(),
        };
        let array = SpeakerArray::new(4, set.distance(), 0.0)?;
        let opts = PannerOptions {
            speed_of_sound,
            ..PannerOptions::default()
        };
        let renderer = Renderer::new(set, &array, ListenerPose::center(), Reproduction::Reference, &ChannelSelection::localization(), opts)?;
        let probe = white_noise((cfg.table_signal_s * fs) as usize, cfg.table_seed);
        let per_angle: Vec<Vec<(f64, f64)>> = loc
            .angles
            .par_iter()
            .map(|&a| -> Result<Vec<(f64, f64)>> {
                let x = renderer.render(&probe, &Position2D::from_polar(a, set.distance()))?;
                Ok(loc.cross_phases(&x))
            })
            .collect::<Result<_>>()?;
        let c = loc.angles.len() / 2;
        for b in 0..loc.centers.len() {
            let raw: Vec<f64> = per_angle.iter().map(|row| row[b].0).collect();
            let mut ipd = raw.clone();
            // unwrap outward from the median plane
            for i in c + 1..raw.len() {
                ipd[i] = ipd[i - 1] + wrap_pi(raw[i] - ipd[i - 1]);
            }
            for i in (0..c).rev() {
                ipd[i] = ipd[i + 1] + wrap_pi(raw[i] - ipd[i + 1]);
            }
            let itd = ipd.iter().zip(&per_angle).map(|(p, row)| p / (2.0 * PI * row[b].1)).collect();
            loc.tables.push(BandTable { itd });
        }
        Ok(loc)
    }

    pub fn band_centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn fine_structure_bands(&self) -> usize {
        self.n_fine
    }

    /// Band signals of both ears, `(left, right, is_fine_structure)`.
    fn band_pairs(&self, x: &AudioBuffer) -> Vec<(Vec<Complex64>, Vec<Complex64>, bool)> {
        let fs = self.sample_rate;
        self.centers
            .iter()
            .enumerate()
            .map(|(b, &fc)| {
                let bw = 1.019 * erb_bandwidth(fc);
                let yl = gammatone(x.channel(0), fc, bw, fs, 4);
                let yr = gammatone(x.channel(1), fc, bw, fs, 4);
                if b < self.n_fine {
                    (yl, yr, true)
                } else {
                    let fm = self.cfg.modulation_hz;
                    (envelope_signal(&yl, fm, fs), envelope_signal(&yr, fm, fs), false)
                }
            })
            .collect()
    }

    /// Phase of the long-term interaural cross spectrum and mean
    /// instantaneous frequency in every band, used for the lookup table (no
    /// glimpse gating: the table stimulus is a single anechoic source).
    fn cross_phases(&self, x: &AudioBuffer) -> Vec<(f64, f64)> {
        let skip = (0.02 * self.sample_rate) as usize;
        self.band_pairs(x)
            .iter()
            .map(|(l, r, _)| {
                let cross: Complex64 = l.iter().zip(r).skip(skip).map(|(a, b)| a * b.conj()).sum();
                let rot: Complex64 = (skip.max(1)..l.len()).map(|i| l[i] * l[i - 1].conj() + r[i] * r[i - 1].conj()).sum();
                (cross.arg(), rot.arg() * self.sample_rate / (2.0 * PI))
            })
            .collect()
    }

    fn analyze(&self, x: &AudioBuffer) -> BandGlimpses {
        let fs = self.sample_rate;
        let skip = (0.02 * fs) as usize;
        let per_band = self
            .band_pairs(x)
            .iter()
            .map(|(l, r, fine)| {
                let tau = if *fine { self.cfg.coherence_tau_s } else { self.cfg.envelope_coherence_tau_s };
                glimpses(l, r, tau, skip, fs, &self.cfg)
            })
            .collect();
        BandGlimpses { per_band }
    }

    /// Direction estimate of a two-channel in-ear signal (left, right).
    pub fn localize(&self, binaural: &AudioBuffer) -> Result<LocalizationEstimate> {
        if binaural.channels() != 2 {
            return Err(Error::ChannelMismatch {
                expected: 2,
                found: binaural.channels(),
            });
        }
        if binaural.sample_rate as f64 != self.sample_rate {
            return Err(Error::RateMismatch {
                expected: self.sample_rate as u32,
                found: binaural.sample_rate,
            });
        }
        let g = self.analyze(binaural);
        let mut sums = [(0.0, 0usize); 2];
        for (b, gl) in g.per_band.iter().enumerate() {
            let which = usize::from(b >= self.n_fine);
            for v in gl {
                let itd = self.tables[b].itd_of(v);
                sums[which].0 += self.tables[b].invert(&self.angles, itd);
                sums[which].1 += 1;
            }
        }
        let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
        Ok(LocalizationEstimate {
            fine: mean(sums[0]),
            envelope: mean(sums[1]),
            fine_glimpses: sums[0].1,
            envelope_glimpses: sums[1].1,
        })
    }
}

fn wrap_pi(x: f64) -> f64 {
    (x + PI).rem_euclid(2.0 * PI) - PI
}
