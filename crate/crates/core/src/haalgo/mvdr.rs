//! Fixed MVDR beamformer over the six hearing-aid microphones, designed
//! for an isotropic (horizontal diffuse) noise field, with a real-valued
//! common post-filter gain applied to both front microphones.
//!
//! The post-filter is a Wiener gain for the front microphones. The noise
//! power at the reference microphone comes from the blocked signals
//! `x - d y`, which contain no target; the target power is what remains of
//! the beamformer output power after its expected residual noise.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{frame_smoothing, Algorithm, AlgorithmKind, Plan};
use crate::dsp::fft::rfft;
use crate::dsp::{db_to_amp, Spectrogram, Stft};
use crate::error::{Error, Result};
use crate::hrir::{ChannelSelection, HrirSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MvdrConfig {
    pub steering_azimuth: f64,
    /// Diagonal loading as a fraction of the covariance trace.
    pub diagonal_loading: f64,
    /// Designs whose loaded covariance exceeds this condition number fail.
    pub max_condition: f64,
    pub postfilter_floor_db: f64,
    /// Time constant of the power estimates driving the post-filter.
    pub postfilter_tau_s: f64,
}

impl Default for MvdrConfig {
    fn default() -> Self {
        Self {
            steering_azimuth: 0.0,
            diagonal_loading: 1e-3,
            max_condition: 1e10,
            postfilter_floor_db: -20.0,
            postfilter_tau_s: 0.02,
        }
    }
}

/// Per-bin weights `w` (output `w^H x`), steering vectors relative to the
/// left front microphone, and the loaded, normalized noise covariance.
#[derive(Debug, Clone)]
pub struct BeamformerDesign {
    pub frequencies: Vec<f64>,
    pub weights: Vec<DVector<Complex64>>,
    pub steering: Vec<DVector<Complex64>>,
    pub covariance: Vec<DMatrix<Complex64>>,
    /// False above the HRIR roll-off, where the reference passes through.
    pub designed: Vec<bool>,
}

/// Microphone position of the left front channel within the selection.
const REF: usize = 0;
/// Left and right front microphones within the selection.
const FRONT_PAIR: [usize; 2] = [0, 3];

/// Transfer functions of the six hearing-aid channels at the STFT bin
/// frequencies of a `frame`-point transform: `[bin][channel]`.
fn bin_responses(irs: &[Vec<f64>], frame: usize) -> Vec<Vec<Complex64>> {
    let len = irs[0].len();
    let factor = len.div_ceil(frame).max(1);
    let n = frame * factor;
    let spectra: Vec<Vec<Complex64>> = irs.iter().map(|h| rfft(h, n)).collect();
    (0..=frame / 2)
        .map(|k| spectra.iter().map(|s| s[k * factor]).collect())
        .collect()
}

pub fn design_mvdr(set: &HrirSet, steering_azimuth: f64, cfg: &MvdrConfig, frame: usize) -> Result<BeamformerDesign> {
    let chans = set.channel_indices(&ChannelSelection::beamformer())?;
    let m = chans.len();
    let fs = set.sample_rate() as f64;
    let bins = frame / 2 + 1;
    let mut phi = vec![DMatrix::<Complex64>::zeros(m, m); bins];
    let n_dir = set.directions().len();
    for d in 0..n_dir {
        let irs: Vec<Vec<f64>> = chans.iter().map(|&c| set.ir(d, c).to_vec()).collect();
        for (k, h) in bin_responses(&irs, frame).into_iter().enumerate() {
            let v = DVector::from_vec(h);
            phi[k] += &v * v.adjoint();
        }
    }
    let steer_irs = set.interpolate_channels(steering_azimuth, &chans);
    let steer = bin_responses(&steer_irs, frame);
    let mut out = BeamformerDesign {
        frequencies: (0..bins).map(|k| k as f64 * fs / frame as f64).collect(),
        weights: Vec::with_capacity(bins),
        steering: Vec::with_capacity(bins),
        covariance: Vec::with_capacity(bins),
        designed: Vec::with_capacity(bins),
    };
    let unit = {
        let mut e = DVector::<Complex64>::zeros(m);
        e[REF] = Complex64::new(1.0, 0.0);
        e
    };
    for (k, mut p) in phi.into_iter().enumerate() {
        p /= Complex64::new(n_dir as f64, 0.0);
        let f = out.frequencies[k];
        let d_ref = steer[k][REF];
        let p_ref = p[(REF, REF)].re;
        // above the HRIR roll-off there is nothing to design for
        if d_ref.norm() < 1e-6 || p_ref < 1e-12 {
            out.weights.push(unit.clone());
            out.steering.push(unit.clone());
            out.covariance.push(DMatrix::identity(m, m));
            out.designed.push(false);
            continue;
        }
        p /= Complex64::new(p_ref, 0.0);
        let trace: f64 = (0..m).map(|i| p[(i, i)].re).sum();
        for i in 0..m {
            p[(i, i)] += Complex64::new(cfg.diagonal_loading * trace, 0.0);
        }
        let eig = p.clone().symmetric_eigenvalues();
        let (lo, hi) = eig.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &e| (a.min(e), b.max(e)));
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if !(condition <= cfg.max_condition) {
            return Err(Error::IllConditioned {
                frequency_hz: f,
                condition,
            });
        }
        let d = DVector::from_iterator(m, steer[k].iter().map(|v| v / d_ref));
        let chol = p.clone().cholesky().ok_or(Error::IllConditioned {
            frequency_hz: f,
            condition,
        })?;
        let phi_inv_d = chol.solve(&d);
        let denom = d.dotc(&phi_inv_d);
        let w = phi_inv_d / denom;
        out.weights.push(w);
        out.steering.push(d);
        out.covariance.push(p);
        out.designed.push(true);
    }
    Ok(out)
}

pub struct Beamformer {
    design: Arc<BeamformerDesign>,
    cfg: MvdrConfig,
    stft: Stft,
    sample_rate: f64,
    /// Per bin: output noise power `w^H Phi w` and blocked noise power
    /// `tr(B Phi B^H)`, `B = I - d w^H`, both per unit reference noise power.
    residual: Vec<f64>,
    blocked: Vec<f64>,
}

impl Beamformer {
    pub fn new(design: Arc<BeamformerDesign>, cfg: MvdrConfig, stft: Stft, sample_rate: f64) -> Self {
        let (mut residual, mut blocked) = (Vec::new(), Vec::new());
        for ((w, d), p) in design.weights.iter().zip(&design.steering).zip(&design.covariance) {
            residual.push(w.dotc(&(p * w)).re);
            let b = DMatrix::identity(w.len(), w.len()) - d * w.adjoint();
            blocked.push((&b * p * b.adjoint()).trace().re);
        }
        Self {
            design,
            cfg,
            stft,
            sample_rate,
            residual,
            blocked,
        }
    }

    pub fn design(&self) -> &BeamformerDesign {
        &self.design
    }
}

impl Algorithm for Beamformer {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::Beamformer
    }

    fn stft(&self) -> &Stft {
        &self.stft
    }

    /// Wiener gain `S_T / (S_T + S_N)` with `S_N` the blocked-noise
    /// estimate at the reference microphone and `S_T = S_Y - (w^H Phi w) S_N`,
    /// limited to `[floor, 1]`.
    fn plan(&self, input: &[Spectrogram], _oracle_noise: Option<&[Spectrogram]>) -> Result<Plan> {
        let a = frame_smoothing(self.cfg.postfilter_tau_s, self.stft.hop(), self.sample_rate);
        let floor = db_to_amp(self.cfg.postfilter_floor_db);
        let bins = self.design.weights.len();
        let mut sy = vec![0.0; bins];
        let mut su = vec![0.0; bins];
        let frames = input[0].n_frames();
        let mut gains = Vec::with_capacity(frames);
        for t in 0..frames {
            let mut g = vec![1.0; bins];
            for k in 0..bins {
                if !self.design.designed[k] {
                    continue;
                }
                let (w, d) = (&self.design.weights[k], &self.design.steering[k]);
                let y: Complex64 = w.iter().zip(input).map(|(wi, x)| wi.conj() * x.frames[t][k]).sum();
                let pu: f64 = d.iter().zip(input).map(|(di, x)| (x.frames[t][k] - di * y).norm_sqr()).sum();
                sy[k] = a * sy[k] + (1.0 - a) * y.norm_sqr();
                su[k] = a * su[k] + (1.0 - a) * pu;
                let noise = su[k] / self.blocked[k];
                let target = (sy[k] - self.residual[k] * noise).max(0.0);
                if noise > 0.0 {
                    g[k] = (target / (target + noise)).clamp(floor, 1.0);
                }
            }
            gains.push(g);
        }
        Ok(Plan::Gain {
            gains,
            refs: FRONT_PAIR.to_vec(),
        })
    }
}
