//! Single-channel noise reduction with the Ephraim–Malah short-time
//! spectral amplitude estimator, driven by the true noise spectrum of each
//! frame and a decision-directed a-priori SNR.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{Algorithm, AlgorithmKind, Plan};
use crate::dsp::{Spectrogram, Stft};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScNrConfig {
    /// Decision-directed smoothing weight.
    pub dd_alpha: f64,
    /// Lower limit of the a-priori SNR.
    pub xi_min_db: f64,
}

impl Default for ScNrConfig {
    fn default() -> Self {
        Self {
            dd_alpha: 0.98,
            xi_min_db: -25.0,
        }
    }
}

/// `exp(-x) I0(x)` for `x >= 0` (polynomial approximations of Abramowitz
/// and Stegun 9.8.1 and 9.8.2).
pub(crate) fn i0e(x: f64) -> f64 {
    if x <= 3.75 {
        let t = (x / 3.75).powi(2);
        let i0 = 1.0
            + t * (3.5156229 + t * (3.0899424 + t * (1.2067492 + t * (0.2659732 + t * (0.0360768 + t * 0.0045813)))));
        i0 * (-x).exp()
    } else {
        let t = 3.75 / x;
        (0.39894228
            + t * (0.01328592
                + t * (0.00225319
                    + t * (-0.00157565
                        + t * (0.00916281 + t * (-0.02057706 + t * (0.02635537 + t * (-0.01647633 + t * 0.00392377))))))))
            / x.sqrt()
    }
}

/// `exp(-x) I1(x)` for `x >= 0` (Abramowitz and Stegun 9.8.3 and 9.8.4).
pub(crate) fn i1e(x: f64) -> f64 {
    if x <= 3.75 {
        let t = (x / 3.75).powi(2);
        let i1 = x
            * (0.5
                + t * (0.87890594 + t * (0.51498869 + t * (0.15084934 + t * (0.02658733 + t * (0.00301532 + t * 0.00032411))))));
        i1 * (-x).exp()
    } else {
        let t = 3.75 / x;
        (0.39894228
            + t * (-0.03988024
                + t * (-0.00362018
                    + t * (0.00163801
                        + t * (-0.01031555 + t * (0.02282967 + t * (-0.02895312 + t * (0.01787654 - t * 0.00420059))))))))
            / x.sqrt()
    }
}

/// MMSE short-time spectral amplitude gain for a-priori SNR `xi` and
/// a-posteriori SNR `gamma`.
pub fn mmse_stsa_gain(xi: f64, gamma: f64) -> f64 {
    let v = xi / (1.0 + xi) * gamma;
    if v > 500.0 {
        return xi / (1.0 + xi);
    }
    let h = v / 2.0;
    (PI.sqrt() / 2.0) * v.sqrt() / gamma * ((1.0 + v) * i0e(h) + v * i1e(h))
}

pub struct ScNr {
    cfg: ScNrConfig,
    stft: Stft,
}

impl ScNr {
    pub fn new(cfg: ScNrConfig, stft: Stft) -> Self {
        Self { cfg, stft }
    }
}

impl Algorithm for ScNr {
    fn kind(&self) -> AlgorithmKind {
        AlgorithmKind::ScNr
    }

    fn stft(&self) -> &Stft {
        &self.stft
    }

    fn plan(&self, input: &[Spectrogram], oracle_noise: Option<&[Spectrogram]>) -> Result<Plan> {
        let noise = oracle_noise
            .and_then(|n| n.first())
            .ok_or_else(|| Error::InvalidParameter("single-channel NR needs the noise signal".into()))?;
        let x = &input[0];
        if noise.n_frames() != x.n_frames() {
            return Err(Error::StemMismatch("noise and input differ in length".into()));
        }
        let bins = x.n_bins();
        let xi_min = 10f64.powf(self.cfg.xi_min_db / 10.0);
        let a = self.cfg.dd_alpha;
        let mut prev_amp2 = vec![0.0; bins];
        let mut gains = Vec::with_capacity(x.n_frames());
        for t in 0..x.n_frames() {
            let mut g = vec![1.0; bins];
            for k in 0..bins {
                let lambda = noise.frames[t][k].norm_sqr();
                let y2 = x.frames[t][k].norm_sqr();
                if lambda <= 0.0 {
                    // no noise in this bin: pass through
                    prev_amp2[k] = y2;
                    continue;
                }
                let gamma = (y2 / lambda).max(1e-12);
                let ml = (gamma - 1.0).max(0.0);
                let xi = if t == 0 { ml } else { a * prev_amp2[k] / lambda + (1.0 - a) * ml }.max(xi_min);
                let gk = mmse_stsa_gain(xi, gamma);
                g[k] = gk;
                prev_amp2[k] = gk * gk * y2;
            }
            gains.push(g);
        }
        Ok(Plan::Gain { gains, refs: vec![0] })
    }
}
