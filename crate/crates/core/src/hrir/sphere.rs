//! Rigid-sphere head model: pressure on the surface of a sphere due to a
//! point source at finite distance, evaluated as a spherical-harmonic
//! series and sampled at ear and behind-the-ear microphone positions.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ChannelRole, HrirSet, HrirSetInfo};
use crate::dsp::fft::irfft;
use crate::error::{Error, Result};
use crate::geometry::{angular_distance, wrap_360};
use crate::panner::DEFAULT_SPEED_OF_SOUND;

const MAX_TERMS: usize = 600;

/// Microphone placement on the sphere, all in the horizontal plane.
/// Left-side positions are mirrored to the right.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MicLayout {
    pub head_radius: f64,
    /// Azimuth of the left ear-canal microphone.
    pub in_ear_azimuth: f64,
    /// Azimuth of the left front hearing-aid microphone.
    pub bte_front_azimuth: f64,
    /// Front-to-rear arc length along the surface; mid sits halfway.
    pub bte_spacing: f64,
}

impl Default for MicLayout {
    fn default() -> Self {
        Self {
            head_radius: 0.0875,
            in_ear_azimuth: 90.0,
            bte_front_azimuth: 95.0,
            bte_spacing: 0.01,
        }
    }
}

impl MicLayout {
    /// Microphone azimuths in [`ChannelRole::ALL`] order.
    pub fn azimuths(&self) -> [f64; 8] {
        let arc = (self.bte_spacing / self.head_radius).to_degrees();
        let f = self.bte_front_azimuth;
        let left = [f, f + arc / 2.0, f + arc];
        [
            self.in_ear_azimuth,
            wrap_360(-self.in_ear_azimuth),
            left[0],
            left[1],
            left[2],
            wrap_360(-left[0]),
            wrap_360(-left[1]),
            wrap_360(-left[2]),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SphereOptions {
    pub sample_rate: u32,
    pub azimuth_step: f64,
    /// Source distance from the head center in meters.
    pub distance: f64,
    pub ir_len: usize,
    pub speed_of_sound: f64,
    pub layout: MicLayout,
    /// Raised-cosine roll-off band applied before the inverse transform.
    pub taper_start_hz: f64,
    pub taper_end_hz: f64,
}

impl Default for SphereOptions {
    fn default() -> Self {
        Self {
            sample_rate: 48_000,
            azimuth_step: 5.0,
            distance: 3.0,
            ir_len: 4800,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            layout: MicLayout::default(),
            taper_start_hz: 16_000.0,
            taper_end_hz: 22_000.0,
        }
    }
}

/// Spherical Hankel functions of the first kind `h_0 ..= h_{n_max}` by
/// upward recurrence.
fn hankel_sequence(x: f64, n_max: usize) -> Vec<Complex64> {
    let e = Complex64::from_polar(1.0, x);
    let i = Complex64::i();
    let mut h = Vec::with_capacity(n_max + 1);
    h.push(-i * e / x);
    if n_max >= 1 {
        h.push(-e * (x + i) / (x * x));
    }
    for n in 1..n_max {
        let next = h[n] * ((2 * n + 1) as f64 / x) - h[n - 1];
        h.push(next);
    }
    h
}

/// Series coefficients `c_n` such that the normalized surface response at
/// polar angle `theta` is `sum_n c_n P_n(cos theta)`. Uses the physics time
/// convention; `mu = ka`, `rho = r/a`.
fn series_coefficients(mu: f64, rho: f64) -> std::result::Result<Vec<Complex64>, usize> {
    let x = mu * rho;
    let scale = -(rho / mu) * Complex64::from_polar(1.0, -x);
    let h_far = hankel_sequence(x, MAX_TERMS + 1);
    let h_near = hankel_sequence(mu, MAX_TERMS + 1);
    let mut coeffs = Vec::new();
    let mut magnitude_sum = 0.0;
    let mut quiet = 0;
    for n in 0..=MAX_TERMS {
        let deriv = if n == 0 {
            -h_near[1]
        } else {
            h_near[n - 1] - h_near[n] * ((n + 1) as f64 / mu)
        };
        let c = scale * (2 * n + 1) as f64 * h_far[n] / deriv;
        if !c.re.is_finite() || !c.im.is_finite() {
            // the near-field Hankel value overflowed; the term is zero only
            // if the numerator is finite
            if h_far[n].re.is_finite() && quiet >= 1 {
                return Ok(coeffs);
            }
            return Err(n);
        }
        coeffs.push(c);
        magnitude_sum += c.norm();
        if c.norm() < 1e-13 * magnitude_sum && n as f64 > mu {
            quiet += 1;
            if quiet >= 3 {
                return Ok(coeffs);
            }
        } else {
            quiet = 0;
        }
    }
    Err(MAX_TERMS)
}

fn evaluate(coeffs: &[Complex64], cos_theta: f64) -> Complex64 {
    let mut p_prev = 1.0;
    let mut p = cos_theta;
    let mut sum = coeffs[0];
    for (n, c) in coeffs.iter().enumerate().skip(1) {
        if n > 1 {
            let next = ((2 * n - 1) as f64 * cos_theta * p - (n - 1) as f64 * p_prev) / n as f64;
            p_prev = p;
            p = next;
        }
        sum += c * p;
    }
    sum
}

/// Transfer function (signal-processing sign convention, i.e. a delay of
/// `t` is `exp(-i w t)`) from a point source to a point on the sphere,
/// normalized by the free-field pressure at the sphere center.
pub fn sphere_transfer(freq: f64, theta_deg: f64, head_radius: f64, distance: f64, c: f64) -> Result<Complex64> {
    if freq <= 0.0 {
        return Ok(Complex64::new(1.0, 0.0));
    }
    let mu = 2.0 * std::f64::consts::PI * freq * head_radius / c;
    let coeffs = series_coefficients(mu, distance / head_radius).map_err(|terms| Error::SeriesDivergence {
        frequency_hz: freq,
        terms,
    })?;
    Ok(evaluate(&coeffs, theta_deg.to_radians().cos()).conj())
}

/// Builds a full eight-channel set from the rigid-sphere model.
pub fn synth_sphere_hrir(opts: &SphereOptions) -> Result<HrirSet> {
    let a = opts.layout.head_radius;
    if !(0.05..=0.12).contains(&a) {
        return Err(Error::InvalidParameter(format!("head radius {a} m outside [0.05, 0.12]")));
    }
    if opts.distance <= a {
        return Err(Error::InvalidParameter("source distance must exceed the head radius".into()));
    }
    if opts.ir_len < 64 {
        return Err(Error::InvalidParameter("IR length too short".into()));
    }
    let fs = opts.sample_rate as f64;
    let n = opts.ir_len;
    let c = opts.speed_of_sound;
    let n_dir = (360.0 / opts.azimuth_step).round() as usize;
    let mic_az = opts.layout.azimuths();
    let bins = n / 2 + 1;
    let rho = opts.distance / a;
    // per bin: series coefficients, delay term and taper
    let mut per_bin = Vec::with_capacity(bins);
    for k in 0..bins {
        let f = k as f64 * fs / n as f64;
        let taper = if f <= opts.taper_start_hz {
            1.0
        } else if f >= opts.taper_end_hz {
            0.0
        } else {
            let u = (f - opts.taper_start_hz) / (opts.taper_end_hz - opts.taper_start_hz);
            0.5 + 0.5 * (std::f64::consts::PI * u).cos()
        };
        if taper == 0.0 {
            per_bin.push(None);
            continue;
        }
        let delay = Complex64::from_polar(taper, -2.0 * std::f64::consts::PI * f * opts.distance / c);
        if k == 0 {
            per_bin.push(Some((vec![Complex64::new(1.0, 0.0)], delay, true)));
            continue;
        }
        let mu = 2.0 * std::f64::consts::PI * f * a / c;
        let coeffs = series_coefficients(mu, rho).map_err(|terms| Error::SeriesDivergence {
            frequency_hz: f,
            terms,
        })?;
        per_bin.push(Some((coeffs, delay, false)));
    }
    let mut irs = Vec::with_capacity(n_dir);
    let mut spec = vec![Complex64::new(0.0, 0.0); bins];
    for d in 0..n_dir {
        let src = d as f64 * opts.azimuth_step;
        let mut row = Vec::with_capacity(8);
        for &m in &mic_az {
            let cos_t = angular_distance(src, m).to_radians().cos();
            for (s, b) in spec.iter_mut().zip(&per_bin) {
                *s = match b {
                    None => Complex64::new(0.0, 0.0),
                    Some((_, delay, true)) => *delay,
                    Some((coeffs, delay, false)) => evaluate(coeffs, cos_t).conj() * delay,
                };
            }
            row.push(irfft(&spec, n));
        }
        irs.push(row);
    }
    let info = HrirSetInfo {
        sample_rate: opts.sample_rate,
        distance: opts.distance,
        azimuth_start: 0.0,
        azimuth_step: opts.azimuth_step,
        roles: ChannelRole::ALL.to_vec(),
        head_radius: a,
        mic_spacing: opts.layout.bte_spacing,
    };
    HrirSet::new(info, irs)
}
