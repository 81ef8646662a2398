//! Direction interpolation with separate magnitude and phase handling, and
//! translation of the listener inside the array.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::HrirSet;
use crate::dsp::fft::{irfft, rfft};
use crate::dsp::fracdelay::delay_signal;
use crate::error::{Error, Result};
use crate::geometry::{wrap_360, ListenerPose, Position2D};

/// Sub-sample position of the largest absolute value.
fn peak_position(x: &[f64]) -> f64 {
    let (i, _) = x
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .unwrap_or((0, &0.0));
    parabolic_offset(x, i)
}

fn parabolic_offset(x: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 >= x.len() {
        return i as f64;
    }
    let (a, b, c) = (x[i - 1].abs(), x[i].abs(), x[i + 1].abs());
    let den = a - 2.0 * b + c;
    if den.abs() < 1e-300 {
        i as f64
    } else {
        i as f64 + 0.5 * (a - c) / den
    }
}

fn unwrap_in_place(ph: &mut [f64]) {
    let mut offset = 0.0;
    for k in 1..ph.len() {
        let raw = ph[k] + offset;
        let d = raw - ph[k - 1];
        let turns = (d / (2.0 * PI)).round();
        offset -= turns * 2.0 * PI;
        ph[k] = raw - turns * 2.0 * PI;
    }
}

/// Interpolates between two impulse responses at fraction `t`: the
/// dominant delay is estimated and removed, magnitude and unwrapped
/// residual phase are interpolated linearly, and the interpolated delay is
/// restored.
pub(crate) fn interpolate_pair(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    let len = a.len();
    let n = (2 * len).next_power_of_two();
    let fa = rfft(a, n);
    let fb = rfft(b, n);
    let tau_a = peak_position(a);
    // delay of b relative to a from the cross-correlation peak
    let cross: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| y * x.conj()).collect();
    let xc = irfft(&cross, n);
    let (imax, _) = xc.iter().enumerate().max_by(|p, q| p.1.total_cmp(q.1)).unwrap();
    let mut lag = parabolic_offset(&xc, imax);
    if lag > n as f64 / 2.0 {
        lag -= n as f64;
    }
    let tau_b = tau_a + lag;
    let tau = (1.0 - t) * tau_a + t * tau_b;
    let w = |k: usize| 2.0 * PI * k as f64 / n as f64;
    let mut pa: Vec<f64> = fa.iter().enumerate().map(|(k, v)| v.arg() + w(k) * tau_a).collect();
    let mut pb: Vec<f64> = fb.iter().enumerate().map(|(k, v)| v.arg() + w(k) * tau_b).collect();
    unwrap_in_place(&mut pa);
    unwrap_in_place(&mut pb);
    let spec: Vec<Complex64> = (0..fa.len())
        .map(|k| {
            // align the 2*pi branch of b to a before interpolating
            let d = pb[k] - pa[k];
            let d = d - (d / (2.0 * PI)).round() * 2.0 * PI;
            let phase = pa[k] + t * d - w(k) * tau;
            let mag = (1.0 - t) * fa[k].norm() + t * fb[k].norm();
            Complex64::from_polar(mag, phase)
        })
        .collect();
    let mut out = irfft(&spec, n);
    out.truncate(len);
    out
}

impl HrirSet {
    /// Impulse responses of the given channels for `azimuth`. Grid
    /// directions are returned exactly.
    pub fn interpolate_channels(&self, azimuth: f64, channels: &[usize]) -> Vec<Vec<f64>> {
        if let Some(d) = self.grid_index(azimuth) {
            return channels.iter().map(|&c| self.ir(d, c).to_vec()).collect();
        }
        let (a, b, t) = self.bracket(azimuth);
        channels
            .iter()
            .map(|&c| interpolate_pair(self.ir(a, c), self.ir(b, c), t))
            .collect()
    }

    /// All channels for `azimuth`.
    pub fn interpolate_direction(&self, azimuth: f64) -> Vec<Vec<f64>> {
        let all: Vec<usize> = (0..self.roles().len()).collect();
        self.interpolate_channels(azimuth, &all)
    }

    /// Responses from a source at `source` to a listener at `pose`: the
    /// direction is taken relative to the listener, and a gain `D/d` and an
    /// extra delay `(d - D)/c` account for the listener-to-source distance
    /// `d` versus the measurement distance `D`.
    pub fn translate_listener(
        &self,
        pose: &ListenerPose,
        source: &Position2D,
        speed_of_sound: f64,
        channels: &[usize],
    ) -> Result<Vec<Vec<f64>>> {
        if !(pose.offset.norm() < source.norm()) {
            return Err(Error::OutOfRegion(format!(
                "listener at ({:.3}, {:.3}) m is not inside the circle through the source at {:.3} m",
                pose.offset.x,
                pose.offset.y,
                source.norm()
            )));
        }
        let rel = *source - pose.offset;
        let d = rel.norm();
        let azimuth = wrap_360(rel.azimuth() - pose.facing);
        let mut irs = self.interpolate_channels(azimuth, channels);
        let dd = self.distance();
        if (d - dd).abs() <= 1e-9 * dd {
            return Ok(irs);
        }
        let gain = dd / d;
        let shift = (d - dd) / speed_of_sound * self.sample_rate() as f64;
        for h in irs.iter_mut() {
            let len = h.len();
            let mut moved = delay_signal(h, shift, len);
            moved.iter_mut().for_each(|v| *v *= gain);
            *h = moved;
        }
        Ok(irs)
    }
}
