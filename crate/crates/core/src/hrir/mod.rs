//! Direction-indexed multichannel head-related impulse responses.
//!
//! A set holds one impulse response per (azimuth, channel) on a uniform
//! azimuth grid, measured at a fixed source distance. Each IR includes the
//! propagation delay of that distance and is normalized to unit gain there.

mod interp;
mod io;
mod sphere;

pub use io::{load_hrir_set, save_hrir_set, MANIFEST_FILE};
pub use sphere::{sphere_transfer, synth_sphere_hrir, MicLayout, SphereOptions};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_360;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelRole {
    #[serde(rename = "in_ear_L")]
    InEarL,
    #[serde(rename = "in_ear_R")]
    InEarR,
    #[serde(rename = "ha_L_front")]
    HaLFront,
    #[serde(rename = "ha_L_mid")]
    HaLMid,
    #[serde(rename = "ha_L_rear")]
    HaLRear,
    #[serde(rename = "ha_R_front")]
    HaRFront,
    #[serde(rename = "ha_R_mid")]
    HaRMid,
    #[serde(rename = "ha_R_rear")]
    HaRRear,
}

impl ChannelRole {
    /// Canonical channel order of a full set.
    pub const ALL: [ChannelRole; 8] = [
        Self::InEarL,
        Self::InEarR,
        Self::HaLFront,
        Self::HaLMid,
        Self::HaLRear,
        Self::HaRFront,
        Self::HaRMid,
        Self::HaRRear,
    ];

    pub fn token(&self) -> &'static str {
        match self {
            Self::InEarL => "in_ear_L",
            Self::InEarR => "in_ear_R",
            Self::HaLFront => "ha_L_front",
            Self::HaLMid => "ha_L_mid",
            Self::HaLRear => "ha_L_rear",
            Self::HaRFront => "ha_R_front",
            Self::HaRMid => "ha_R_mid",
            Self::HaRRear => "ha_R_rear",
        }
    }
}

impl fmt::Display for ChannelRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ChannelRole {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|r| r.token() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown channel role '{s}'")))
    }
}

/// The microphone subset each consumer reads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChannelSelection {
    pub roles: Vec<ChannelRole>,
}

impl ChannelSelection {
    pub fn new(roles: &[ChannelRole]) -> Self {
        Self { roles: roles.to_vec() }
    }

    pub fn all() -> Self {
        Self::new(&ChannelRole::ALL)
    }

    /// All six hearing-aid microphones.
    pub fn beamformer() -> Self {
        use ChannelRole::*;
        Self::new(&[HaLFront, HaLMid, HaLRear, HaRFront, HaRMid, HaRRear])
    }

    /// Front and rear microphone of the left device.
    pub fn adm() -> Self {
        Self::new(&[ChannelRole::HaLFront, ChannelRole::HaLRear])
    }

    /// Front microphones of both devices.
    pub fn binaural_nr() -> Self {
        Self::new(&[ChannelRole::HaLFront, ChannelRole::HaRFront])
    }

    pub fn single_channel_nr() -> Self {
        Self::new(&[ChannelRole::HaLFront])
    }

    pub fn localization() -> Self {
        Self::new(&[ChannelRole::InEarL, ChannelRole::InEarR])
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn position(&self, role: ChannelRole) -> Option<usize> {
        self.roles.iter().position(|&r| r == role)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HrirSet {
    sample_rate: u32,
    distance: f64,
    azimuth_start: f64,
    azimuth_step: f64,
    directions: Vec<f64>,
    roles: Vec<ChannelRole>,
    head_radius: f64,
    mic_spacing: f64,
    // irs[direction][channel]
    irs: Vec<Vec<Vec<f64>>>,
}

/// Descriptive fields of a set, without the impulse responses.
#[derive(Debug, Clone, PartialEq)]
pub struct HrirSetInfo {
    pub sample_rate: u32,
    pub distance: f64,
    pub azimuth_start: f64,
    pub azimuth_step: f64,
    pub roles: Vec<ChannelRole>,
    pub head_radius: f64,
    pub mic_spacing: f64,
}

impl HrirSet {
    /// `irs[d][c]` is the response of channel `roles[c]` for the direction
    /// `azimuth_start + d * azimuth_step`. The grid must cover the circle.
    pub fn new(info: HrirSetInfo, irs: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let bad = |m: String| Error::InvalidParameter(m);
        if !(info.azimuth_step > 0.0) {
            return Err(bad("azimuth step must be positive".into()));
        }
        let n_dir = (360.0 / info.azimuth_step).round() as usize;
        if ((n_dir as f64) * info.azimuth_step - 360.0).abs() > 1e-9 {
            return Err(bad(format!("azimuth step {} does not divide 360", info.azimuth_step)));
        }
        if irs.len() != n_dir {
            return Err(bad(format!("expected {n_dir} directions, got {}", irs.len())));
        }
        let ir_len = irs.first().and_then(|d| d.first()).map_or(0, |h| h.len());
        if ir_len == 0 {
            return Err(bad("empty impulse responses".into()));
        }
        for d in &irs {
            if d.len() != info.roles.len() {
                return Err(Error::ChannelMismatch {
                    expected: info.roles.len(),
                    found: d.len(),
                });
            }
            if d.iter().any(|h| h.len() != ir_len) {
                return Err(bad("impulse responses differ in length".into()));
            }
        }
        if !(info.distance > 0.0) || info.sample_rate == 0 {
            return Err(bad("distance and sample rate must be positive".into()));
        }
        let directions = (0..n_dir)
            .map(|d| wrap_360(info.azimuth_start + d as f64 * info.azimuth_step))
            .collect();
        Ok(Self {
            sample_rate: info.sample_rate,
            distance: info.distance,
            azimuth_start: info.azimuth_start,
            azimuth_step: info.azimuth_step,
            directions,
            roles: info.roles,
            head_radius: info.head_radius,
            mic_spacing: info.mic_spacing,
            irs,
        })
    }

    pub fn info(&self) -> HrirSetInfo {
        HrirSetInfo {
            sample_rate: self.sample_rate,
            distance: self.distance,
            azimuth_start: self.azimuth_start,
            azimuth_step: self.azimuth_step,
            roles: self.roles.clone(),
            head_radius: self.head_radius,
            mic_spacing: self.mic_spacing,
        }
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    /// Measurement distance in meters.
    pub fn distance(&self) -> f64 {
        self.distance
    }

    pub fn azimuth_step(&self) -> f64 {
        self.azimuth_step
    }

    pub fn directions(&self) -> &[f64] {
        &self.directions
    }

    pub fn roles(&self) -> &[ChannelRole] {
        &self.roles
    }

    pub fn head_radius(&self) -> f64 {
        self.head_radius
    }

    /// Front-to-rear microphone distance of each hearing-aid device.
    pub fn mic_spacing(&self) -> f64 {
        self.mic_spacing
    }

    pub fn ir_len(&self) -> usize {
        self.irs[0][0].len()
    }

    pub fn ir(&self, direction: usize, channel: usize) -> &[f64] {
        &self.irs[direction][channel]
    }

    pub fn channel_index(&self, role: ChannelRole) -> Option<usize> {
        self.roles.iter().position(|&r| r == role)
    }

    /// Indices of `sel` within this set, or an error naming a missing role.
    pub fn channel_indices(&self, sel: &ChannelSelection) -> Result<Vec<usize>> {
        sel.roles
            .iter()
            .map(|&r| {
                self.channel_index(r)
                    .ok_or_else(|| Error::InvalidParameter(format!("HRIR set has no channel {r}")))
            })
            .collect()
    }

    /// Grid index of `azimuth` if it lies on the grid (within 1e-9°).
    pub fn grid_index(&self, azimuth: f64) -> Option<usize> {
        let pos = wrap_360(azimuth - self.azimuth_start) / self.azimuth_step;
        let k = pos.round();
        ((pos - k).abs() * self.azimuth_step < 1e-9).then(|| k as usize % self.directions.len())
    }

    /// Bracketing grid indices `(a, b)` and the fraction `t` of the way from
    /// `a` to `b`.
    pub fn bracket(&self, azimuth: f64) -> (usize, usize, f64) {
        let n = self.directions.len();
        let pos = wrap_360(azimuth - self.azimuth_start) / self.azimuth_step;
        let a = pos.floor();
        let t = pos - a;
        let a = a as usize % n;
        (a, (a + 1) % n, t)
    }
}
