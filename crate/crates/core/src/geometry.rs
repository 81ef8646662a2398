//! Horizontal-plane coordinates and regular circular loudspeaker arrays.
//!
//! Azimuths are in degrees, counterclockwise, with 0° pointing to the front
//! (+x) and 90° to the listener's left (+y). All public APIs take and return
//! degrees; radians are only used internally.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default array radius in meters, equal to the HRIR measurement distance.
pub const DEFAULT_ARRAY_RADIUS: f64 = 3.0;

/// Wraps an angle in degrees into `[0, 360)`.
pub fn wrap_360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    // rem_euclid can return exactly 360.0 for tiny negative inputs
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_180(deg: f64) -> f64 {
    let w = wrap_360(deg + 180.0) - 180.0;
    if w >= 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Absolute angular distance in degrees, in `[0, 180]`.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    wrap_180(a - b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Position2D {
    pub x: f64,
    pub y: f64,
}

impl Position2D {
    pub const ORIGIN: Position2D = Position2D { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    /// Builds a position from azimuth (degrees) and distance (meters).
    pub fn from_polar(azimuth_deg: f64, distance: f64) -> Self {
        let a = azimuth_deg.to_radians();
        Self {
            x: distance * a.cos(),
            y: distance * a.sin(),
        }
    }

    pub fn norm(&self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Azimuth in degrees, in `[0, 360)`.
    pub fn azimuth(&self) -> f64 {
        wrap_360(self.y.atan2(self.x).to_degrees())
    }

    pub fn distance_to(&self, other: &Position2D) -> f64 {
        (*other - *self).norm()
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn unit(&self) -> Option<Position2D> {
        let n = self.norm();
        (n > 0.0).then(|| Position2D::new(self.x / n, self.y / n))
    }
}

impl std::ops::Sub for Position2D {
    type Output = Position2D;
    fn sub(self, rhs: Self) -> Self {
        Position2D::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl std::ops::Add for Position2D {
    type Output = Position2D;
    fn add(self, rhs: Self) -> Self {
        Position2D::new(self.x + rhs.x, self.y + rhs.y)
    }
}

/// Listener placement inside the array. The listener always faces 0°.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct ListenerPose {
    pub offset: Position2D,
    pub facing: f64,
}

impl ListenerPose {
    pub fn center() -> Self {
        Self::default()
    }

    /// A pose shifted `meters` to the listener's left (+y).
    pub fn lateral(meters: f64) -> Self {
        Self {
            offset: Position2D::new(0.0, meters),
            facing: 0.0,
        }
    }

    pub fn offset_magnitude(&self) -> f64 {
        self.offset.norm()
    }
}

/// A regular, horizontal, circular loudspeaker array centered at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerArray {
    count: usize,
    radius: f64,
    start_azimuth: f64,
    azimuths: Vec<f64>,
    positions: Vec<Position2D>,
}

impl SpeakerArray {
    /// Builds an array of `count` speakers; speaker `k` sits at
    /// `start_azimuth + k * 360 / count`.
    pub fn new(count: usize, radius: f64, start_azimuth: f64) -> Result<Self> {
        if count < 4 || count % 2 != 0 {
            return Err(Error::InvalidLayout(format!(
                "speaker count must be even and at least 4, got {count}"
            )));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidLayout(format!("radius must be positive, got {radius}")));
        }
        if !start_azimuth.is_finite() {
            return Err(Error::InvalidLayout("start azimuth must be finite".into()));
        }
        let spacing = 360.0 / count as f64;
        let azimuths: Vec<f64> = (0..count)
            .map(|k| wrap_360(start_azimuth + k as f64 * spacing))
            .collect();
        let positions = azimuths
            .iter()
            .map(|&a| Position2D::from_polar(a, radius))
            .collect();
        Ok(Self {
            count,
            radius,
            start_azimuth,
            azimuths,
            positions,
        })
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn start_azimuth(&self) -> f64 {
        self.start_azimuth
    }

    /// Angular spacing between neighbouring speakers in degrees.
    pub fn spacing(&self) -> f64 {
        360.0 / self.count as f64
    }

    /// Straight-line distance between neighbouring speakers, `2R sin(pi/N)`.
    pub fn chord(&self) -> f64 {
        2.0 * self.radius * (std::f64::consts::PI / self.count as f64).sin()
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn azimuth(&self, k: usize) -> f64 {
        self.azimuths[k]
    }

    pub fn positions(&self) -> &[Position2D] {
        &self.positions
    }

    pub fn position(&self, k: usize) -> Position2D {
        self.positions[k]
    }

    /// Whether `p` lies strictly inside the array circle.
    pub fn contains(&self, p: &Position2D) -> bool {
        p.norm() < self.radius
    }

    /// Index of the speaker with the smallest angular distance to
    /// `azimuth`; exact ties go to the lower index.
    pub fn nearest_speaker(&self, azimuth: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (k, &a) in self.azimuths.iter().enumerate() {
            let d = angular_distance(azimuth, a);
            if d < best_dist {
                best = k;
                best_dist = d;
            }
        }
        best
    }

    /// The pair `(l, m)` of neighbouring speakers whose arc `l -> m`
    /// (counterclockwise) contains `azimuth`. A source exactly on a speaker
    /// returns that speaker as `l`.
    pub fn speaker_pair(&self, azimuth: f64) -> (usize, usize) {
        let rel = wrap_360(azimuth - self.start_azimuth);
        let mut l = (rel / self.spacing()).floor() as usize % self.count;
        // guard against rounding putting rel just below an exact speaker angle
        let next = (l + 1) % self.count;
        if angular_distance(azimuth, self.azimuths[next]) < 1e-9 {
            l = next;
        }
        (l, (l + 1) % self.count)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn build_four_speakers() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        assert_eq!(a.azimuths(), &[0.0, 90.0, 180.0, 270.0]);
        for p in a.positions() {
            assert_abs_diff_eq!(p.norm(), 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_odd_and_small_counts() {
        assert!(matches!(SpeakerArray::new(5, 3.0, 0.0), Err(Error::InvalidLayout(_))));
        assert!(matches!(SpeakerArray::new(2, 3.0, 0.0), Err(Error::InvalidLayout(_))));
        assert!(matches!(SpeakerArray::new(4, 0.0, 0.0), Err(Error::InvalidLayout(_))));
    }

    #[test]
    fn spacing_is_exact_for_sweep_counts() {
        for (n, s) in [(4, 90.0), (6, 60.0), (8, 45.0), (12, 30.0), (18, 20.0), (24, 15.0), (36, 10.0), (72, 5.0)] {
            let a = SpeakerArray::new(n, 3.0, 0.0).unwrap();
            assert_eq!(a.spacing(), s);
            for k in 0..n {
                let d = wrap_360(a.azimuth((k + 1) % n) - a.azimuth(k));
                assert_abs_diff_eq!(d, s, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn chord_is_function_of_radius() {
        let a = SpeakerArray::new(72, 3.0, 0.0).unwrap();
        assert_abs_diff_eq!(a.chord(), 6.0 * 2.5f64.to_radians().sin(), epsilon = 1e-12);
        // the published spacing list (2.83, 2.00, ..., 0.17 m) corresponds to a 2 m radius
        let published = [2.83, 2.00, 1.53, 1.04, 0.69, 0.52, 0.35, 0.17];
        for (n, want) in [4, 6, 8, 12, 18, 24, 36, 72].into_iter().zip(published) {
            let a = SpeakerArray::new(n, 2.0, 0.0).unwrap();
            assert!((a.chord() - want).abs() <= 0.005, "N={n}: {} vs {want}", a.chord());
        }
    }

    #[test]
    fn nearest_speaker_examples() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        assert_eq!(a.nearest_speaker(10.0), 0);
        assert_eq!(a.nearest_speaker(45.0), 0);
        assert_eq!(a.nearest_speaker(315.0), 0);
        let a = SpeakerArray::new(8, 3.0, 0.0).unwrap();
        assert_eq!(a.azimuth(a.nearest_speaker(179.0)), 180.0);
    }

    #[test]
    fn speaker_pair_examples() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        assert_eq!(a.speaker_pair(45.0), (0, 1));
        assert_eq!(a.speaker_pair(350.0), (3, 0));
        let a = SpeakerArray::new(6, 3.0, 0.0).unwrap();
        assert_eq!(a.speaker_pair(60.0), (1, 2));
    }

    #[test]
    fn polar_round_trip() {
        for i in 0..720 {
            let az = i as f64 * 0.5;
            let p = Position2D::from_polar(az, 2.5);
            assert!(angular_distance(p.azimuth(), az) < 1e-9);
            assert!((p.norm() - 2.5).abs() < 1e-9 * 2.5);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn nearest_is_member_of_pair(az in -720.0f64..720.0, idx in 0usize..8) {
                let n = [4, 6, 8, 12, 18, 24, 36, 72][idx];
                let a = SpeakerArray::new(n, 3.0, 0.0).unwrap();
                let near = a.nearest_speaker(az);
                let (l, m) = a.speaker_pair(az);
                prop_assert!(near == l || near == m);
            }

            #[test]
            fn pair_brackets_source(az in 0.0f64..360.0, idx in 0usize..8, start in -180.0f64..180.0) {
                let n = [4, 6, 8, 12, 18, 24, 36, 72][idx];
                let a = SpeakerArray::new(n, 3.0, start).unwrap();
                let (l, m) = a.speaker_pair(az);
                prop_assert_eq!(m, (l + 1) % n);
                let from_l = wrap_180(az - a.azimuth(l));
                prop_assert!(from_l >= -1e-9 && from_l <= a.spacing() + 1e-9);
            }

            #[test]
            fn polar_cartesian_round_trip(x in -10.0f64..10.0, y in -10.0f64..10.0) {
                let p = Position2D::new(x, y);
                prop_assume!(p.norm() > 1e-6);
                let q = Position2D::from_polar(p.azimuth(), p.norm());
                prop_assert!((q.x - x).abs() <= 1e-9 * p.norm());
                prop_assert!((q.y - y).abs() <= 1e-9 * p.norm());
            }
        }
    }
}
