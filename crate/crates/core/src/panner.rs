//! Driving weights for nearest-speaker, VBAP and basic higher-order
//! ambisonics reproduction, and the HOA spatial-aliasing predictor.
//!
//! Every method is expressed as a per-speaker scalar weight `w_k` that
//! depends only on the source direction, plus a transmission part shared by
//! all speakers: a delay `|r|/c` and an attenuation `1/|r|`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{wrap_180, Position2D, SpeakerArray};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReproductionMethod {
    Nsp,
    Vbap,
    Hoa,
}

impl ReproductionMethod {
    pub const ALL: [ReproductionMethod; 3] = [Self::Nsp, Self::Vbap, Self::Hoa];

    pub fn token(&self) -> &'static str {
        match self {
            Self::Nsp => "nsp",
            Self::Vbap => "vbap",
            Self::Hoa => "hoa",
        }
    }
}

impl fmt::Display for ReproductionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for ReproductionMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "nsp" => Ok(Self::Nsp),
            "vbap" => Ok(Self::Vbap),
            "hoa" => Ok(Self::Hoa),
            other => Err(Error::InvalidParameter(format!("unknown reproduction method '{other}'"))),
        }
    }
}

/// Per-speaker weights plus the shared source transmission terms.
#[derive(Debug, Clone, PartialEq)]
pub struct DrivingWeights {
    pub weights: Vec<f64>,
    /// Propagation delay from the virtual source to the origin, seconds.
    pub source_delay: f64,
    /// `1 / |r|`, per meter.
    pub source_attenuation: f64,
}

impl DrivingWeights {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights
            .iter()
            .copied()
            .enumerate()
            .filter(|(_, w)| *w != 0.0)
    }

    /// Serializes as `speaker,weight` CSV rows for debugging.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("speaker,weight\n");
        for (k, w) in self.weights.iter().enumerate() {
            s.push_str(&format!("{k},{w:.12}\n"));
        }
        s
    }
}

/// One speaker's driving filter: a single tap of `gain` at `delay` seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriverTap {
    pub gain: f64,
    pub delay: f64,
}

/// Options shared by the weight functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PannerOptions {
    pub speed_of_sound: f64,
    /// Rescale VBAP weights to unit power. Off by default.
    pub vbap_power_normalize: bool,
}

impl Default for PannerOptions {
    fn default() -> Self {
        Self {
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            vbap_power_normalize: false,
        }
    }
}

fn transmission(source: &Position2D, c: f64) -> Result<(f64, f64)> {
    let dist = source.norm();
    if dist <= 0.0 || !dist.is_finite() {
        return Err(Error::UndefinedDirection);
    }
    Ok((dist / c, 1.0 / dist))
}

pub fn nsp_weights(array: &SpeakerArray, source: &Position2D, opts: &PannerOptions) -> Result<DrivingWeights> {
    let (source_delay, source_attenuation) = transmission(source, opts.speed_of_sound)?;
    let mut weights = vec![0.0; array.count()];
    weights[array.nearest_speaker(source.azimuth())] = 1.0;
    Ok(DrivingWeights {
        weights,
        source_delay,
        source_attenuation,
    })
}

/// Solves `w_l s_l + w_m s_m = r` for the bracketing speaker pair.
pub fn vbap_weights(array: &SpeakerArray, source: &Position2D, opts: &PannerOptions) -> Result<DrivingWeights> {
    let (source_delay, source_attenuation) = transmission(source, opts.speed_of_sound)?;
    let r = source.unit().ok_or(Error::UndefinedDirection)?;
    let az = source.azimuth();
    let (l, m) = array.speaker_pair(az);
    let sl = Position2D::from_polar(array.azimuth(l), 1.0);
    let sm = Position2D::from_polar(array.azimuth(m), 1.0);
    // [w_l w_m] = r^T S^-1 with S = [s_l s_m]^T (rows are speaker vectors)
    let det = sl.x * sm.y - sl.y * sm.x;
    if det.abs() < 1e-12 {
        return Err(Error::DegenerateLayout(format!(
            "speakers {l} and {m} are collinear with the origin"
        )));
    }
    let mut wl = (r.x * sm.y - r.y * sm.x) / det;
    let mut wm = (sl.x * r.y - sl.y * r.x) / det;
    if opts.vbap_power_normalize {
        let p = wl.hypot(wm);
        wl /= p;
        wm /= p;
    }
    let mut weights = vec![0.0; array.count()];
    weights[l] = wl;
    weights[m] += wm;
    Ok(DrivingWeights {
        weights,
        source_delay,
        source_attenuation,
    })
}

/// Combined encoding/decoding weight of basic 2D HOA of order `N/2 - 1`
/// for a speaker at angle `phi` (radians) from the source.
pub fn hoa_kernel(n_speakers: usize, phi: f64) -> f64 {
    let n = n_speakers as f64;
    let phi = wrap_180(phi.to_degrees()).to_radians();
    let den = n * (0.5 * phi).sin();
    if den.abs() < 1e-12 {
        return (n - 1.0) / n;
    }
    (0.5 * (n - 1.0) * phi).sin() / den
}

pub fn hoa_weights(array: &SpeakerArray, source: &Position2D, opts: &PannerOptions) -> Result<DrivingWeights> {
    let (source_delay, source_attenuation) = transmission(source, opts.speed_of_sound)?;
    let az = source.azimuth();
    let weights = array
        .azimuths()
        .iter()
        .map(|&s| hoa_kernel(array.count(), (az - s).to_radians()))
        .collect();
    Ok(DrivingWeights {
        weights,
        source_delay,
        source_attenuation,
    })
}

pub fn weights(
    method: ReproductionMethod,
    array: &SpeakerArray,
    source: &Position2D,
    opts: &PannerOptions,
) -> Result<DrivingWeights> {
    match method {
        ReproductionMethod::Nsp => nsp_weights(array, source, opts),
        ReproductionMethod::Vbap => vbap_weights(array, source, opts),
        ReproductionMethod::Hoa => hoa_weights(array, source, opts),
    }
}

/// Per-speaker driving filters `(w_k / |r|) * delta(t - tau)`.
pub fn driving_filters(w: &DrivingWeights) -> Vec<DriverTap> {
    w.weights
        .iter()
        .map(|&wk| DriverTap {
            gain: wk * w.source_attenuation,
            delay: w.source_delay,
        })
        .collect()
}

/// Usable-bandwidth prediction from the HOA aliasing condition
/// `k r <= N_min / 2`, with `N_min = N - 1` for even `N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AliasingPrediction {
    pub max_frequency: f64,
    pub min_speakers: usize,
    pub usable_radius: f64,
}

/// Largest frequency free of spatial aliasing, `c N_min / (4 pi r)`.
/// Returns infinity at `r = 0`.
pub fn aliasing_frequency(speaker_count: usize, listening_radius: f64, c: f64) -> f64 {
    let n_min = speaker_count.saturating_sub(1) as f64;
    if listening_radius == 0.0 {
        return f64::INFINITY;
    }
    c * n_min / (4.0 * PI * listening_radius)
}

/// Smallest even speaker count `N >= 4` with `N - 1 >= 4 pi r f / c`.
pub fn min_speakers_for(frequency: f64, listening_radius: f64, c: f64) -> usize {
    let need = 4.0 * PI * listening_radius * frequency / c;
    // relative slack so that limits computed from an exact N map back to N
    let n_min = (need * (1.0 - 1e-12)).ceil().max(0.0) as usize;
    let mut n = (n_min + 1).max(4);
    if n % 2 == 1 {
        n += 1;
    }
    n
}

/// Largest listening radius for which `frequency` stays below the limit.
pub fn usable_radius(speaker_count: usize, frequency: f64, c: f64) -> f64 {
    if frequency == 0.0 {
        return f64::INFINITY;
    }
    c * speaker_count.saturating_sub(1) as f64 / (4.0 * PI * frequency)
}

pub fn aliasing_limit(speaker_count: usize, listening_radius: f64, speed_of_sound: f64) -> Result<AliasingPrediction> {
    if !(listening_radius >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "listening radius must be non-negative, got {listening_radius}"
        )));
    }
    let max_frequency = aliasing_frequency(speaker_count, listening_radius, speed_of_sound);
    Ok(AliasingPrediction {
        max_frequency,
        min_speakers: if max_frequency.is_finite() {
            min_speakers_for(max_frequency, listening_radius, speed_of_sound)
        } else {
            4
        },
        usable_radius: if max_frequency.is_finite() {
            usable_radius(speaker_count, max_frequency, speed_of_sound)
        } else {
            f64::INFINITY
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn opts() -> PannerOptions {
        PannerOptions::default()
    }

    #[test]
    fn nsp_picks_nearest() {
        let a = SpeakerArray::new(8, 3.0, 0.0).unwrap();
        // |22 - 0| = 22 < |22 - 45| = 23
        let w = nsp_weights(&a, &Position2D::from_polar(22.0, 3.0), &opts()).unwrap();
        assert_eq!(w.weights[0], 1.0);
        assert_eq!(w.nonzero().count(), 1);
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let w = nsp_weights(&a, &Position2D::from_polar(90.0, 3.0), &opts()).unwrap();
        assert_eq!(w.weights, vec![0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn source_delay_three_meters() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let w = nsp_weights(&a, &Position2D::from_polar(0.0, 3.0), &opts()).unwrap();
        assert_abs_diff_eq!(w.source_delay * 1e3, 8.746, epsilon = 5e-4);
        assert_abs_diff_eq!(w.source_attenuation, 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn origin_source_is_rejected() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        for m in ReproductionMethod::ALL {
            assert!(matches!(weights(m, &a, &Position2D::ORIGIN, &opts()), Err(Error::UndefinedDirection)));
        }
    }

    #[test]
    fn vbap_examples() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let w = vbap_weights(&a, &Position2D::from_polar(45.0, 3.0), &opts()).unwrap();
        assert_abs_diff_eq!(w.weights[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[1], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-12);
        let w = vbap_weights(&a, &Position2D::from_polar(30.0, 3.0), &opts()).unwrap();
        assert_abs_diff_eq!(w.weights[0], 0.86603, epsilon = 1e-5);
        assert_abs_diff_eq!(w.weights[1], 0.5, epsilon = 1e-12);
        let w = vbap_weights(&a, &Position2D::from_polar(90.0, 3.0), &opts()).unwrap();
        assert_abs_diff_eq!(w.weights[1], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(w.weights[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn vbap_power_normalization_flag() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let o = PannerOptions {
            vbap_power_normalize: true,
            ..opts()
        };
        let w = vbap_weights(&a, &Position2D::from_polar(20.0, 3.0), &o).unwrap();
        let p: f64 = w.weights.iter().map(|x| x * x).sum();
        assert_abs_diff_eq!(p, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn hoa_limit_and_opposite() {
        assert_abs_diff_eq!(hoa_kernel(8, 0.0), 0.875, epsilon = 1e-15);
        assert_abs_diff_eq!(hoa_kernel(4, PI), -0.25, epsilon = 1e-12);
        // periodic: a full turn is the same as zero
        assert_abs_diff_eq!(hoa_kernel(8, 2.0 * PI), 0.875, epsilon = 1e-12);
    }

    /// Independent route: 2D basic HOA of order m sampled at N speakers is
    /// (1 + 2 sum_{n=1}^{m} cos(n phi)) / N.
    fn hoa_cosine_series(n_speakers: usize, phi: f64) -> f64 {
        let m = n_speakers / 2 - 1;
        (1.0 + 2.0 * (1..=m).map(|n| (n as f64 * phi).cos()).sum::<f64>()) / n_speakers as f64
    }

    #[test]
    fn hoa_matches_cosine_series_oracle() {
        for n in [4, 6, 8, 12, 18, 24, 36, 72] {
            for i in 0..720 {
                let phi = (i as f64 * 0.5 - 180.0).to_radians() + 1e-3;
                assert_abs_diff_eq!(hoa_kernel(n, phi), hoa_cosine_series(n, phi), epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn hoa_partition_of_unity_brute_force() {
        for n in [4, 6, 8, 12, 18, 24, 36, 72] {
            let a = SpeakerArray::new(n, 3.0, 0.0).unwrap();
            for deg in 0..360 {
                let w = hoa_weights(&a, &Position2D::from_polar(deg as f64, 3.0), &opts()).unwrap();
                let mut sum = 0.0;
                for x in &w.weights {
                    sum += x;
                }
                assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn methods_coincide_on_speaker() {
        let a = SpeakerArray::new(12, 3.0, 0.0).unwrap();
        let src = Position2D::from_polar(60.0, 3.0);
        let n = nsp_weights(&a, &src, &opts()).unwrap();
        let v = vbap_weights(&a, &src, &opts()).unwrap();
        let h = hoa_weights(&a, &src, &opts()).unwrap();
        for k in 0..12 {
            assert_abs_diff_eq!(n.weights[k], v.weights[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(h.weights[2], 11.0 / 12.0, epsilon = 1e-12);
        let others: f64 = h.weights.iter().enumerate().filter(|(k, _)| *k != 2).map(|(_, w)| w).sum();
        assert_abs_diff_eq!(others, 1.0 / 12.0, epsilon = 1e-12);
    }

    #[test]
    fn driving_filter_examples() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let w = nsp_weights(&a, &Position2D::from_polar(0.0, 3.0), &opts()).unwrap();
        let f = driving_filters(&w);
        assert_abs_diff_eq!(f[0].gain, 1.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(f[0].delay * 1e3, 8.746, epsilon = 5e-4);
        assert!(f[1..].iter().all(|t| t.gain == 0.0));

        let zero = DrivingWeights {
            weights: vec![0.0; 4],
            source_delay: 0.01,
            source_attenuation: 0.5,
        };
        assert!(driving_filters(&zero).iter().all(|t| t.gain == 0.0));

        let h = hoa_weights(&a, &Position2D::from_polar(0.0, 3.0), &opts()).unwrap();
        let f = driving_filters(&h);
        assert!(f[2].gain < 0.0);
        assert_abs_diff_eq!(f[2].gain, -0.25 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn csv_debug_dump() {
        let a = SpeakerArray::new(4, 3.0, 0.0).unwrap();
        let w = nsp_weights(&a, &Position2D::from_polar(90.0, 3.0), &opts()).unwrap();
        let csv = w.to_csv();
        assert!(csv.starts_with("speaker,weight\n0,0.0"));
        assert_eq!(csv.lines().count(), 5);
    }

    #[test]
    fn aliasing_examples() {
        let p = aliasing_limit(12, 0.0875, 343.0).unwrap();
        assert_abs_diff_eq!(p.max_frequency, 343.0 * 11.0 / (4.0 * PI * 0.0875), epsilon = 1e-9);
        assert!((p.max_frequency - 3432.0).abs() < 1.0);
        let a = aliasing_frequency(24, 0.2, 343.0);
        let b = aliasing_frequency(24, 0.4, 343.0);
        assert_abs_diff_eq!(a / b, 2.0, epsilon = 1e-12);
        // 4 pi * 0.5875 * 4000 / 343 = 86.1 -> 88 (even, with N - 1 >= 86.1)
        assert_eq!(min_speakers_for(4000.0, 0.5875, 343.0), 88);
        assert!(aliasing_limit(8, 0.0, 343.0).unwrap().max_frequency.is_infinite());
        assert!(aliasing_limit(8, -1.0, 343.0).is_err());
    }

    #[test]
    fn aliasing_round_trips() {
        for n in [4usize, 8, 12, 24, 72] {
            for r in [0.0875, 0.1875, 0.5875] {
                let p = aliasing_limit(n, r, 343.0).unwrap();
                assert_eq!(p.min_speakers, n);
                assert_abs_diff_eq!(p.usable_radius, r, epsilon = 1e-12);
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn vbap_reconstructs_direction(az in 0.0f64..360.0, idx in 0usize..8) {
                let n = [4, 6, 8, 12, 18, 24, 36, 72][idx];
                let a = SpeakerArray::new(n, 3.0, 0.0).unwrap();
                let w = vbap_weights(&a, &Position2D::from_polar(az, 2.0), &PannerOptions::default()).unwrap();
                prop_assert!(w.nonzero().count() <= 2);
                let (mut x, mut y) = (0.0, 0.0);
                for (k, wk) in w.nonzero() {
                    x += wk * a.azimuth(k).to_radians().cos();
                    y += wk * a.azimuth(k).to_radians().sin();
                }
                prop_assert!((x - az.to_radians().cos()).abs() < 1e-9);
                prop_assert!((y - az.to_radians().sin()).abs() < 1e-9);
            }

            #[test]
            fn hoa_rotation_invariant(az in 0.0f64..360.0, rot in 0usize..72, idx in 0usize..8) {
                let n = [4, 6, 8, 12, 18, 24, 36, 72][idx];
                let a = SpeakerArray::new(n, 3.0, 0.0).unwrap();
                let step = rot % n;
                let b = SpeakerArray::new(n, 3.0, step as f64 * a.spacing()).unwrap();
                let wa = hoa_weights(&a, &Position2D::from_polar(az, 3.0), &PannerOptions::default()).unwrap();
                let wb = hoa_weights(&b, &Position2D::from_polar(az + step as f64 * a.spacing(), 3.0), &PannerOptions::default()).unwrap();
                for k in 0..n {
                    prop_assert!((wa.weights[k] - wb.weights[k]).abs() < 1e-9);
                }
            }

            #[test]
            fn weights_independent_of_distance(az in 0.0f64..360.0, d1 in 0.5f64..5.0, d2 in 0.5f64..5.0) {
                let a = SpeakerArray::new(12, 3.0, 0.0).unwrap();
                for m in ReproductionMethod::ALL {
                    let w1 = weights(m, &a, &Position2D::from_polar(az, d1), &PannerOptions::default()).unwrap();
                    let w2 = weights(m, &a, &Position2D::from_polar(az, d2), &PannerOptions::default()).unwrap();
                    for k in 0..12 {
                        prop_assert!((w1.weights[k] - w2.weights[k]).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
