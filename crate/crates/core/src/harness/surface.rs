//! Error surfaces over (speaker count, band), threshold contours and the
//! aliasing overlay.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::haalgo::AlgorithmKind;
use crate::panner::{aliasing_frequency, ReproductionMethod};

/// What a surface measures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum SurfaceMetric {
    /// Beamformer beam error in the configured form.
    Beam,
    /// Beamformer beam error, unnormalized sum over azimuths.
    BeamLiteral,
    SnrError(AlgorithmKind),
    /// RMS localization error of the fine-structure estimate.
    Ple,
    /// Same for the envelope estimate.
    PleEnvelope,
    Spectral,
}

impl SurfaceMetric {
    pub fn token(&self) -> &'static str {
        match self {
            Self::Beam => "beam",
            Self::BeamLiteral => "beam_literal",
            Self::SnrError(_) => "snr_error",
            Self::Ple => "ple",
            Self::PleEnvelope => "ple_envelope",
            Self::Spectral => "spectral",
        }
    }

    pub fn algorithm(&self) -> Option<AlgorithmKind> {
        match self {
            Self::Beam | Self::BeamLiteral => Some(AlgorithmKind::Beamformer),
            Self::SnrError(k) => Some(*k),
            _ => None,
        }
    }

    /// The surfaces that make up a condition; the literal beam error and
    /// the envelope PLE are auxiliary.
    pub fn is_primary(&self) -> bool {
        !matches!(self, Self::BeamLiteral | Self::PleEnvelope)
    }

    pub fn is_banded(&self) -> bool {
        matches!(self, Self::Beam | Self::BeamLiteral | Self::SnrError(_))
    }
}

/// Metric values for one (method, pose, metric) over speaker counts and
/// bands. Scalar metrics have a single band entry at 0 Hz. Failed or
/// undefined cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSurface {
    pub metric: SurfaceMetric,
    pub method: ReproductionMethod,
    pub pose_m: f64,
    pub speakers: Vec<usize>,
    pub bands: Vec<f64>,
    /// `[speaker index][band]`.
    pub values: Vec<Vec<f64>>,
}

impl ErrorSurface {
    pub fn new(
        metric: SurfaceMetric,
        method: ReproductionMethod,
        pose_m: f64,
        speakers: Vec<usize>,
        bands: Vec<f64>,
        values: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if values.len() != speakers.len() || values.iter().any(|r| r.len() != bands.len()) {
            return Err(Error::GridMismatch(format!(
                "surface values are not {} x {}",
                speakers.len(),
                bands.len()
            )));
        }
        if speakers.windows(2).any(|w| w[0] >= w[1]) || bands.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::GridMismatch("surface axes must be strictly increasing".into()));
        }
        Ok(Self {
            metric,
            method,
            pose_m,
            speakers,
            bands,
            values,
        })
    }

    pub fn value(&self, n: usize, band: usize) -> f64 {
        self.values[n][band]
    }
}

/// Iso-lines of a surface at a threshold, as polylines of `(N, f)` points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Contour {
    pub threshold: f64,
    pub lines: Vec<Vec<(f64, f64)>>,
}

impl Contour {
    /// True when the threshold is never crossed on the grid.
    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }
}

/// Marching squares on the grid in `(log N, log f)`, with crossings placed
/// by linear interpolation of the values along each cell edge. Cells with a
/// NaN corner are skipped.
pub fn contour_extract(surface: &ErrorSurface, threshold: f64) -> Contour {
    let xs: Vec<f64> = surface.speakers.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = surface.bands.iter().map(|&f| f.max(f64::MIN_POSITIVE).ln()).collect();
    let v = |i: usize, j: usize| surface.values[i][j] - threshold;
    let mut segments: Vec<[(f64, f64); 2]> = Vec::new();
    for i in 0..xs.len().saturating_sub(1) {
        for j in 0..ys.len().saturating_sub(1) {
            // corners counterclockwise from (i, j)
            let c = [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)];
            let d: Vec<f64> = c.iter().map(|&(a, b)| v(a, b)).collect();
            if d.iter().any(|x| x.is_nan()) {
                continue;
            }
            let mut hits = Vec::with_capacity(4);
            for e in 0..4 {
                let (a, b) = (e, (e + 1) % 4);
                if (d[a] > 0.0) != (d[b] > 0.0) {
                    let t = d[a] / (d[a] - d[b]);
                    let (pa, pb) = ((xs[c[a].0], ys[c[a].1]), (xs[c[b].0], ys[c[b].1]));
                    hits.push((e, (pa.0 + t * (pb.0 - pa.0), pa.1 + t * (pb.1 - pa.1))));
                }
            }
            match hits.len() {
                2 => segments.push([hits[0].1, hits[1].1]),
                4 => {
                    // saddle: the cell mean decides which corners connect
                    let mean = d.iter().sum::<f64>() / 4.0;
                    let above0 = d[0] > 0.0;
                    if (mean > 0.0) == above0 {
                        segments.push([hits[0].1, hits[3].1]);
                        segments.push([hits[1].1, hits[2].1]);
                    } else {
                        segments.push([hits[0].1, hits[1].1]);
                        segments.push([hits[2].1, hits[3].1]);
                    }
                }
                _ => {}
            }
        }
    }
    let lines = chain(segments)
        .into_iter()
        .map(|l| l.into_iter().map(|(x, y)| (x.exp(), y.exp())).collect())
        .collect();
    Contour { threshold, lines }
}

fn close(a: (f64, f64), b: (f64, f64)) -> bool {
    (a.0 - b.0).abs() < 1e-12 && (a.1 - b.1).abs() < 1e-12
}

/// Joins segments that share end points into polylines, in a deterministic
/// order.
fn chain(mut segments: Vec<[(f64, f64); 2]>) -> Vec<Vec<(f64, f64)>> {
    let mut lines = Vec::new();
    while let Some([a, b]) = segments.first().copied() {
        segments.remove(0);
        let mut line = vec![a, b];
        loop {
            let tail = *line.last().unwrap();
            let head = line[0];
            if let Some(k) = segments.iter().position(|s| close(s[0], tail) || close(s[1], tail)) {
                let s = segments.remove(k);
                line.push(if close(s[0], tail) { s[1] } else { s[0] });
            } else if let Some(k) = segments.iter().position(|s| close(s[0], head) || close(s[1], head)) {
                let s = segments.remove(k);
                line.insert(0, if close(s[0], head) { s[1] } else { s[0] });
            } else {
                break;
            }
        }
        lines.push(line);
    }
    lines
}

/// One point of the aliasing overlay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AliasingPoint {
    pub speakers: usize,
    pub radius_m: f64,
    pub max_frequency_hz: f64,
}

/// Highest alias-free frequency per speaker count for a listener offset,
/// with the radius taken at the far ear: `|offset| + head_radius`.
pub fn aliasing_overlay(speakers: &[usize], pose_offset: f64, head_radius: f64, c: f64) -> Vec<AliasingPoint> {
    let r = pose_offset.abs() + head_radius;
    speakers
        .iter()
        .map(|&n| AliasingPoint {
            speakers: n,
            radius_m: r,
            max_frequency_hz: aliasing_frequency(n, r, c),
        })
        .collect()
}

/// Number of grid points at or below the aliasing frequency of their row.
pub fn aliasing_count(surface: &ErrorSurface, overlay: &[AliasingPoint]) -> Result<usize> {
    if overlay.len() != surface.speakers.len() || overlay.iter().zip(&surface.speakers).any(|(p, &n)| p.speakers != n) {
        return Err(Error::GridMismatch("overlay and surface speaker counts differ".into()));
    }
    Ok(overlay
        .iter()
        .map(|p| surface.bands.iter().filter(|&&f| f <= p.max_frequency_hz).count())
        .sum())
}

/// The threshold at which as many finite grid points meet the criterion
/// (value at or below it) as lie inside the aliasing limit. Placed halfway
/// between neighbouring sorted values.
pub fn calibrate_threshold(surface: &ErrorSurface, overlay: &[AliasingPoint]) -> Result<f64> {
    let k = aliasing_count(surface, overlay)?;
    let mut v: Vec<f64> = surface.values.iter().flatten().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return Err(Error::InvalidParameter("surface has no finite values".into()));
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let k = k.min(v.len());
    Ok(if k == 0 {
        v[0] - 1.0
    } else if k == v.len() {
        v[k - 1] + 1.0
    } else {
        0.5 * (v[k - 1] + v[k])
    })
}

/// Grid points meeting a threshold.
pub fn criterion_count(surface: &ErrorSurface, threshold: f64) -> usize {
    surface.values.iter().flatten().filter(|&&x| x <= threshold).count()
}

/// Usable bandwidth per speaker count: the upper edge, given as the band
/// center, of the run of bands from the lowest band upwards that all meet
/// the threshold. 0 when the lowest band already fails; `None` for rows
/// without finite values.
pub fn usable_bandwidth(surface: &ErrorSurface, threshold: f64) -> Vec<Option<f64>> {
    surface
        .values
        .iter()
        .map(|row| {
            if row.iter().all(|x| !x.is_finite()) {
                return None;
            }
            let run = row.iter().take_while(|&&x| x <= threshold).count();
            Some(if run == 0 { 0.0 } else { surface.bands[run - 1] })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::BandGrid;
    use proptest::prelude::*;

    const NS: [usize; 8] = [4, 6, 8, 12, 18, 24, 36, 72];

    fn surface(f: impl Fn(f64, f64) -> f64) -> ErrorSurface {
        let bands = BandGrid::third_octave().centers;
        let values = NS.iter().map(|&n| bands.iter().map(|&b| f(n as f64, b)).collect()).collect();
        ErrorSurface::new(SurfaceMetric::Beam, ReproductionMethod::Hoa, 0.1, NS.to_vec(), bands, values).unwrap()
    }

    #[test]
    fn uniformly_low_surface_has_no_contour() {
        let s = surface(|_, _| 1.0);
        assert!(contour_extract(&s, 5.7).is_empty());
    }

    #[test]
    fn analytic_ratio_surface_is_recovered() {
        // v = f / N crosses t where f = t N
        let s = surface(|n, f| f / n);
        let t = 100.0;
        let c = contour_extract(&s, t);
        assert_eq!(c.lines.len(), 1);
        let band_ratio = 10f64.powf(0.1);
        for &(n, f) in &c.lines[0] {
            let exact = t * n;
            // within one grid cell in both directions
            assert!(f / exact < band_ratio * 1.0001 && exact / f < band_ratio * 1.0001, "N={n} f={f}");
        }
        // the line spans the speaker counts where the crossing is on the grid
        let ns: Vec<f64> = c.lines[0].iter().map(|p| p.0).collect();
        let lo = ns.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ns.iter().cloned().fold(0.0, f64::max);
        assert!(lo <= 4.0 + 1e-9 && hi >= 72.0 - 1e-9);
    }

    #[test]
    fn contour_points_lie_between_straddling_values() {
        let s = surface(|n, f| (f / 1000.0).ln() * 3.0 - (n / 10.0).ln() * 2.0);
        let c = contour_extract(&s, 0.5);
        assert!(!c.is_empty());
        for line in &c.lines {
            for &(n, f) in line {
                // locate the enclosing cell and check the corner values straddle
                let i = NS.iter().rposition(|&x| x as f64 <= n * (1.0 + 1e-9)).unwrap().min(NS.len() - 2);
                let j = s.bands.iter().rposition(|&x| x <= f * (1.0 + 1e-9)).unwrap().min(s.bands.len() - 2);
                let corners = [s.values[i][j], s.values[i + 1][j], s.values[i][j + 1], s.values[i + 1][j + 1]];
                let lo = corners.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = corners.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                assert!(lo <= 0.5 && hi >= 0.5);
            }
        }
    }

    #[test]
    fn overlay_examples() {
        let o = aliasing_overlay(&[24], 0.0, 0.0875, 343.0);
        let want = 343.0 * 23.0 / (4.0 * std::f64::consts::PI * 0.0875);
        assert!((o[0].max_frequency_hz - want).abs() < 1e-9);
        assert!((o[0].max_frequency_hz - 7175.0).abs() < 5.0);
        let o = aliasing_overlay(&[24], 0.5, 0.0875, 343.0);
        assert!((o[0].radius_m - 0.5875).abs() < 1e-12);
        assert!((o[0].max_frequency_hz - 1068.6).abs() < 1.0);
        let o = aliasing_overlay(&NS, 0.1, 0.0875, 343.0);
        assert!(o.windows(2).all(|w| w[1].max_frequency_hz > w[0].max_frequency_hz));
    }

    #[test]
    fn calibration_matches_the_aliasing_count() {
        // a noisy surface rising with f / N, calibrated on the 0.1 m overlay
        let s = surface(|n, f| (f / n).ln() + ((n * 7.0 + f).sin() * 0.3));
        let o = aliasing_overlay(&NS, 0.1, 0.0875, 343.0);
        let t = calibrate_threshold(&s, &o).unwrap();
        assert_eq!(criterion_count(&s, t), aliasing_count(&s, &o).unwrap());
    }

    #[test]
    fn usable_bandwidth_stops_at_the_first_failure() {
        let bands = vec![100.0, 200.0, 400.0];
        let s = ErrorSurface::new(
            SurfaceMetric::Beam,
            ReproductionMethod::Nsp,
            0.0,
            vec![4, 8, 12],
            bands,
            vec![vec![9.0, 1.0, 1.0], vec![1.0, 9.0, 1.0], vec![1.0, 1.0, f64::NAN]],
        )
        .unwrap();
        assert_eq!(usable_bandwidth(&s, 5.0), vec![Some(0.0), Some(100.0), Some(200.0)]);
    }

    #[test]
    fn shape_is_checked() {
        assert!(ErrorSurface::new(SurfaceMetric::Ple, ReproductionMethod::Nsp, 0.0, vec![4, 8], vec![0.0], vec![vec![1.0]]).is_err());
        assert!(ErrorSurface::new(SurfaceMetric::Ple, ReproductionMethod::Nsp, 0.0, vec![8, 4], vec![0.0], vec![vec![1.0], vec![1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn calibration_count_rule_holds(vals in proptest::collection::vec(0.0f64..20.0, 160), offset in 0.0f64..0.6) {
            let bands = BandGrid::third_octave().centers;
            let values: Vec<Vec<f64>> = vals.chunks(20).map(|c| c.to_vec()).collect();
            let s = ErrorSurface::new(SurfaceMetric::Beam, ReproductionMethod::Hoa, offset, NS.to_vec(), bands, values).unwrap();
            let o = aliasing_overlay(&NS, offset, 0.0875, 343.0);
            let t = calibrate_threshold(&s, &o).unwrap();
            let mut sorted = vals.clone();
            sorted.sort_by(|a, b| a.total_cmp(b));
            prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));
            prop_assert_eq!(criterion_count(&s, t), aliasing_count(&s, &o).unwrap());
        }
    }
}
