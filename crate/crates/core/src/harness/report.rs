//! Criterion application, contours, usable-bandwidth tables and the
//! summary document.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::CriterionTable;
use super::surface::{
    aliasing_overlay, calibrate_threshold, contour_extract, usable_bandwidth, Contour, ErrorSurface, SurfaceMetric,
};
use crate::error::{Error, Result};
use crate::haalgo::AlgorithmKind;
use crate::panner::ReproductionMethod;

/// Condition on which the beam threshold is calibrated against the
/// aliasing prediction.
pub const CALIBRATION_METHOD: ReproductionMethod = ReproductionMethod::Hoa;
pub const CALIBRATION_POSE_M: f64 = 0.1;

/// A banded surface with a threshold applied.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionSummary {
    pub metric: SurfaceMetric,
    pub method: ReproductionMethod,
    pub pose_m: f64,
    pub threshold: f64,
    /// `table` or `calibrated`.
    pub threshold_source: &'static str,
    pub speakers: Vec<usize>,
    pub usable_hz: Vec<Option<f64>>,
    pub contour: Contour,
}

/// A scalar surface (PLE, spectral distance) per speaker count.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSummary {
    pub metric: SurfaceMetric,
    pub method: ReproductionMethod,
    pub pose_m: f64,
    pub speakers: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReportData {
    pub config_hash: String,
    pub head_radius: f64,
    pub calibrated_beam_threshold: Option<f64>,
    pub conditions: Vec<ConditionSummary>,
    pub scalars: Vec<ScalarSummary>,
}

impl ReportData {
    pub fn is_empty(&self) -> bool {
        self.conditions.is_empty() && self.scalars.is_empty()
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# Sweep report\n");
        let _ = writeln!(s, "Config SHA-256: `{}`\n", self.config_hash);
        if self.is_empty() {
            let _ = writeln!(s, "No surfaces.");
            return s;
        }
        let _ = writeln!(
            s,
            "Aliasing overlay uses the far-ear radius with a head radius of {} m.\n",
            self.head_radius
        );
        if let Some(t) = self.calibrated_beam_threshold {
            let _ = writeln!(
                s,
                "Beam error threshold calibrated on {} at {} m: {t:.3} dB.\n",
                CALIBRATION_METHOD, CALIBRATION_POSE_M
            );
        }
        if !self.conditions.is_empty() {
            let _ = writeln!(s, "## Usable bandwidth (Hz)\n");
            let speakers = &self.conditions[0].speakers;
            let head: Vec<String> = speakers.iter().map(|n| format!("N={n}")).collect();
            let _ = writeln!(s, "| metric | algorithm | method | pose (m) | threshold | {} |", head.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(5 + speakers.len()));
            for c in &self.conditions {
                let cells: Vec<String> = c
                    .usable_hz
                    .iter()
                    .map(|u| u.map(|f| format!("{f:.0}")).unwrap_or_else(|| "n/a".into()))
                    .collect();
                let _ = writeln!(
                    s,
                    "| {} | {} | {} | {} | {:.3} ({}) | {} |",
                    c.metric.token(),
                    c.metric.algorithm().map(|k| k.token()).unwrap_or(""),
                    c.method,
                    c.pose_m,
                    c.threshold,
                    c.threshold_source,
                    cells.join(" | ")
                );
            }
            let _ = writeln!(s);
        }
        if !self.scalars.is_empty() {
            let _ = writeln!(s, "## Scalar measures\n");
            let speakers = &self.scalars[0].speakers;
            let head: Vec<String> = speakers.iter().map(|n| format!("N={n}")).collect();
            let _ = writeln!(s, "| metric | method | pose (m) | {} |", head.join(" | "));
            let _ = writeln!(s, "|{}", "---|".repeat(3 + speakers.len()));
            for c in &self.scalars {
                let cells: Vec<String> = c
                    .values
                    .iter()
                    .map(|v| if v.is_finite() { format!("{v:.3}") } else { "n/a".into() })
                    .collect();
                let _ = writeln!(s, "| {} | {} | {} | {} |", c.metric.token(), c.method, c.pose_m, cells.join(" | "));
            }
        }
        s
    }
}

/// Applies the criteria to every surface. The literal beam error and the
/// SNR errors use the table thresholds; the configured beam error form is
/// thresholded at the value calibrated on the aliasing prediction.
pub fn derive(surfaces: &[ErrorSurface], criteria: &CriterionTable, head_radius: f64, c: f64) -> ReportData {
    let calibrated = surfaces
        .iter()
        .find(|s| s.metric == SurfaceMetric::Beam && s.method == CALIBRATION_METHOD && s.pose_m == CALIBRATION_POSE_M)
        .and_then(|s| calibrate_threshold(s, &aliasing_overlay(&s.speakers, s.pose_m, head_radius, c)).ok());
    let mut conditions = Vec::new();
    let mut scalars = Vec::new();
    for s in surfaces {
        let threshold = match s.metric {
            SurfaceMetric::BeamLiteral => Some((criteria.beam, "table")),
            SurfaceMetric::Beam => calibrated.map(|t| (t, "calibrated")),
            SurfaceMetric::SnrError(k) => Some((criteria.snr(k), "table")),
            _ => None,
        };
        if s.metric.is_banded() {
            if let Some((t, source)) = threshold {
                conditions.push(ConditionSummary {
                    metric: s.metric,
                    method: s.method,
                    pose_m: s.pose_m,
                    threshold: t,
                    threshold_source: source,
                    speakers: s.speakers.clone(),
                    usable_hz: usable_bandwidth(s, t),
                    contour: contour_extract(s, t),
                });
            }
        } else {
            scalars.push(ScalarSummary {
                metric: s.metric,
                method: s.method,
                pose_m: s.pose_m,
                speakers: s.speakers.clone(),
                values: s.values.iter().map(|r| r[0]).collect(),
            });
        }
    }
    ReportData {
        config_hash: String::new(),
        head_radius,
        calibrated_beam_threshold: calibrated,
        conditions,
        scalars,
    }
}

/// Builds the summary for a set of surfaces.
pub fn report(surfaces: &[ErrorSurface], criteria: &CriterionTable, config_hash: &str, head_radius: f64, c: f64) -> ReportData {
    ReportData {
        config_hash: config_hash.to_string(),
        ..derive(surfaces, criteria, head_radius, c)
    }
}

#[derive(Serialize)]
struct ContourRow<'a> {
    metric: &'a str,
    algorithm: &'a str,
    method: &'a str,
    pose_m: f64,
    threshold: f64,
    threshold_source: &'a str,
    line: usize,
    point: usize,
    speakers: f64,
    frequency_hz: f64,
}

/// One row per contour point; conditions whose threshold is never crossed
/// get a single row with empty coordinates.
pub fn write_contours(path: &Path, data: &ReportData) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record([
        "metric",
        "algorithm",
        "method",
        "pose_m",
        "threshold",
        "threshold_source",
        "line",
        "point",
        "speakers",
        "frequency_hz",
    ])?;
    for c in &data.conditions {
        let base = |line: usize, point: usize, n: f64, f: f64| ContourRow {
            metric: c.metric.token(),
            algorithm: c.metric.algorithm().map(|k| k.token()).unwrap_or(""),
            method: c.method.token(),
            pose_m: c.pose_m,
            threshold: c.threshold,
            threshold_source: c.threshold_source,
            line,
            point,
            speakers: n,
            frequency_hz: f,
        };
        if c.contour.is_empty() {
            w.write_record([
                c.metric.token(),
                c.metric.algorithm().map(|k| k.token()).unwrap_or(""),
                c.method.token(),
                &c.pose_m.to_string(),
                &c.threshold.to_string(),
                c.threshold_source,
                "",
                "",
                "",
                "",
            ])?;
        }
        for (l, line) in c.contour.lines.iter().enumerate() {
            for (p, &(n, f)) in line.iter().enumerate() {
                w.serialize(base(l, p, n, f))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct UsableRow<'a> {
    metric: &'a str,
    algorithm: &'a str,
    method: &'a str,
    pose_m: f64,
    threshold: f64,
    threshold_source: &'a str,
    speakers: usize,
    usable_hz: Option<f64>,
}

pub fn write_usable(path: &Path, data: &ReportData) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for c in &data.conditions {
        for (&n, &u) in c.speakers.iter().zip(&c.usable_hz) {
            w.serialize(UsableRow {
                metric: c.metric.token(),
                algorithm: c.metric.algorithm().map(|k| k.token()).unwrap_or(""),
                method: c.method.token(),
                pose_m: c.pose_m,
                threshold: c.threshold,
                threshold_source: c.threshold_source,
                speakers: n,
                usable_hz: u,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Deserialize)]
struct SurfaceRow {
    metric: String,
    algorithm: String,
    method: String,
    speakers: usize,
    pose_m: f64,
    #[allow(dead_code)]
    axis: String,
    key: f64,
    #[allow(dead_code)]
    band_hz: Option<f64>,
    value: Option<f64>,
}

fn parse_metric(metric: &str, algorithm: &str) -> Result<SurfaceMetric> {
    Ok(match metric {
        "beam" => SurfaceMetric::Beam,
        "beam_literal" => SurfaceMetric::BeamLiteral,
        "snr_error" => SurfaceMetric::SnrError(algorithm.parse::<AlgorithmKind>()?),
        "ple" => SurfaceMetric::Ple,
        "ple_envelope" => SurfaceMetric::PleEnvelope,
        "spectral" => SurfaceMetric::Spectral,
        other => return Err(Error::Config(format!("unknown surface metric '{other}'"))),
    })
}

/// Reads surfaces written by a sweep back into memory.
pub fn read_surfaces(path: &Path) -> Result<Vec<ErrorSurface>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
    // (order of first appearance, grid)
    type Grid = BTreeMap<(usize, u64), f64>;
    let mut groups: Vec<((SurfaceMetric, ReproductionMethod, u64), Grid)> = Vec::new();
    for row in r.deserialize() {
        let row: SurfaceRow = row?;
        let key = (
            parse_metric(&row.metric, &row.algorithm)?,
            row.method.parse::<ReproductionMethod>()?,
            row.pose_m.to_bits(),
        );
        let i = match groups.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                groups.push((key, Grid::new()));
                groups.len() - 1
            }
        };
        groups[i].1.insert((row.speakers, row.key.to_bits()), row.value.unwrap_or(f64::NAN));
    }
    groups
        .into_iter()
        .map(|((metric, method, pose), grid)| {
            let mut speakers: Vec<usize> = grid.keys().map(|k| k.0).collect();
            speakers.dedup();
            let mut bands: Vec<f64> = grid.keys().map(|k| f64::from_bits(k.1)).collect();
            bands.sort_by(|a, b| a.total_cmp(b));
            bands.dedup();
            let values = speakers
                .iter()
                .map(|&n| {
                    bands
                        .iter()
                        .map(|b| grid.get(&(n, b.to_bits())).copied().unwrap_or(f64::NAN))
                        .collect()
                })
                .collect();
            ErrorSurface::new(metric, method, f64::from_bits(pose), speakers, bands, values)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::sweep::surface_rows;
    use crate::metrics::write_rows;

    fn surfaces() -> Vec<ErrorSurface> {
        let bands = vec![250.0, 500.0, 1000.0, 2000.0];
        let speakers = vec![4, 8, 12];
        let mk = |metric, method, pose, f: &dyn Fn(f64, f64) -> f64| {
            let values = speakers.iter().map(|&n| bands.iter().map(|&b| f(n as f64, b)).collect()).collect();
            ErrorSurface::new(metric, method, pose, speakers.clone(), bands.clone(), values).unwrap()
        };
        vec![
            mk(SurfaceMetric::BeamLiteral, ReproductionMethod::Hoa, 0.1, &|n, f| f / n / 300.0),
            mk(SurfaceMetric::Beam, ReproductionMethod::Hoa, 0.1, &|n, f| f / n / 30.0),
            mk(SurfaceMetric::SnrError(AlgorithmKind::Adm), ReproductionMethod::Nsp, 0.0, &|_, f| f / 2000.0),
            ErrorSurface::new(SurfaceMetric::Ple, ReproductionMethod::Nsp, 0.0, speakers.clone(), vec![0.0], vec![vec![20.0], vec![12.0], vec![f64::NAN]])
                .unwrap(),
        ]
    }

    #[test]
    fn empty_input_gives_an_empty_report() {
        let r = report(&[], &CriterionTable::default(), "abc", 0.0875, 343.0);
        assert!(r.is_empty());
        assert!(r.to_markdown().contains("abc"));
    }

    #[test]
    fn report_applies_the_table_and_calibrates_the_beam() {
        let r = report(&surfaces(), &CriterionTable::default(), "feed", 0.0875, 343.0);
        assert!(r.to_markdown().contains("feed"));
        assert!(r.calibrated_beam_threshold.is_some());
        let lit = r.conditions.iter().find(|c| c.metric == SurfaceMetric::BeamLiteral).unwrap();
        assert_eq!(lit.threshold, 5.7);
        // f / N / 300 <= 5.7 everywhere on this grid
        assert_eq!(lit.usable_hz, vec![Some(2000.0); 3]);
        let adm = r.conditions.iter().find(|c| c.metric == SurfaceMetric::SnrError(AlgorithmKind::Adm)).unwrap();
        assert_eq!(adm.threshold, 0.42);
        assert_eq!(adm.usable_hz, vec![Some(500.0); 3]);
        assert_eq!(r.scalars.len(), 1);
    }

    #[test]
    fn surfaces_survive_a_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("surfaces.csv");
        let s = surfaces();
        write_rows(&path, &surface_rows(&s)).unwrap();
        let back = read_surfaces(&path).unwrap();
        assert_eq!(back.len(), s.len());
        for (a, b) in s.iter().zip(&back) {
            assert_eq!((a.metric, a.method, a.pose_m), (b.metric, b.method, b.pose_m));
            assert_eq!(a.speakers, b.speakers);
            assert_eq!(a.bands, b.bands);
            for (ra, rb) in a.values.iter().zip(&b.values) {
                for (x, y) in ra.iter().zip(rb) {
                    assert!(x == y || (x.is_nan() && y.is_nan()));
                }
            }
        }
    }

    #[test]
    fn contour_file_flags_uncrossed_thresholds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("contours.csv");
        let data = derive(&surfaces(), &CriterionTable::default(), 0.0875, 343.0);
        write_contours(&path, &data).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("metric,algorithm,method,pose_m,threshold"));
        assert!(text.lines().any(|l| l.starts_with("beam_literal,beamformer,hoa,0.1,5.7,table,,")));
    }
}
