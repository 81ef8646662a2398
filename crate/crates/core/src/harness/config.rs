//! Sweep configuration file.
//!
//! The file is TOML. Every field is optional and falls back to the full
//! evaluation grid; `schema_version` must match [`CONFIG_SCHEMA_VERSION`]
//! when present. A minimal desk-scale file:
//!
//! ```toml
//! schema_version = 1
//! speakers = [4, 8, 12, 24]
//! poses = [0.0, 0.1, 0.5]
//! methods = ["nsp", "vbap", "hoa"]
//! algorithms = ["beamformer", "adm", "binaural_nr", "sc_nr"]
//! metrics = ["beam", "snr", "ple", "spectral"]
//! seed = 1
//! output_dir = "results"
//!
//! [stimulus]
//! duration_s = 2.0
//!
//! [criteria]
//! beam = 5.7
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geometry::DEFAULT_ARRAY_RADIUS;
use crate::haalgo::{AlgorithmConfig, AlgorithmKind};
use crate::hrir::SphereOptions;
use crate::metrics::{BeamErrorForm, LocalizerConfig};
use crate::panner::{ReproductionMethod, DEFAULT_SPEED_OF_SOUND};
use crate::stimulus::StimulusConfig;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

/// Head radius used for the far-ear distance in the aliasing overlay; the
/// HRIR head is a sphere of this size by default.
pub const DEFAULT_HEAD_RADIUS: f64 = 0.0875;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Beam,
    Snr,
    Ple,
    Spectral,
}

impl MetricKind {
    pub const ALL: [MetricKind; 4] = [Self::Beam, Self::Snr, Self::Ple, Self::Spectral];

    pub fn token(&self) -> &'static str {
        match self {
            Self::Beam => "beam",
            Self::Snr => "snr",
            Self::Ple => "ple",
            Self::Spectral => "spectral",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Four speaker counts and 2 s stimuli; runs in minutes.
    Desk,
    /// The complete grid with 8.4 s stimuli.
    Full,
}

impl FromStr for Preset {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Self::Desk),
            "full" => Ok(Self::Full),
            other => Err(Error::Config(format!("unknown preset '{other}' (expected desk or full)"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Desk => "desk",
            Self::Full => "full",
        })
    }
}

/// Error thresholds in dB (spectral distance and PLE are unitless and
/// degrees respectively) at which a condition counts as usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriterionTable {
    /// Beam error, applied to the literal (unnormalized) form.
    pub beam: f64,
    pub beamformer: f64,
    pub adm: f64,
    pub binaural_nr: f64,
    pub sc_nr: f64,
}

impl Default for CriterionTable {
    fn default() -> Self {
        Self {
            beam: 5.7,
            beamformer: 0.75,
            adm: 0.42,
            binaural_nr: 0.42,
            sc_nr: 0.65,
        }
    }
}

impl CriterionTable {
    pub fn snr(&self, kind: AlgorithmKind) -> f64 {
        match kind {
            AlgorithmKind::Beamformer => self.beamformer,
            AlgorithmKind::Adm => self.adm,
            AlgorithmKind::BinauralNr => self.binaural_nr,
            AlgorithmKind::ScNr => self.sc_nr,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub schema_version: u32,
    pub speakers: Vec<usize>,
    /// Lateral listener offsets in meters (towards the left ear).
    pub poses: Vec<f64>,
    pub methods: Vec<ReproductionMethod>,
    pub algorithms: Vec<AlgorithmKind>,
    pub metrics: Vec<MetricKind>,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Worker threads; 0 uses all cores. Does not affect results.
    pub workers: usize,
    pub array_radius: f64,
    pub speed_of_sound: f64,
    pub head_radius: f64,
    /// Measured HRIR set directory; the sphere model is used when absent.
    pub hrir_dir: Option<PathBuf>,
    pub sphere: SphereOptions,
    pub stimulus: StimulusConfig,
    pub noise_sources: usize,
    pub noise_min_distance: f64,
    pub noise_max_distance: f64,
    pub target_azimuth: f64,
    pub beam_probe_s: f64,
    /// Start of the beam-pattern measurement window, after the
    /// algorithm's smoothing has converged.
    pub beam_settle_s: f64,
    pub beam_step_deg: f64,
    pub beam_error_form: BeamErrorForm,
    /// Source directions for PLE and spectral distance.
    pub targets: Vec<f64>,
    pub algorithm: AlgorithmConfig,
    pub localizer: LocalizerConfig,
    pub criteria: CriterionTable,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            speakers: vec![4, 6, 8, 12, 18, 24, 36, 72],
            poses: vec![0.0, 0.1, 0.5],
            methods: ReproductionMethod::ALL.to_vec(),
            algorithms: AlgorithmKind::ALL.to_vec(),
            metrics: MetricKind::ALL.to_vec(),
            seed: 1,
            output_dir: PathBuf::from("results"),
            workers: 0,
            array_radius: DEFAULT_ARRAY_RADIUS,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
            head_radius: DEFAULT_HEAD_RADIUS,
            hrir_dir: None,
            sphere: SphereOptions::default(),
            stimulus: StimulusConfig::default(),
            noise_sources: 20,
            noise_min_distance: 1.5,
            noise_max_distance: 4.0,
            target_azimuth: 0.0,
            beam_probe_s: 1.0,
            beam_settle_s: 0.25,
            beam_step_deg: 5.0,
            beam_error_form: BeamErrorForm::Mean,
            targets: (-15..=15).map(|i| i as f64 * 5.0).collect(),
            algorithm: AlgorithmConfig::default(),
            localizer: LocalizerConfig::default(),
            criteria: CriterionTable::default(),
        }
    }
}

impl SweepConfig {
    pub fn preset(p: Preset) -> Self {
        let mut cfg = Self::default();
        if p == Preset::Desk {
            cfg.speakers = vec![4, 8, 12, 24];
            cfg.stimulus.duration_s = 2.0;
        }
        cfg
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "config schema {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.speakers.is_empty() || self.poses.is_empty() || self.methods.is_empty() || self.metrics.is_empty() {
            return Err(Error::Config("speakers, poses, methods and metrics must not be empty".into()));
        }
        if let Some(n) = self.speakers.iter().find(|&&n| n < 4 || n % 2 == 1) {
            return Err(Error::Config(format!("speaker count {n} must be even and at least 4")));
        }
        if let Some(p) = self.poses.iter().find(|p| !(p.abs() < self.array_radius)) {
            return Err(Error::Config(format!("pose {p} m is outside the array")));
        }
        if self.metrics.contains(&MetricKind::Snr) && self.algorithms.is_empty() {
            return Err(Error::Config("SNR metric selected without algorithms".into()));
        }
        if self.metrics.iter().any(|m| matches!(m, MetricKind::Ple | MetricKind::Spectral)) && self.targets.is_empty() {
            return Err(Error::Config("localization targets must not be empty".into()));
        }
        if !(self.beam_settle_s >= 0.0 && self.beam_settle_s < self.beam_probe_s) {
            return Err(Error::Config("beam settling time must be shorter than the probe".into()));
        }
        if !(self.beam_step_deg > 0.0) || !(self.head_radius >= 0.0) || !(self.speed_of_sound > 0.0) {
            return Err(Error::Config("beam step, head radius and speed of sound must be positive".into()));
        }
        if self.noise_sources == 0 || !(self.noise_min_distance > 0.0 && self.noise_min_distance <= self.noise_max_distance) {
            return Err(Error::Config("noise layout needs at least one source and a valid distance range".into()));
        }
        Ok(())
    }

    /// The configuration with the fields that cannot change results
    /// (worker count, output directory) reset to their defaults.
    pub fn canonical(&self) -> Self {
        let d = Self::default();
        Self {
            workers: d.workers,
            output_dir: d.output_dir,
            ..self.clone()
        }
    }

    /// SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> Result<String> {
        Ok(hex::encode(Sha256::digest(self.canonical().to_toml()?.as_bytes())))
    }

    pub fn beam_azimuths(&self) -> Vec<f64> {
        let n = (360.0 / self.beam_step_deg).round() as usize;
        (0..n).map(|i| i as f64 * self.beam_step_deg).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_cover_the_full_grid() {
        let c = SweepConfig::default();
        assert_eq!(c.speakers, vec![4, 6, 8, 12, 18, 24, 36, 72]);
        assert_eq!(c.poses, vec![0.0, 0.1, 0.5]);
        assert_eq!(c.methods.len(), 3);
        assert_eq!(c.algorithms.len(), 4);
        assert_eq!(c.targets.len(), 31);
        assert_eq!((c.targets[0], c.targets[30]), (-75.0, 75.0));
        assert_eq!(c.stimulus.duration_s, 8.4);
        assert_eq!(c.noise_sources, 20);
        assert_eq!(c.beam_azimuths().len(), 72);
    }

    #[test]
    fn criterion_defaults() {
        let t = CriterionTable::default();
        assert_eq!([t.beam, t.beamformer, t.adm, t.binaural_nr, t.sc_nr], [5.7, 0.75, 0.42, 0.42, 0.65]);
    }

    #[test]
    fn round_trip_keeps_everything() {
        for p in [Preset::Desk, Preset::Full] {
            let c = SweepConfig::preset(p);
            let back = SweepConfig::from_toml(&c.to_toml().unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.criteria, CriterionTable::default());
        }
    }

    #[test]
    fn partial_files_fill_in_defaults() {
        let c = SweepConfig::from_toml("speakers = [8]\n[criteria]\nadm = 0.5\n").unwrap();
        assert_eq!(c.speakers, vec![8]);
        assert_eq!(c.criteria.adm, 0.5);
        assert_eq!(c.criteria.beam, 5.7);
        assert_eq!(c.poses, vec![0.0, 0.1, 0.5]);
    }

    #[test]
    fn invalid_files_are_rejected() {
        assert!(SweepConfig::from_toml("speakers = [5]").is_err());
        assert!(SweepConfig::from_toml("poses = [3.5]").is_err());
        assert!(SweepConfig::from_toml("schema_version = 2").is_err());
        assert!(SweepConfig::from_toml("bogus = 1").is_err());
    }

    #[test]
    fn hash_ignores_workers_and_output() {
        let a = SweepConfig::preset(Preset::Desk);
        let mut b = a.clone();
        b.workers = 3;
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 2;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
        assert_eq!(a.hash().unwrap().len(), 64);
    }
}
