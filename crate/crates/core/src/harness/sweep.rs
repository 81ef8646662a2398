//! The sweep runner: renders every (method, speaker count, pose) cell,
//! measures it against the free-field reference at the same pose and
//! collects error surfaces.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use super::config::{MetricKind, SweepConfig};
use super::report::{derive, write_contours, write_usable, ReportData};
use super::surface::{aliasing_overlay, ErrorSurface, SurfaceMetric};
use crate::audio::AudioBuffer;
use crate::binsim::{random_noise_layout, render_stems, Renderer, Reproduction, SceneSpec, SceneStems, SourceSpec};
use crate::dsp::BandGrid;
use crate::error::{Error, Result};
use crate::geometry::{ListenerPose, Position2D, SpeakerArray};
use crate::haalgo::{build_algorithm, Algorithm, AlgorithmKind};
use crate::hrir::{load_hrir_set, synth_sphere_hrir, ChannelRole, ChannelSelection, HrirSet};
use crate::metrics::{
    beam_error, beam_pattern, ple, snr_error, snr_improvement, spectral_distance, write_rows, BeamErrorForm,
    BeamPattern, LocalizationEstimate, Localizer, MetricRow, SnrSweep, NOMINAL_SNRS,
};
use crate::panner::{PannerOptions, ReproductionMethod};
use crate::stimulus::{white_noise, Stimuli};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;

/// Loads the configured HRIR set, or synthesizes the sphere model.
pub fn resolve_hrir(cfg: &SweepConfig) -> Result<HrirSet> {
    match &cfg.hrir_dir {
        Some(dir) => load_hrir_set(dir),
        None => synth_sphere_hrir(&cfg.sphere),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellKey {
    pub method: ReproductionMethod,
    pub speakers: usize,
    pub pose_m: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub key: CellKey,
    /// `None` when the cell was computed.
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub config_hash: String,
    pub hrir_source: String,
    pub noise_layout: Vec<(f64, f64)>,
    pub speakers: Vec<usize>,
    pub bands: Vec<f64>,
    pub surfaces: Vec<ErrorSurface>,
    pub raw: Vec<MetricRow>,
    pub cells: Vec<CellRecord>,
}

impl SweepResult {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.error.is_some()).count()
    }

    pub fn surface(&self, metric: SurfaceMetric, method: ReproductionMethod, pose_m: f64) -> Option<&ErrorSurface> {
        self.surfaces
            .iter()
            .find(|s| s.metric == metric && s.method == method && s.pose_m == pose_m)
    }

    /// Writes all result files into `dir` (created if needed).
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_rows(&dir.join("surfaces.csv"), &surface_rows(&self.surfaces))?;
        write_rows(&dir.join("raw.csv"), &self.raw)?;
        let mut w = csv::Writer::from_path(dir.join("cells.csv"))?;
        w.write_record(["method", "speakers", "pose_m", "status", "error"])?;
        for c in &self.cells {
            w.write_record([
                c.key.method.token(),
                &c.key.speakers.to_string(),
                &c.key.pose_m.to_string(),
                if c.error.is_some() { "failed" } else { "ok" },
                c.error.as_deref().unwrap_or(""),
            ])?;
        }
        w.flush()?;
        let mut w = csv::Writer::from_path(dir.join("aliasing.csv"))?;
        for &pose in &self.config.poses {
            for p in aliasing_overlay(&self.speakers, pose, self.config.head_radius, self.config.speed_of_sound) {
                w.serialize(AliasingRow {
                    pose_m: pose,
                    head_radius_m: self.config.head_radius,
                    radius_m: p.radius_m,
                    speakers: p.speakers,
                    max_frequency_hz: p.max_frequency_hz,
                })?;
            }
        }
        w.flush()?;
        let data = derive(&self.surfaces, &self.config.criteria, self.config.head_radius, self.config.speed_of_sound);
        write_contours(&dir.join("contours.csv"), &data)?;
        write_usable(&dir.join("usable.csv"), &data)?;
        std::fs::write(dir.join("manifest.toml"), self.manifest()?)?;
        // canonical, so that reruns with other workers or paths match byte for byte
        std::fs::write(dir.join("config.toml"), self.config.canonical().to_toml()?)?;
        let report = ReportData {
            config_hash: self.config_hash.clone(),
            ..data
        };
        std::fs::write(dir.join("report.md"), report.to_markdown())?;
        Ok(())
    }

    pub fn manifest(&self) -> Result<String> {
        let m = Manifest {
            schema_version: MANIFEST_SCHEMA_VERSION,
            csv_schema_version: crate::metrics::CSV_SCHEMA_VERSION,
            crate_version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: self.config_hash.clone(),
            seed: self.config.seed,
            hrir: self.hrir_source.clone(),
            head_radius_m: self.config.head_radius,
            snr_calibration_channel: ChannelRole::InEarL.token().into(),
            beam_probe: format!(
                "white noise, {} s, measured from {} s on (adaptive smoothing frozen by then)",
                self.config.beam_probe_s, self.config.beam_settle_s
            ),
            beam_error_form: match self.config.beam_error_form {
                BeamErrorForm::Literal => "literal".into(),
                BeamErrorForm::Mean => "mean".into(),
            },
            cells: self.cells.len(),
            failed_cells: self.failed_cells(),
            surfaces: self.surfaces.len(),
            noise_source: self
                .noise_layout
                .iter()
                .map(|&(azimuth, distance)| NoiseSource { azimuth, distance })
                .collect(),
            failed: self
                .cells
                .iter()
                .filter_map(|c| {
                    c.error.as_ref().map(|e| FailedCell {
                        method: c.key.method.token().into(),
                        speakers: c.key.speakers,
                        pose_m: c.key.pose_m,
                        error: e.clone(),
                    })
                })
                .collect(),
        };
        toml::to_string(&m).map_err(|e| Error::Config(e.to_string()))
    }
}

#[derive(Serialize)]
struct AliasingRow {
    pose_m: f64,
    head_radius_m: f64,
    radius_m: f64,
    speakers: usize,
    max_frequency_hz: f64,
}

#[derive(Serialize)]
struct Manifest {
    schema_version: u32,
    csv_schema_version: u32,
    crate_version: String,
    config_sha256: String,
    seed: u64,
    hrir: String,
    head_radius_m: f64,
    snr_calibration_channel: String,
    beam_probe: String,
    beam_error_form: String,
    cells: usize,
    failed_cells: usize,
    surfaces: usize,
    noise_source: Vec<NoiseSource>,
    failed: Vec<FailedCell>,
}

#[derive(Serialize)]
struct NoiseSource {
    azimuth: f64,
    distance: f64,
}

#[derive(Serialize)]
struct FailedCell {
    method: String,
    speakers: usize,
    pose_m: f64,
    error: String,
}

/// Long-format rows of a set of surfaces; NaN values are left empty.
pub fn surface_rows(surfaces: &[ErrorSurface]) -> Vec<MetricRow> {
    let mut rows = Vec::new();
    for s in surfaces {
        for (i, &n) in s.speakers.iter().enumerate() {
            for (b, &f) in s.bands.iter().enumerate() {
                let v = s.values[i][b];
                rows.push(MetricRow {
                    metric: s.metric.token().into(),
                    algorithm: s.metric.algorithm().map(|k| k.token().to_string()).unwrap_or_default(),
                    method: s.method.token().into(),
                    speakers: n,
                    pose_m: s.pose_m,
                    axis: if s.metric.is_banded() { "band_hz" } else { "none" }.into(),
                    key: f,
                    band_hz: None,
                    value: v.is_finite().then_some(v),
                });
            }
        }
    }
    rows
}

/// Immutable inputs shared by all cells.
struct Context<'a> {
    cfg: &'a SweepConfig,
    set: &'a HrirSet,
    bands: BandGrid,
    scene: SceneSpec,
    probe: Vec<f64>,
    beamformer: Option<Arc<dyn Algorithm>>,
    algorithms: Vec<(AlgorithmKind, Arc<dyn Algorithm>)>,
    localizer: Option<Localizer>,
    opts: PannerOptions,
}

/// Everything measured for one rendering condition.
struct Measurements {
    beam: Option<BeamPattern>,
    snr: Vec<SnrSweep>,
    doas: Vec<LocalizationEstimate>,
    ears: Vec<AudioBuffer>,
}

impl Context<'_> {
    fn wants(&self, m: MetricKind) -> bool {
        self.cfg.metrics.contains(&m)
    }

    fn array(&self, n: usize) -> Result<SpeakerArray> {
        SpeakerArray::new(n, self.cfg.array_radius, 0.0)
    }

    fn renderer(&self, repro: Reproduction, n: usize, pose: f64, sel: &ChannelSelection) -> Result<Renderer<'_>> {
        Renderer::new(self.set, &self.array(n)?, ListenerPose::lateral(pose), repro, sel, self.opts)
    }

    fn measure(&self, repro: Reproduction, n: usize, pose: f64) -> Result<Measurements> {
        let fs = self.set.sample_rate() as f64;
        let beam = match (&self.beamformer, self.wants(MetricKind::Beam)) {
            (Some(alg), true) => {
                let r = self.renderer(repro, n, pose, &AlgorithmKind::Beamformer.selection())?;
                let settle = (self.cfg.beam_settle_s * fs).round() as usize;
                Some(beam_pattern(
                    alg.as_ref(),
                    &r,
                    &self.probe,
                    &self.cfg.beam_azimuths(),
                    self.cfg.array_radius,
                    &self.bands,
                    settle,
                )?)
            }
            _ => None,
        };
        let mut snr = Vec::new();
        if self.wants(MetricKind::Snr) {
            let all = ChannelSelection::new(self.set.roles());
            let r = self.renderer(repro, n, pose, &all)?;
            let stems: SceneStems = render_stems(&self.scene, &r, ChannelRole::InEarL)?;
            for (kind, alg) in &self.algorithms {
                let channels: Vec<usize> = kind
                    .selection()
                    .roles
                    .iter()
                    .map(|&role| all.position(role).expect("set provides every role"))
                    .collect();
                snr.push(snr_improvement(alg.as_ref(), &stems, &channels, &self.bands, &NOMINAL_SNRS)?);
            }
        }
        let (mut doas, mut ears) = (Vec::new(), Vec::new());
        let ple_wanted = self.wants(MetricKind::Ple);
        if ple_wanted || self.wants(MetricKind::Spectral) {
            let r = self.renderer(repro, n, pose, &ChannelSelection::localization())?;
            for &az in &self.cfg.targets {
                let x = r.render(&self.scene.target.signal, &Position2D::from_polar(az, self.cfg.array_radius))?;
                if let (true, Some(loc)) = (ple_wanted, &self.localizer) {
                    doas.push(loc.localize(&x)?);
                }
                ears.push(x);
            }
        }
        Ok(Measurements { beam, snr, doas, ears })
    }
}

/// Per-cell outputs before assembly into surfaces.
struct CellValues {
    beam: Option<Vec<f64>>,
    beam_literal: Option<Vec<f64>>,
    snr: Vec<Vec<f64>>,
    ple: Option<f64>,
    ple_envelope: Option<f64>,
    spectral: Option<f64>,
    raw: Vec<MetricRow>,
}

fn raw_rows(m: &Measurements, key_method: &str, n: usize, pose: f64, ctx: &Context) -> Vec<MetricRow> {
    let row = |metric: &str, algorithm: &str, axis: &str, key: f64, band: Option<f64>, value: Option<f64>| MetricRow {
        metric: metric.into(),
        algorithm: algorithm.into(),
        method: key_method.into(),
        speakers: n,
        pose_m: pose,
        axis: axis.into(),
        key,
        band_hz: band,
        value: value.filter(|v| v.is_finite()),
    };
    let mut rows = Vec::new();
    if let Some(p) = &m.beam {
        for (a, g) in p.azimuths.iter().zip(&p.gains_db) {
            for (f, v) in p.bands.iter().zip(g) {
                rows.push(row("beam_gain_db", "beamformer", "azimuth_deg", *a, Some(*f), Some(*v)));
            }
        }
    }
    for ((kind, _), s) in ctx.algorithms.iter().zip(&m.snr) {
        for (snr, d) in s.snrs.iter().zip(&s.delta_db) {
            for (f, v) in s.bands.iter().zip(d) {
                rows.push(row("snr_improvement_db", kind.token(), "snr_db", *snr, Some(*f), Some(*v)));
            }
        }
    }
    for (t, e) in ctx.cfg.targets.iter().zip(&m.doas) {
        rows.push(row("doa_fine_deg", "", "target_deg", *t, None, e.fine));
        rows.push(row("doa_envelope_deg", "", "target_deg", *t, None, e.envelope));
    }
    rows
}

fn compare(ctx: &Context, reference: &Measurements, test: &Measurements, method: &str, n: usize, pose: f64) -> Result<CellValues> {
    let mut raw = raw_rows(test, method, n, pose, ctx);
    let (beam, beam_literal) = match (&reference.beam, &test.beam) {
        (Some(r), Some(t)) => (
            Some(beam_error(r, t, ctx.cfg.beam_error_form)?),
            Some(beam_error(r, t, BeamErrorForm::Literal)?),
        ),
        _ => (None, None),
    };
    let snr = reference
        .snr
        .iter()
        .zip(&test.snr)
        .map(|(r, t)| snr_error(r, t))
        .collect::<Result<Vec<_>>>()?;
    let (mut ple_fine, mut ple_env) = (None, None);
    if !test.doas.is_empty() {
        let fine = ple(
            &reference.doas.iter().map(|e| e.fine).collect::<Vec<_>>(),
            &test.doas.iter().map(|e| e.fine).collect::<Vec<_>>(),
        )?;
        let env = ple(
            &reference.doas.iter().map(|e| e.envelope).collect::<Vec<_>>(),
            &test.doas.iter().map(|e| e.envelope).collect::<Vec<_>>(),
        )?;
        for (name, p) in [("ple_excluded", fine), ("ple_envelope_excluded", env)] {
            raw.push(MetricRow {
                metric: name.into(),
                algorithm: String::new(),
                method: method.into(),
                speakers: n,
                pose_m: pose,
                axis: "none".into(),
                key: 0.0,
                band_hz: None,
                value: Some(p.excluded as f64),
            });
        }
        ple_fine = Some(fine.value.unwrap_or(f64::NAN));
        ple_env = Some(env.value.unwrap_or(f64::NAN));
    }
    let spectral = if ctx.wants(MetricKind::Spectral) && !test.ears.is_empty() {
        let fs = ctx.set.sample_rate() as f64;
        let mut total = 0.0;
        for ((t, r), x) in ctx.cfg.targets.iter().zip(&reference.ears).zip(&test.ears) {
            let d: f64 = (0..x.channels())
                .map(|c| spectral_distance(r.channel(c), x.channel(c), fs).value)
                .sum::<f64>()
                / x.channels() as f64;
            raw.push(MetricRow {
                metric: "spectral_distance".into(),
                algorithm: String::new(),
                method: method.into(),
                speakers: n,
                pose_m: pose,
                axis: "target_deg".into(),
                key: *t,
                band_hz: None,
                value: Some(d),
            });
            total += d;
        }
        Some(total / test.ears.len() as f64)
    } else {
        None
    };
    Ok(CellValues {
        beam,
        beam_literal,
        snr,
        ple: ple_fine,
        ple_envelope: ple_env,
        spectral,
        raw,
    })
}

/// Options that affect only how a sweep runs, not what it produces.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Print one line per finished cell to stderr.
    pub progress: bool,
}

/// Runs the configured sweep. Cell failures are recorded and do not stop
/// the run; failures of shared inputs (HRIRs, stimuli, references) are
/// fatal.
pub fn run_sweep(cfg: &SweepConfig, opts: RunOptions) -> Result<SweepResult> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    pool.install(|| run_in_pool(cfg, opts))
}

fn run_in_pool(cfg: &SweepConfig, opts: RunOptions) -> Result<SweepResult> {
    let started = Instant::now();
    let set = resolve_hrir(cfg)?;
    let hrir_source = match &cfg.hrir_dir {
        Some(d) => d.display().to_string(),
        None => format!("sphere model, head radius {} m", set.head_radius()),
    };
    let fs = set.sample_rate();
    let stimuli = Stimuli::prepare(&cfg.stimulus, fs, cfg.noise_sources, cfg.seed)?;
    let noise_layout = random_noise_layout(
        cfg.noise_sources,
        cfg.seed.wrapping_add(1),
        cfg.noise_min_distance,
        cfg.noise_max_distance,
    );
    let scene = SceneSpec {
        sample_rate: fs,
        target: SourceSpec {
            signal: stimuli.target.clone(),
            azimuth: cfg.target_azimuth,
            distance: cfg.array_radius,
            level_db: 0.0,
        },
        noises: noise_layout
            .iter()
            .zip(&stimuli.noise)
            .map(|(&(azimuth, distance), s)| SourceSpec {
                signal: s.clone(),
                azimuth,
                distance,
                level_db: 0.0,
            })
            .collect(),
        nominal_snr_db: 0.0,
    };
    let beamformer = if cfg.metrics.contains(&MetricKind::Beam) {
        Some(build_algorithm(AlgorithmKind::Beamformer, &cfg.algorithm, &set, cfg.speed_of_sound)?)
    } else {
        None
    };
    let algorithms = if cfg.metrics.contains(&MetricKind::Snr) {
        cfg.algorithms
            .iter()
            .map(|&k| Ok((k, build_algorithm(k, &cfg.algorithm, &set, cfg.speed_of_sound)?)))
            .collect::<Result<Vec<_>>>()?
    } else {
        Vec::new()
    };
    let localizer = if cfg.metrics.contains(&MetricKind::Ple) {
        Some(Localizer::build(&set, &cfg.localizer, cfg.speed_of_sound)?)
    } else {
        None
    };
    let ctx = Context {
        cfg,
        set: &set,
        bands: BandGrid::third_octave(),
        scene,
        probe: white_noise((cfg.beam_probe_s * fs as f64).round() as usize, cfg.seed.wrapping_add(2)),
        beamformer,
        algorithms,
        localizer,
        opts: PannerOptions {
            speed_of_sound: cfg.speed_of_sound,
            ..PannerOptions::default()
        },
    };

    let mut speakers = cfg.speakers.clone();
    speakers.sort_unstable();
    speakers.dedup();
    // the reference does not depend on the array; the smallest one is used
    let references: Vec<Measurements> = cfg
        .poses
        .par_iter()
        .map(|&pose| ctx.measure(Reproduction::Reference, speakers[0], pose))
        .collect::<Result<_>>()?;

    let keys: Vec<CellKey> = cfg
        .poses
        .iter()
        .flat_map(|&pose_m| {
            let speakers = &speakers;
            cfg.methods.iter().flat_map(move |&method| {
                speakers.iter().map(move |&n| CellKey {
                    method,
                    speakers: n,
                    pose_m,
                })
            })
        })
        .collect();
    let total = keys.len();
    let done = std::sync::atomic::AtomicUsize::new(0);
    let results: Vec<Result<CellValues>> = keys
        .par_iter()
        .map(|key| {
            let t0 = Instant::now();
            let pose_index = cfg.poses.iter().position(|&p| p == key.pose_m).unwrap();
            let out = ctx
                .measure(Reproduction::Method(key.method), key.speakers, key.pose_m)
                .and_then(|m| compare(&ctx, &references[pose_index], &m, key.method.token(), key.speakers, key.pose_m));
            if opts.progress {
                let k = done.fetch_add(1, std::sync::atomic::Ordering::Relaxed) + 1;
                eprintln!(
                    "[{k}/{total}] {} N={} pose={} m {} ({:.1} s)",
                    key.method,
                    key.speakers,
                    key.pose_m,
                    if out.is_ok() { "ok" } else { "FAILED" },
                    t0.elapsed().as_secs_f64()
                );
            }
            out
        })
        .collect();

    let mut raw: Vec<MetricRow> = Vec::new();
    for (pose, r) in cfg.poses.iter().zip(&references) {
        raw.extend(raw_rows(r, "reference", 0, *pose, &ctx));
    }
    let cells: Vec<CellRecord> = keys
        .iter()
        .zip(&results)
        .map(|(key, r)| CellRecord {
            key: *key,
            error: r.as_ref().err().map(|e| e.to_string()),
        })
        .collect();
    for r in results.iter().flatten() {
        raw.extend(r.raw.iter().cloned());
    }

    let bands = ctx.bands.centers.clone();
    let mut surfaces = Vec::new();
    for &pose in &cfg.poses {
        for &method in &cfg.methods {
            let cell = |n: usize| -> Option<&CellValues> {
                let i = keys
                    .iter()
                    .position(|k| k.method == method && k.speakers == n && k.pose_m == pose)
                    .unwrap();
                results[i].as_ref().ok()
            };
            let nan_row = |len: usize| vec![f64::NAN; len];
            let mut banded = |metric: SurfaceMetric, get: &dyn Fn(&CellValues) -> Option<Vec<f64>>| -> Result<()> {
                let values = speakers
                    .iter()
                    .map(|&n| cell(n).and_then(get).unwrap_or_else(|| nan_row(bands.len())))
                    .collect();
                surfaces.push(ErrorSurface::new(metric, method, pose, speakers.clone(), bands.clone(), values)?);
                Ok(())
            };
            if cfg.metrics.contains(&MetricKind::Beam) {
                banded(SurfaceMetric::Beam, &|c| c.beam.clone())?;
                banded(SurfaceMetric::BeamLiteral, &|c| c.beam_literal.clone())?;
            }
            if cfg.metrics.contains(&MetricKind::Snr) {
                for (i, &(kind, _)) in ctx.algorithms.iter().enumerate() {
                    banded(SurfaceMetric::SnrError(kind), &|c| c.snr.get(i).cloned())?;
                }
            }
            let mut scalar = |metric: SurfaceMetric, get: &dyn Fn(&CellValues) -> Option<f64>| -> Result<()> {
                let values = speakers
                    .iter()
                    .map(|&n| vec![cell(n).and_then(get).unwrap_or(f64::NAN)])
                    .collect();
                surfaces.push(ErrorSurface::new(metric, method, pose, speakers.clone(), vec![0.0], values)?);
                Ok(())
            };
            if cfg.metrics.contains(&MetricKind::Ple) {
                scalar(SurfaceMetric::Ple, &|c| c.ple)?;
                scalar(SurfaceMetric::PleEnvelope, &|c| c.ple_envelope)?;
            }
            if cfg.metrics.contains(&MetricKind::Spectral) {
                scalar(SurfaceMetric::Spectral, &|c| c.spectral)?;
            }
        }
    }
    if opts.progress {
        eprintln!("sweep finished in {:.1} s", started.elapsed().as_secs_f64());
    }
    Ok(SweepResult {
        config: cfg.clone(),
        config_hash: cfg.hash()?,
        hrir_source,
        noise_layout,
        speakers,
        bands,
        surfaces,
        raw,
        cells,
    })
}
