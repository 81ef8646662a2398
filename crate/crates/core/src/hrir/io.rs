//! On-disk HRIR sets: `manifest.toml` plus one multichannel 32-bit float
//! WAV file per direction, named `az_XXXX.wav` with the azimuth in tenths
//! of a degree (`az_0050.wav` is 5°).

use std::path::{Path, PathBuf};

use hound::{SampleFormat, WavSpec};
use serde::{Deserialize, Serialize};

use super::{ChannelRole, HrirSet, HrirSetInfo};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.toml";
const FORMAT_NAME: &str = "ha-repro-hrir";
const FORMAT_VERSION: u32 = 1;
const NAMING: &str = "az_{tenths:04}.wav";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Manifest {
    format: String,
    version: u32,
    sample_rate: u32,
    distance_m: f64,
    azimuth_start_deg: f64,
    azimuth_step_deg: f64,
    directions: usize,
    ir_length: usize,
    channels: Vec<ChannelRole>,
    naming: String,
    head_radius_m: f64,
    mic_spacing_m: f64,
}

fn file_name(azimuth: f64) -> String {
    format!("az_{:04}.wav", (azimuth * 10.0).round() as i64)
}

fn load_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::HrirLoad {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn save_hrir_set(set: &HrirSet, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let info = set.info();
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        sample_rate: info.sample_rate,
        distance_m: info.distance,
        azimuth_start_deg: info.azimuth_start,
        azimuth_step_deg: info.azimuth_step,
        directions: set.directions().len(),
        ir_length: set.ir_len(),
        channels: info.roles.clone(),
        naming: NAMING.into(),
        head_radius_m: info.head_radius,
        mic_spacing_m: info.mic_spacing,
    };
    let text = toml::to_string_pretty(&manifest).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(dir.join(MANIFEST_FILE), text)?;
    let spec = WavSpec {
        channels: info.roles.len() as u16,
        sample_rate: info.sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    for (d, &az) in set.directions().iter().enumerate() {
        let mut w = hound::WavWriter::create(dir.join(file_name(az)), spec)?;
        for n in 0..set.ir_len() {
            for ch in 0..info.roles.len() {
                w.write_sample(set.ir(d, ch)[n] as f32)?;
            }
        }
        w.finalize()?;
    }
    Ok(())
}

pub fn load_hrir_set(dir: &Path) -> Result<HrirSet> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| load_err(&manifest_path, e.to_string()))?;
    let m: Manifest = toml::from_str(&text).map_err(|e| load_err(&manifest_path, e.to_string()))?;
    if m.format != FORMAT_NAME || m.version != FORMAT_VERSION {
        return Err(load_err(
            &manifest_path,
            format!("unsupported format {} v{}", m.format, m.version),
        ));
    }
    if m.naming != NAMING {
        return Err(load_err(&manifest_path, format!("unsupported naming scheme {}", m.naming)));
    }
    if m.azimuth_step_deg <= 0.0 || (m.directions as f64 * m.azimuth_step_deg - 360.0).abs() > 1e-6 {
        return Err(load_err(
            &manifest_path,
            format!("{} directions at {}° do not cover the circle", m.directions, m.azimuth_step_deg),
        ));
    }
    let n_ch = m.channels.len();
    let mut irs = Vec::with_capacity(m.directions);
    for d in 0..m.directions {
        let az = crate::geometry::wrap_360(m.azimuth_start_deg + d as f64 * m.azimuth_step_deg);
        let path: PathBuf = dir.join(file_name(az));
        if !path.exists() {
            return Err(load_err(&path, format!("missing direction {az}°")));
        }
        let mut r = hound::WavReader::open(&path).map_err(|e| load_err(&path, e.to_string()))?;
        let spec = r.spec();
        if spec.sample_rate != m.sample_rate {
            return Err(load_err(
                &path,
                format!(
                    "sample rate {} Hz at {az}° differs from manifest {} Hz",
                    spec.sample_rate, m.sample_rate
                ),
            ));
        }
        if spec.channels as usize != n_ch {
            return Err(load_err(
                &path,
                format!("{} channels at {az}°, manifest lists {n_ch}", spec.channels),
            ));
        }
        if spec.sample_format != SampleFormat::Float || spec.bits_per_sample != 32 {
            return Err(load_err(&path, format!("payload at {az}° is not 32-bit float")));
        }
        let data: Vec<f32> = r
            .samples::<f32>()
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| load_err(&path, e.to_string()))?;
        if data.len() < m.ir_length * n_ch {
            return Err(load_err(
                &path,
                format!(
                    "truncated IR at {az}°: {} samples per channel, expected {}",
                    data.len() / n_ch,
                    m.ir_length
                ),
            ));
        }
        let mut row = vec![Vec::with_capacity(m.ir_length); n_ch];
        for frame in data.chunks_exact(n_ch).take(m.ir_length) {
            for (c, &v) in frame.iter().enumerate() {
                row[c].push(v as f64);
            }
        }
        irs.push(row);
    }
    let info = HrirSetInfo {
        sample_rate: m.sample_rate,
        distance: m.distance_m,
        azimuth_start: m.azimuth_start_deg,
        azimuth_step: m.azimuth_step_deg,
        roles: m.channels,
        head_radius: m.head_radius_m,
        mic_spacing: m.mic_spacing_m,
    };
    HrirSet::new(info, irs).map_err(|e| load_err(dir, e.to_string()))
}
