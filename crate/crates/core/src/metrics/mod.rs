//! Performance measures and the error functions comparing a reproduction
//! method against the free-field reference.

mod beam;
mod localize;
mod snr;
mod spectral;

pub use beam::{beam_error, beam_pattern, BeamErrorForm, BeamPattern, BEAM_FLOOR_DB};
pub use localize::{ple, Localizer, LocalizationEstimate, LocalizerConfig, PleResult};
pub use snr::{snr_error, snr_improvement, SnrSweep, NOMINAL_SNRS};
pub use spectral::{excitation_pattern, spectral_distance, SpectralDistance};

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::audio::AudioBuffer;
use crate::dsp::BandGrid;
use crate::error::Result;

/// Version of the long-format CSV layout written by [`write_rows`].
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// Third-octave band powers of every channel, `[channel][band]`.
pub fn third_octave_analyze(buffer: &AudioBuffer, bands: &BandGrid) -> Vec<Vec<f64>> {
    let fs = buffer.sample_rate as f64;
    buffer.samples.iter().map(|c| bands.band_powers(c, fs)).collect()
}

/// One value of a metric in long format. `axis` names what `key` indexes
/// (a band center, an azimuth, an input SNR, or nothing for scalars);
/// `band_hz` is set when the row is also resolved by band.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub metric: String,
    pub algorithm: String,
    pub method: String,
    pub speakers: usize,
    pub pose_m: f64,
    pub axis: String,
    pub key: f64,
    pub band_hz: Option<f64>,
    pub value: Option<f64>,
}

/// Writes rows as CSV preceded by a `# schema` comment line.
pub fn write_rows(path: &Path, rows: &[MetricRow]) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# schema {CSV_SCHEMA_VERSION}")?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Root mean square of the finite entries; `None` if there are none.
pub(crate) fn rms_finite(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (mut s, mut n) = (0.0, 0usize);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        s += v * v;
        n += 1;
    }
    (n > 0).then(|| (s / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stimulus::white_noise;
    use std::f64::consts::PI;

    #[test]
    fn sine_lands_in_its_band() {
        let fs = 48_000.0;
        let x: Vec<f64> = (0..48_000).map(|n| (2.0 * PI * 1000.0 * n as f64 / fs).sin()).collect();
        let g = BandGrid::third_octave();
        let p = third_octave_analyze(&AudioBuffer::mono(48_000, x), &g);
        let total: f64 = p[0].iter().sum();
        assert!(p[0][10] / total > 0.95);
        assert!((total - 0.5).abs() < 0.5 * 0.047, "Parseval: {total}");
    }

    #[test]
    fn white_noise_rises_one_db_per_band() {
        let g = BandGrid::third_octave();
        let p = third_octave_analyze(&AudioBuffer::mono(48_000, white_noise(480_000, 9)), &g);
        // analytic oracle: band power proportional to bandwidth
        for b in 0..g.len() {
            let expect = (g.upper[b] - g.lower[b]) / 24_000.0;
            let err = 10.0 * (p[0][b] / expect).log10();
            assert!(err.abs() < 0.5, "band {b}: {err} dB");
        }
    }

    #[test]
    fn covered_power_matches_total() {
        let g = BandGrid::third_octave();
        let x = white_noise(96_000, 3);
        // keep only the content inside the grid by comparing with the
        // analytic in-range fraction of white noise
        let p: f64 = third_octave_analyze(&AudioBuffer::mono(48_000, x.clone()), &g)[0].iter().sum();
        let fraction = (g.upper[g.len() - 1] - g.lower[0]) / 24_000.0;
        let total = crate::dsp::power(&x) * fraction;
        assert!((10.0 * (p / total).log10()).abs() < 0.2);
    }

    #[test]
    fn silence_gives_zero() {
        let g = BandGrid::third_octave();
        let p = third_octave_analyze(&AudioBuffer::silent(48_000, 2, 1000), &g);
        assert!(p.iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn rows_are_written_with_schema_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let row = MetricRow {
            metric: "snr_error".into(),
            algorithm: "adm".into(),
            method: "nsp".into(),
            speakers: 8,
            pose_m: 0.1,
            axis: "band_hz".into(),
            key: 1000.0,
            band_hz: None,
            value: None,
        };
        write_rows(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("# schema 1"));
        assert_eq!(lines.next(), Some("metric,algorithm,method,speakers,pose_m,axis,key,band_hz,value"));
        assert_eq!(lines.next(), Some("snr_error,adm,nsp,8,0.1,band_hz,1000.0,,"));
    }
}
