//! Beam patterns measured through the full rendering chain, and the beam
//! error between a tested reproduction and the free-field pattern.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binsim::Renderer;
use crate::dsp::BandGrid;
use crate::error::{Error, Result};
use crate::geometry::Position2D;
use crate::haalgo::{process, Algorithm};

/// Gains below this are reported as this value.
pub const BEAM_FLOOR_DB: f64 = -35.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamPattern {
    pub azimuths: Vec<f64>,
    pub bands: Vec<f64>,
    /// `[azimuth][band]`, floored at [`BEAM_FLOOR_DB`].
    pub gains_db: Vec<Vec<f64>>,
}

impl BeamPattern {
    pub fn new(azimuths: Vec<f64>, bands: Vec<f64>, gains_db: Vec<Vec<f64>>) -> Result<Self> {
        if gains_db.len() != azimuths.len() || gains_db.iter().any(|r| r.len() != bands.len()) {
            return Err(Error::GridMismatch("gain matrix does not match azimuths x bands".into()));
        }
        let gains_db = gains_db
            .into_iter()
            .map(|r| r.into_iter().map(|g| if g.is_nan() { g } else { g.max(BEAM_FLOOR_DB) }).collect())
            .collect();
        Ok(Self {
            azimuths,
            bands,
            gains_db,
        })
    }
}

/// How the per-azimuth squared gain differences are aggregated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BeamErrorForm {
    /// `sqrt(sum)` over azimuths.
    Literal,
    /// `sqrt(mean)` over azimuths, a true RMS.
    #[default]
    Mean,
}

/// Measures the pattern of `alg` for a probe rendered from each azimuth at
/// `distance`. The gain is the long-term band power of output channel 0
/// over that of input channel 0, ignoring the first `settle` samples while
/// the algorithm's smoothing converges.
pub fn beam_pattern(
    alg: &dyn Algorithm,
    renderer: &Renderer,
    probe: &[f64],
    azimuths: &[f64],
    distance: f64,
    bands: &BandGrid,
    settle: usize,
) -> Result<BeamPattern> {
    if settle >= probe.len() {
        return Err(Error::InvalidParameter("probe shorter than settling time".into()));
    }
    let fs = renderer.sample_rate() as f64;
    let rows: Vec<Vec<f64>> = azimuths
        .par_iter()
        .map(|&az| -> Result<Vec<f64>> {
            let x = renderer.render(probe, &Position2D::from_polar(az, distance))?;
            let y = process(alg, &x, None)?;
            let pin = bands.band_powers(&x.channel(0)[settle..], fs);
            let pout = bands.band_powers(&y.channel(0)[settle..], fs);
            Ok(pin
                .iter()
                .zip(&pout)
                .map(|(&i, &o)| if i > 0.0 { 10.0 * (o / i).log10() } else { f64::NAN })
                .collect())
        })
        .collect::<Result<_>>()?;
    BeamPattern::new(azimuths.to_vec(), bands.centers.clone(), rows)
}

/// Per-band beam error between two patterns on the same grid.
pub fn beam_error(reference: &BeamPattern, test: &BeamPattern, form: BeamErrorForm) -> Result<Vec<f64>> {
    if reference.azimuths != test.azimuths || reference.bands != test.bands {
        return Err(Error::GridMismatch("beam patterns differ in azimuths or bands".into()));
    }
    let n_az = reference.azimuths.len() as f64;
    Ok((0..reference.bands.len())
        .map(|b| {
            let sum: f64 = reference
                .gains_db
                .iter()
                .zip(&test.gains_db)
                .map(|(r, t)| (r[b] - t[b]).powi(2))
                .sum();
            match form {
                BeamErrorForm::Literal => sum.sqrt(),
                BeamErrorForm::Mean => (sum / n_az).sqrt(),
            }
        })
        .collect())
}
