//! Band SNR improvement over a schedule of nominal input SNRs, and the
//! RMS error between reference and tested improvements.

use serde::{Deserialize, Serialize};

use super::rms_finite;
use crate::binsim::SceneStems;
use crate::dsp::BandGrid;
use crate::error::{Error, Result};
use crate::haalgo::{shadow_filter, Algorithm};

/// Nominal broadband input SNRs, -20 to +20 dB in 5 dB steps.
pub const NOMINAL_SNRS: [f64; 9] = [-20.0, -15.0, -10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrSweep {
    pub snrs: Vec<f64>,
    pub bands: Vec<f64>,
    /// `[snr][band]` improvement in dB; NaN where a band was silent.
    pub delta_db: Vec<Vec<f64>>,
}

impl SnrSweep {
    /// Improvement averaged over the input SNRs, per band.
    pub fn mean_over_snrs(&self) -> Vec<f64> {
        (0..self.bands.len())
            .map(|b| {
                let v: Vec<f64> = self.delta_db.iter().map(|r| r[b]).filter(|v| v.is_finite()).collect();
                if v.is_empty() {
                    f64::NAN
                } else {
                    v.iter().sum::<f64>() / v.len() as f64
                }
            })
            .collect()
    }

    pub fn row(&self, snr: f64) -> Option<&[f64]> {
        self.snrs.iter().position(|&s| s == snr).map(|i| self.delta_db[i].as_slice())
    }
}

fn band_snr(target: &[f64], noise: &[f64], bands: &BandGrid, fs: f64) -> Vec<f64> {
    let pt = bands.band_powers(target, fs);
    let pn = bands.band_powers(noise, fs);
    pt.iter()
        .zip(&pn)
        .map(|(&t, &n)| if t > 0.0 && n > 0.0 { 10.0 * (t / n).log10() } else { f64::NAN })
        .collect()
}

/// Runs `alg` by shadow filtering at every SNR in `snrs`. `channels` picks
/// the algorithm inputs out of the stems. The improvement compares output
/// channel 0 with input channel 0.
pub fn snr_improvement(
    alg: &dyn Algorithm,
    stems: &SceneStems,
    channels: &[usize],
    bands: &BandGrid,
    snrs: &[f64],
) -> Result<SnrSweep> {
    let fs = stems.target.sample_rate as f64;
    let mut delta_db = Vec::with_capacity(snrs.len());
    for &snr in snrs {
        let mix = stems.mix(snr)?.select(channels);
        let out = shadow_filter(alg, &mix)?;
        let ri = band_snr(mix.target.channel(0), mix.noise.channel(0), bands, fs);
        let ro = band_snr(out.target.channel(0), out.noise.channel(0), bands, fs);
        delta_db.push(ro.iter().zip(&ri).map(|(o, i)| o - i).collect());
    }
    Ok(SnrSweep {
        snrs: snrs.to_vec(),
        bands: bands.centers.clone(),
        delta_db,
    })
}

/// Per-band RMS over input SNRs of the improvement difference. Bands that
/// were silent at some SNR are averaged over the remaining ones.
pub fn snr_error(reference: &SnrSweep, test: &SnrSweep) -> Result<Vec<f64>> {
    if reference.snrs != test.snrs || reference.bands != test.bands {
        return Err(Error::GridMismatch("SNR sweeps differ in SNRs or bands".into()));
    }
    Ok((0..reference.bands.len())
        .map(|b| {
            rms_finite(reference.delta_db.iter().zip(&test.delta_db).map(|(r, t)| r[b] - t[b])).unwrap_or(f64::NAN)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::Spectrogram;
    use crate::dsp::Stft;
    use crate::haalgo::testutil::{diffuse_stems, indices};
    use crate::haalgo::{AlgorithmKind, Plan};
    use crate::hrir::ChannelSelection;
    use proptest::prelude::*;

    fn sweep(v: Vec<Vec<f64>>) -> SnrSweep {
        SnrSweep {
            snrs: NOMINAL_SNRS.to_vec(),
            bands: BandGrid::third_octave().centers,
            delta_db: v,
        }
    }

    #[test]
    fn constant_offset_gives_that_error() {
        let a = sweep(vec![vec![3.0; 20]; 9]);
        let b = sweep(vec![vec![4.0; 20]; 9]);
        assert!(snr_error(&a, &b).unwrap().iter().all(|&e| (e - 1.0).abs() < 1e-12));
        assert!(snr_error(&a, &a).unwrap().iter().all(|&e| e == 0.0));
    }

    #[test]
    fn mismatched_sweeps_are_rejected() {
        let a = sweep(vec![vec![0.0; 20]; 9]);
        let mut b = a.clone();
        b.snrs[0] = -25.0;
        assert!(matches!(snr_error(&a, &b), Err(Error::GridMismatch(_))));
    }

    struct Passthrough(Stft);

    impl Algorithm for Passthrough {
        fn kind(&self) -> AlgorithmKind {
            AlgorithmKind::ScNr
        }
        fn stft(&self) -> &Stft {
            &self.0
        }
        fn plan(&self, input: &[Spectrogram], _: Option<&[Spectrogram]>) -> Result<Plan> {
            Ok(Plan::Gain {
                gains: vec![vec![1.0; input[0].n_bins()]; input[0].n_frames()],
                refs: vec![0],
            })
        }
    }

    /// A fixed filter: linear and time-invariant.
    struct Tilt(Stft);

    impl Algorithm for Tilt {
        fn kind(&self) -> AlgorithmKind {
            AlgorithmKind::ScNr
        }
        fn stft(&self) -> &Stft {
            &self.0
        }
        fn plan(&self, input: &[Spectrogram], _: Option<&[Spectrogram]>) -> Result<Plan> {
            let g: Vec<f64> = (0..input[0].n_bins()).map(|k| 1.0 / (1.0 + k as f64 / 20.0)).collect();
            Ok(Plan::Gain {
                gains: vec![g; input[0].n_frames()],
                refs: vec![0],
            })
        }
    }

    #[test]
    fn passthrough_improves_nothing() {
        let stems = diffuse_stems(0.5);
        let ch = indices(&ChannelSelection::single_channel_nr().roles);
        let s = snr_improvement(&Passthrough(Stft::default()), &stems, &ch, &BandGrid::third_octave(), &NOMINAL_SNRS).unwrap();
        assert_eq!(s.delta_db.len(), 9);
        assert!(s.delta_db.iter().flatten().all(|d| d.abs() < 1e-6));
    }

    #[test]
    fn time_invariant_processing_is_independent_of_input_snr() {
        let stems = diffuse_stems(0.5);
        let ch = indices(&ChannelSelection::single_channel_nr().roles);
        let s = snr_improvement(&Tilt(Stft::default()), &stems, &ch, &BandGrid::third_octave(), &NOMINAL_SNRS).unwrap();
        for b in 0..20 {
            for r in &s.delta_db {
                assert!((r[b] - s.delta_db[0][b]).abs() < 0.05);
            }
        }
    }

    proptest! {
        #[test]
        fn error_axioms(vals in proptest::collection::vec(-10.0f64..20.0, 9 * 20), gap in 0.1f64..5.0, k in 1.1f64..3.0) {
            let x = sweep(vals.chunks(20).map(|c| c.to_vec()).collect());
            let shift = |s: f64| sweep(x.delta_db.iter().map(|r| r.iter().map(|v| v + s).collect()).collect());
            prop_assert!(snr_error(&x, &x).unwrap().iter().all(|&e| e == 0.0));
            let e1 = snr_error(&x, &shift(gap)).unwrap();
            let e2 = snr_error(&x, &shift(gap * k)).unwrap();
            for (a, c) in e1.iter().zip(&e2) {
                prop_assert!(*a >= 0.0 && c >= a);
            }
        }
    }
}
