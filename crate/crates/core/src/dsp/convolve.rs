//! Multi-input multi-output FIR convolution by FFT overlap-save.

use num_complex::Complex64;

use super::fft::{forward_plan, inverse_plan, rfft};

/// Default hop of the overlap-save engine, in samples.
pub const DEFAULT_BLOCK: usize = 4096;

/// Convolves a set of input channels with an `outputs x inputs` matrix of
/// impulse responses. Output `o` is `sum_i inputs[i] * irs[o][i]`, with the
/// inputs accumulated in the frequency domain in index order.
pub struct Convolver {
    block: usize,
    fft_len: usize,
    n_inputs: usize,
    // spectra[o][i] is None for all-zero responses
    spectra: Vec<Vec<Option<Vec<Complex64>>>>,
}

impl Convolver {
    pub fn new(irs: &[Vec<Vec<f64>>]) -> Self {
        Self::with_block(irs, DEFAULT_BLOCK)
    }

    pub fn with_block(irs: &[Vec<Vec<f64>>], block: usize) -> Self {
        let n_inputs = irs.first().map_or(0, |r| r.len());
        assert!(irs.iter().all(|r| r.len() == n_inputs), "ragged IR matrix");
        let ir_len = irs
            .iter()
            .flat_map(|r| r.iter().map(|h| h.len()))
            .max()
            .unwrap_or(1)
            .max(1);
        let fft_len = (block + ir_len - 1).next_power_of_two();
        let spectra = irs
            .iter()
            .map(|row| {
                row.iter()
                    .map(|h| (h.iter().any(|&v| v != 0.0)).then(|| rfft(h, fft_len)))
                    .collect()
            })
            .collect();
        Self {
            block,
            fft_len,
            n_inputs,
            spectra,
        }
    }

    pub fn outputs(&self) -> usize {
        self.spectra.len()
    }

    pub fn inputs(&self) -> usize {
        self.n_inputs
    }

    /// Runs the convolution and returns `out_len` samples per output.
    pub fn process(&self, inputs: &[&[f64]], out_len: usize) -> Vec<Vec<f64>> {
        assert_eq!(inputs.len(), self.n_inputs, "input count");
        let n = self.fft_len;
        let b = self.block;
        let overlap = n - b;
        let fwd = forward_plan(n);
        let inv = inverse_plan(n);
        let bins = n / 2 + 1;
        let mut outputs = vec![vec![0.0; out_len]; self.outputs()];
        let active: Vec<bool> = (0..self.n_inputs)
            .map(|i| self.spectra.iter().any(|row| row[i].is_some()) && inputs[i].iter().any(|&v| v != 0.0))
            .collect();
        let mut frame = vec![0.0; n];
        let mut in_spec = vec![vec![Complex64::new(0.0, 0.0); bins]; self.n_inputs];
        let mut acc = vec![Complex64::new(0.0, 0.0); bins];
        let mut time = vec![0.0; n];
        let mut scratch_fwd = fwd.make_scratch_vec();
        let mut scratch_inv = inv.make_scratch_vec();
        let scale = 1.0 / n as f64;
        let mut start = 0usize;
        while start < out_len {
            for (i, x) in inputs.iter().enumerate() {
                if !active[i] {
                    continue;
                }
                for (j, v) in frame.iter_mut().enumerate() {
                    let idx = start as i64 - overlap as i64 + j as i64;
                    *v = if idx >= 0 && (idx as usize) < x.len() { x[idx as usize] } else { 0.0 };
                }
                fwd.process_with_scratch(&mut frame, &mut in_spec[i], &mut scratch_fwd)
                    .expect("fft length is consistent");
            }
            let take = b.min(out_len - start);
            for (o, row) in self.spectra.iter().enumerate() {
                acc.iter_mut().for_each(|v| *v = Complex64::new(0.0, 0.0));
                let mut any = false;
                for (i, h) in row.iter().enumerate() {
                    if let (Some(h), true) = (h, active[i]) {
                        any = true;
                        for ((a, x), hv) in acc.iter_mut().zip(&in_spec[i]).zip(h) {
                            *a += x * hv;
                        }
                    }
                }
                if !any {
                    continue;
                }
                acc[0].im = 0.0;
                acc[bins - 1].im = 0.0;
                inv.process_with_scratch(&mut acc, &mut time, &mut scratch_inv)
                    .expect("fft length is consistent");
                for k in 0..take {
                    outputs[o][start + k] = time[overlap + k] * scale;
                }
            }
            start += b;
        }
        outputs
    }
}

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn convolve_full(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let len = x.len() + h.len() - 1;
    let conv = Convolver::new(&[vec![h.to_vec()]]);
    conv.process(&[x], len).pop().unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn direct(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
        let mut y = vec![0.0; len];
        for (n, out) in y.iter_mut().enumerate() {
            for (k, &hk) in h.iter().enumerate() {
                if n >= k && n - k < x.len() {
                    *out += hk * x[n - k];
                }
            }
        }
        y
    }

    #[test]
    fn matches_direct_convolution() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<f64> = (0..3000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let y = Convolver::with_block(&[vec![h.clone()]], 256).process(&[&x], 3299).pop().unwrap();
        let d = direct(&x, &h, 3299);
        for n in 0..3299 {
            assert!((y[n] - d[n]).abs() < 1e-10);
        }
    }

    #[test]
    fn mimo_sums_inputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let xs: Vec<Vec<f64>> = (0..3).map(|_| (0..1000).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let hs: Vec<Vec<Vec<f64>>> = (0..2)
            .map(|_| (0..3).map(|_| (0..50).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect())
            .collect();
        let refs: Vec<&[f64]> = xs.iter().map(|v| v.as_slice()).collect();
        let y = Convolver::with_block(&hs, 128).process(&refs, 1000);
        for o in 0..2 {
            let mut d = vec![0.0; 1000];
            for i in 0..3 {
                for (a, b) in d.iter_mut().zip(direct(&xs[i], &hs[o][i], 1000)) {
                    *a += b;
                }
            }
            for n in 0..1000 {
                assert!((y[o][n] - d[n]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn silent_input_gives_silence() {
        let y = Convolver::new(&[vec![vec![1.0, 0.5]]]).process(&[&[0.0; 100]], 100);
        assert!(y[0].iter().all(|&v| v == 0.0));
    }
}
