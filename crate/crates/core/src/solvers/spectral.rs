//! Shared real-FFT plans and Fourier-space helpers.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use realfft::num_complex::Complex64;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};

pub struct FftPlans {
    pub n: usize,
    r2c: Arc<dyn RealToComplex<f64>>,
    c2r: Arc<dyn ComplexToReal<f64>>,
}

/// Plans are cached per size; they are immutable and shareable across threads.
pub fn fft_plans(n: usize) -> Arc<FftPlans> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<FftPlans>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("fft plan cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| {
            let mut planner = RealFftPlanner::<f64>::new();
            Arc::new(FftPlans {
                n,
                r2c: planner.plan_fft_forward(n),
                c2r: planner.plan_fft_inverse(n),
            })
        })
        .clone()
}

impl FftPlans {
    /// Number of non-redundant coefficients, `n/2 + 1`.
    pub fn spectrum_len(&self) -> usize {
        self.n / 2 + 1
    }

    /// Unnormalised forward transform `X[k] = sum_j x[j] exp(-2 pi i j k / n)`.
    pub fn forward(&self, input: &[f64], out: &mut [Complex64]) {
        let mut buf = input.to_vec();
        self.r2c
            .process(&mut buf, out)
            .expect("forward fft buffer sizes are fixed by construction");
    }

    /// Normalised inverse transform. The imaginary parts of the DC and
    /// Nyquist coefficients are ignored.
    pub fn inverse(&self, spectrum: &[Complex64], out: &mut [f64]) {
        let mut buf = spectrum.to_vec();
        buf[0].im = 0.0;
        let last = buf.len() - 1;
        if self.n.is_multiple_of(2) {
            buf[last].im = 0.0;
        }
        self.c2r
            .process(&mut buf, out)
            .expect("inverse fft buffer sizes are fixed by construction");
        let scale = 1.0 / self.n as f64;
        out.iter_mut().for_each(|v| *v *= scale);
    }
}

/// Angular wavenumbers `2 pi k / X` for `k = 0..=n/2`.
pub fn wavenumbers(n: usize, domain_length: f64) -> Vec<f64> {
    (0..=n / 2).map(|k| 2.0 * PI * k as f64 / domain_length).collect()
}

/// 2/3-rule mask: keeps `k < n/3`, zeroes the upper third and the Nyquist mode.
pub fn dealias_mask(n: usize) -> Vec<f64> {
    let cutoff = n as f64 / 3.0;
    (0..=n / 2)
        .map(|k| if (k as f64) < cutoff { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_identity() {
        let plans = fft_plans(16);
        let x: Vec<f64> = (0..16).map(|i| (i as f64 * 0.7).sin() + 0.3).collect();
        let mut spec = vec![Complex64::new(0.0, 0.0); plans.spectrum_len()];
        plans.forward(&x, &mut spec);
        let mut back = vec![0.0; 16];
        plans.inverse(&spec, &mut back);
        for (a, b) in x.iter().zip(&back) {
            assert!((a - b).abs() < 1e-13);
        }
    }

    #[test]
    fn mask_keeps_lower_two_thirds() {
        let m = dealias_mask(12);
        assert_eq!(m, vec![1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
    }
}
