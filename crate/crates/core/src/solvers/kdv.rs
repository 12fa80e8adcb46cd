//! KdV `u_t + u u_x + u_xxx = 0` by the pseudospectral method of lines,
//! integrated with the adaptive Dormand–Prince 5(4) pair.

use std::sync::Arc;

use realfft::num_complex::Complex64;

use super::spectral::{dealias_mask, fft_plans, wavenumbers, FftPlans};
use super::{check_blowup, PdeSpec, State};
use crate::{Result, StapError};

const MAX_INTERNAL_STEPS: usize = 10_000_000;

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

pub(crate) struct KdvKernel {
    plans: Arc<FftPlans>,
    kappa: Vec<f64>,
    mask: Vec<f64>,
    macro_dt: f64,
    max_step: f64,
    rtol: f64,
    atol: f64,
    min_step: f64,
    cap: f64,
}

impl KdvKernel {
    pub(crate) fn new(spec: &PdeSpec) -> Self {
        let n = spec.grid.num_points;
        let mut kappa = wavenumbers(n, spec.grid.domain_length);
        // the Nyquist derivative of a real field is not representable
        kappa[n / 2] = 0.0;
        KdvKernel {
            plans: fft_plans(n),
            kappa,
            mask: dealias_mask(n),
            macro_dt: spec.macro_dt(),
            max_step: spec.macro_dt() / spec.effective_substeps() as f64,
            rtol: spec.solver.rtol,
            atol: spec.solver.atol,
            min_step: spec.solver.min_step,
            cap: spec.solver.blowup_cap,
        }
    }

    pub(crate) fn with_tolerance(mut self, rtol: f64, atol: f64) -> Self {
        self.rtol = rtol;
        self.atol = atol;
        self
    }

    fn rhs(&self, u: &[f64], out: &mut [f64]) {
        let m = self.plans.spectrum_len();
        let n = u.len();
        let mut spec = vec![Complex64::new(0.0, 0.0); m];
        self.plans.forward(u, &mut spec);
        let filtered: Vec<Complex64> = spec.iter().zip(&self.mask).map(|(c, m)| c * m).collect();
        let mut ud = vec![0.0; n];
        self.plans.inverse(&filtered, &mut ud);
        let sq: Vec<f64> = ud.iter().map(|v| v * v).collect();
        let mut sq_hat = vec![Complex64::new(0.0, 0.0); m];
        self.plans.forward(&sq, &mut sq_hat);
        let mut rhs_hat = vec![Complex64::new(0.0, 0.0); m];
        for k in 1..m {
            let kap = self.kappa[k];
            // -(1/2) d/dx (u^2)  and  -d^3/dx^3 u = i kappa^3 u_hat
            let nonlinear = Complex64::new(0.0, -0.5 * kap) * sq_hat[k] * self.mask[k];
            let dispersive = Complex64::new(0.0, kap * kap * kap) * spec[k];
            rhs_hat[k] = nonlinear + dispersive;
        }
        self.plans.inverse(&rhs_hat, out);
    }

    pub(crate) fn step(&self, state: &State) -> Result<State> {
        let n = state.values.len();
        let mut y = state.values.clone();
        let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 7];
        let mut stage = vec![0.0; n];
        let mut y_new = vec![0.0; n];
        let mut t = 0.0;
        let mut h = self.max_step;
        self.rhs(&y, &mut k[0]);
        let mut steps = 0usize;
        while t < self.macro_dt {
            steps += 1;
            if steps > MAX_INTERNAL_STEPS {
                return Err(StapError::StepSizeUnderflow { step: h, floor: self.min_step });
            }
            let remaining = self.macro_dt - t;
            let clipped = h >= remaining;
            let h_try = if clipped { remaining } else { h };
            if !clipped && h_try < self.min_step {
                return Err(StapError::StepSizeUnderflow { step: h_try, floor: self.min_step });
            }
            for s in 1..7 {
                for j in 0..n {
                    let mut acc = 0.0;
                    for (r, a) in A[s].iter().enumerate().take(s) {
                        acc += a * k[r][j];
                    }
                    stage[j] = y[j] + h_try * acc;
                }
                self.rhs(&stage, &mut k[s]);
                if s == 6 {
                    y_new.copy_from_slice(&stage);
                }
            }
            let mut err_sq = 0.0;
            for j in 0..n {
                let mut e = 0.0;
                for (r, w) in E.iter().enumerate() {
                    e += w * k[r][j];
                }
                let scale = self.atol + self.rtol * y[j].abs().max(y_new[j].abs());
                let ratio = h_try * e / scale;
                err_sq += ratio * ratio;
            }
            let err = (err_sq / n as f64).sqrt();
            if !err.is_finite() {
                return Err(StapError::NumericalBlowup("non-finite KdV error estimate".into()));
            }
            if err <= 1.0 {
                t = if clipped { self.macro_dt } else { t + h_try };
                std::mem::swap(&mut y, &mut y_new);
                // first-same-as-last
                k.swap(0, 6);
                let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
                h = (h_try * factor).min(self.max_step);
            } else {
                let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
                h = h_try * factor;
            }
        }
        check_blowup(&y, self.cap)?;
        Ok(State { values: y, grid: state.grid })
    }
}
