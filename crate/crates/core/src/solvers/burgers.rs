//! Viscous Burgers `u_t + u u_x = (nu/pi) u_xx` by finite differences.
//!
//! Godunov (upwind) flux for the convective term, second-order central
//! differences for diffusion and Heun's RK2 in time.

use super::{check_blowup, PdeSpec, State};
use crate::Result;

/// Largest |u| the CFL rule is sized for.
const CFL_SPEED: f64 = 5.0;
const CFL_SAFETY: f64 = 0.5;

/// Internal steps per macro step so that the explicit scheme stays stable
/// for |u| up to [`CFL_SPEED`].
pub fn cfl_substeps(viscosity: f64, macro_dt: f64, spacing: f64) -> usize {
    let nu_eff = viscosity / std::f64::consts::PI;
    let dt_adv = spacing / CFL_SPEED;
    let dt_diff = if nu_eff > 0.0 { spacing * spacing / (2.0 * nu_eff) } else { f64::INFINITY };
    let dt_max = CFL_SAFETY * dt_adv.min(dt_diff);
    ((macro_dt / dt_max).ceil() as usize).max(1)
}

#[inline]
fn godunov_flux(left: f64, right: f64) -> f64 {
    if left <= right {
        if left > 0.0 {
            0.5 * left * left
        } else if right < 0.0 {
            0.5 * right * right
        } else {
            0.0
        }
    } else {
        // shock: max of the convex flux over [right, left]
        0.5 * (left * left).max(right * right)
    }
}

fn rhs(u: &[f64], spacing: f64, nu_eff: f64, out: &mut [f64]) {
    let n = u.len();
    let inv_dx = 1.0 / spacing;
    let diff = nu_eff * inv_dx * inv_dx;
    for j in 0..n {
        let jm = if j == 0 { n - 1 } else { j - 1 };
        let jp = if j + 1 == n { 0 } else { j + 1 };
        let flux_right = godunov_flux(u[j], u[jp]);
        let flux_left = godunov_flux(u[jm], u[j]);
        out[j] = -(flux_right - flux_left) * inv_dx + diff * (u[jp] - 2.0 * u[j] + u[jm]);
    }
}

pub(crate) struct BurgersKernel {
    spacing: f64,
    nu_eff: f64,
    dt: f64,
    substeps: usize,
    cap: f64,
}

impl BurgersKernel {
    pub(crate) fn new(spec: &PdeSpec) -> Self {
        let substeps = spec.effective_substeps();
        BurgersKernel {
            spacing: spec.grid.spacing(),
            nu_eff: spec.viscosity / std::f64::consts::PI,
            dt: spec.macro_dt() / substeps as f64,
            substeps,
            cap: spec.solver.blowup_cap,
        }
    }

    pub(crate) fn step(&self, state: &State) -> Result<State> {
        let n = state.values.len();
        let mut u = state.values.clone();
        let mut k1 = vec![0.0; n];
        let mut k2 = vec![0.0; n];
        let mut stage = vec![0.0; n];
        for _ in 0..self.substeps {
            rhs(&u, self.spacing, self.nu_eff, &mut k1);
            for j in 0..n {
                stage[j] = u[j] + self.dt * k1[j];
            }
            rhs(&stage, self.spacing, self.nu_eff, &mut k2);
            for j in 0..n {
                u[j] += 0.5 * self.dt * (k1[j] + k2[j]);
            }
        }
        check_blowup(&u, self.cap)?;
        Ok(State { values: u, grid: state.grid })
    }
}
