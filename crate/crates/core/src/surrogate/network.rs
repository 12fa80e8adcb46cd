//! Forward and reverse passes of the spectral operator.
//!
//! Activations are stored channel-major (`c * n + x`). The spectral
//! convolution only touches the lowest `K` modes, so it is evaluated against a
//! precomputed truncated Fourier basis instead of a full FFT; the reverse pass
//! is then the transpose of the same basis.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use super::{Architecture, Layout};

/// `cos(kappa_k x_j)` and `sin(kappa_k x_j)` for `k < K`, `j < N`.
#[derive(Debug)]
pub(crate) struct FourierBasis {
    pub n: usize,
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

pub(crate) fn fourier_basis(n: usize, modes: usize) -> Arc<FourierBasis> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize), Arc<FourierBasis>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("basis cache poisoned");
    guard
        .entry((n, modes))
        .or_insert_with(|| {
            let mut cos = Vec::with_capacity(n * modes);
            let mut sin = Vec::with_capacity(n * modes);
            for k in 0..modes {
                for j in 0..n {
                    // reduce k*j mod n first so large products stay exact
                    let phase = 2.0 * PI * ((k * j) % n) as f64 / n as f64;
                    cos.push(phase.cos());
                    sin.push(phase.sin());
                }
            }
            Arc::new(FourierBasis { n, cos, sin })
        })
        .clone()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;
const GELU_CUBIC: f64 = 0.044_715;

/// `tanh` through `expm1`, which is about twice as fast as the libm call.
#[inline]
fn tanh(x: f64) -> f64 {
    if x.abs() > 20.0 {
        return x.signum();
    }
    let e = (2.0 * x).exp_m1();
    e / (e + 2.0)
}

#[inline]
pub(crate) fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + tanh(SQRT_2_OVER_PI * (z + GELU_CUBIC * z * z * z)))
}

#[inline]
pub(crate) fn gelu_grad(z: f64) -> f64 {
    let t = tanh(SQRT_2_OVER_PI * (z + GELU_CUBIC * z * z * z));
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_CUBIC * z * z)
}

/// Intermediate values kept for the reverse pass.
pub(crate) struct Tape {
    /// normalised input
    pub input: Vec<f64>,
    /// `hidden[l]` feeds layer `l`; the last entry feeds the projection
    pub hidden: Vec<Vec<f64>>,
    /// pre-activations per layer
    pub pre: Vec<Vec<f64>>,
    /// spectra of `hidden[l]`, `[c][k]` real and imaginary parts
    pub spec_re: Vec<Vec<f64>>,
    pub spec_im: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

pub(crate) struct Network<'a> {
    pub arch: &'a Architecture,
    pub layout: &'a Layout,
    pub basis: &'a FourierBasis,
    pub params: &'a [f64],
}

impl Network<'_> {
    /// Maps a normalised state to a normalised difference.
    pub fn forward(&self, input: &[f64], keep_tape: bool) -> (Vec<f64>, Option<Tape>) {
        let n = self.basis.n;
        let c = self.arch.channels;
        let kk = self.arch.fourier_modes;
        let p = self.params;
        let lay = self.layout;

        let mut h = vec![0.0; c * n];
        for ch in 0..c {
            let w = p[lay.lift_w + ch];
            let b = p[lay.lift_b + ch];
            for (dst, a) in h[ch * n..(ch + 1) * n].iter_mut().zip(input) {
                *dst = w * a + b;
            }
        }
        let mut tape = keep_tape.then(|| Tape {
            input: input.to_vec(),
            hidden: Vec::with_capacity(self.arch.num_layers + 1),
            pre: Vec::with_capacity(self.arch.num_layers),
            spec_re: Vec::with_capacity(self.arch.num_layers),
            spec_im: Vec::with_capacity(self.arch.num_layers),
            output: Vec::new(),
        });

        let inv_n = 1.0 / n as f64;
        let mut spec_re = vec![0.0; c * kk];
        let mut spec_im = vec![0.0; c * kk];
        let mut mix_re = vec![0.0; kk];
        let mut mix_im = vec![0.0; kk];
        for off in &lay.layers {
            for ch in 0..c {
                let row = &h[ch * n..(ch + 1) * n];
                for k in 0..kk {
                    spec_re[ch * kk + k] = dot(row, &self.basis.cos[k * n..(k + 1) * n]);
                    spec_im[ch * kk + k] = -dot(row, &self.basis.sin[k * n..(k + 1) * n]);
                }
            }
            let mut z = vec![0.0; c * n];
            for o in 0..c {
                // complex channel mixing per retained mode
                for k in 0..kk {
                    let mut re = 0.0;
                    let mut im = 0.0;
                    for i in 0..c {
                        let idx = off.spectral + 2 * ((k * c + o) * c + i);
                        let (wr, wi) = (p[idx], p[idx + 1]);
                        let (hr, hi) = (spec_re[i * kk + k], spec_im[i * kk + k]);
                        re += wr * hr - wi * hi;
                        im += wr * hi + wi * hr;
                    }
                    mix_re[k] = re;
                    mix_im[k] = im;
                }
                let zo = &mut z[o * n..(o + 1) * n];
                // y = (1/N) (Re Y_0 + 2 sum_{k>0} Re(Y_k e^{i kappa x}))
                for k in 0..kk {
                    let weight = if k == 0 { inv_n } else { 2.0 * inv_n };
                    axpy(weight * mix_re[k], &self.basis.cos[k * n..(k + 1) * n], zo);
                    if k > 0 {
                        axpy(-weight * mix_im[k], &self.basis.sin[k * n..(k + 1) * n], zo);
                    }
                }
                for i in 0..c {
                    axpy(p[off.pointwise + o * c + i], &h[i * n..(i + 1) * n], zo);
                }
                let b = p[off.bias + o];
                zo.iter_mut().for_each(|v| *v += b);
            }
            let next: Vec<f64> = z.iter().map(|&v| gelu(v)).collect();
            if let Some(t) = tape.as_mut() {
                t.hidden.push(std::mem::replace(&mut h, next));
                t.pre.push(z);
                t.spec_re.push(spec_re.clone());
                t.spec_im.push(spec_im.clone());
            } else {
                h = next;
            }
        }

        let mut out = vec![p[lay.proj_b]; n];
        for ch in 0..c {
            axpy(p[lay.proj_w + ch], &h[ch * n..(ch + 1) * n], &mut out);
        }
        if let Some(t) = tape.as_mut() {
            t.hidden.push(h);
            t.output = out.clone();
        }
        (out, tape)
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`.
    pub fn backward(&self, tape: &Tape, d_out: &[f64], grad: &mut [f64]) {
        let n = self.basis.n;
        let c = self.arch.channels;
        let kk = self.arch.fourier_modes;
        let p = self.params;
        let lay = self.layout;
        let inv_n = 1.0 / n as f64;

        let last = &tape.hidden[self.arch.num_layers];
        grad[lay.proj_b] += d_out.iter().sum::<f64>();
        let mut dh = vec![0.0; c * n];
        for ch in 0..c {
            grad[lay.proj_w + ch] += dot(d_out, &last[ch * n..(ch + 1) * n]);
            let w = p[lay.proj_w + ch];
            for (d, g) in dh[ch * n..(ch + 1) * n].iter_mut().zip(d_out) {
                *d = w * g;
            }
        }

        let mut g_re = vec![0.0; c * kk];
        let mut g_im = vec![0.0; c * kk];
        for l in (0..self.arch.num_layers).rev() {
            let off = &lay.layers[l];
            let z = &tape.pre[l];
            let h = &tape.hidden[l];
            let (h_re, h_im) = (&tape.spec_re[l], &tape.spec_im[l]);
            let dz: Vec<f64> = dh.iter().zip(z).map(|(d, &zv)| d * gelu_grad(zv)).collect();
            let mut dh_prev = vec![0.0; c * n];
            for o in 0..c {
                let dzo = &dz[o * n..(o + 1) * n];
                grad[off.bias + o] += dzo.iter().sum::<f64>();
                for i in 0..c {
                    grad[off.pointwise + o * c + i] += dot(dzo, &h[i * n..(i + 1) * n]);
                    axpy(p[off.pointwise + o * c + i], dzo, &mut dh_prev[i * n..(i + 1) * n]);
                }
                // dL/dY_k = (c_k / N) G_k with G_k the forward transform of dz
                for k in 0..kk {
                    let weight = if k == 0 { inv_n } else { 2.0 * inv_n };
                    let gr = dot(dzo, &self.basis.cos[k * n..(k + 1) * n]);
                    let gi = if k == 0 { 0.0 } else { -dot(dzo, &self.basis.sin[k * n..(k + 1) * n]) };
                    g_re[o * kk + k] = weight * gr;
                    g_im[o * kk + k] = weight * gi;
                }
            }
            // weights: dR = dY conj(H); inputs: dH = sum_o dY conj(R)
            let mut dh_re = vec![0.0; c * kk];
            let mut dh_im = vec![0.0; c * kk];
            for k in 0..kk {
                for o in 0..c {
                    let (yr, yi) = (g_re[o * kk + k], g_im[o * kk + k]);
                    for i in 0..c {
                        let idx = off.spectral + 2 * ((k * c + o) * c + i);
                        let (hr, hi) = (h_re[i * kk + k], h_im[i * kk + k]);
                        grad[idx] += yr * hr + yi * hi;
                        grad[idx + 1] += yi * hr - yr * hi;
                        let (wr, wi) = (p[idx], p[idx + 1]);
                        dh_re[i * kk + k] += yr * wr + yi * wi;
                        dh_im[i * kk + k] += yi * wr - yr * wi;
                    }
                }
            }
            // H_k = sum_x h(x) e^{-i kappa x}  =>  dh(x) += sum_k Re(dH_k e^{i kappa x})
            for i in 0..c {
                let row = &mut dh_prev[i * n..(i + 1) * n];
                for k in 0..kk {
                    axpy(dh_re[i * kk + k], &self.basis.cos[k * n..(k + 1) * n], row);
                    if k > 0 {
                        axpy(-dh_im[i * kk + k], &self.basis.sin[k * n..(k + 1) * n], row);
                    }
                }
            }
            dh = dh_prev;
        }

        for ch in 0..c {
            let row = &dh[ch * n..(ch + 1) * n];
            grad[lay.lift_w + ch] += dot(row, &tape.input);
            grad[lay.lift_b + ch] += row.iter().sum::<f64>();
        }
    }
}
