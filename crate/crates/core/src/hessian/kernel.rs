//! Sampled 1D Gaussian derivative kernels and separable convolution passes.

use rayon::prelude::*;

use crate::volume::Dims;

/// Kernel taps `k(q)` for `q = -radius..=radius`, stored at index `q + radius`.
#[derive(Clone, Debug, PartialEq)]
pub struct Kernel1d {
    pub radius: usize,
    pub taps: Vec<f64>,
}

impl Kernel1d {
    fn moment(&self, power: i32) -> f64 {
        let r = self.radius as f64;
        self.taps
            .iter()
            .enumerate()
            .map(|(i, &k)| k * (i as f64 - r).powi(power))
            .sum()
    }
}

/// Truncation radius `ceil(3 sigma)`.
pub fn radius_for(sigma: f64) -> usize {
    (3.0 * sigma).ceil().max(1.0) as usize
}

/// 1D factor of `(2 pi sigma)^(-3/2) exp(-|p|^2 / (2 sigma^2))` and its first
/// two derivatives, sampled at integer offsets.
///
/// Truncation and sampling perturb the low-order moments, so each kernel is
/// corrected to reproduce the moments of its continuous counterpart: the
/// smoothing kernel has mass `sqrt(sigma)`, the first derivative has first
/// moment `-sqrt(sigma)`, and the second derivative has zero mass and second
/// moment `2 sqrt(sigma)`. Convolution of a polynomial of degree three or less
/// is then exact.
pub fn gaussian_kernel(sigma: f64, order: usize) -> Kernel1d {
    let radius = radius_for(sigma);
    let mass = sigma.sqrt();
    let norm = (2.0 * std::f64::consts::PI * sigma).powf(-0.5);
    let s2 = sigma * sigma;
    let offsets = || (0..=2 * radius).map(|i| i as f64 - radius as f64);

    let raw0: Vec<f64> = offsets().map(|q| norm * (-q * q / (2.0 * s2)).exp()).collect();
    let sum0: f64 = raw0.iter().sum();
    let g0: Vec<f64> = raw0.iter().map(|k| k * mass / sum0).collect();

    match order {
        0 => Kernel1d { radius, taps: g0 },
        1 => {
            let mut k = Kernel1d {
                radius,
                taps: offsets().zip(&g0).map(|(q, &g)| -q / s2 * g).collect(),
            };
            let scale = -mass / k.moment(1);
            k.taps.iter_mut().for_each(|t| *t *= scale);
            k
        }
        2 => {
            let base: Vec<f64> = offsets().zip(&g0).map(|(q, &g)| (q * q - s2) / (s2 * s2) * g).collect();
            let shift = base.iter().sum::<f64>() / mass;
            let mut k = Kernel1d {
                radius,
                taps: base.iter().zip(&g0).map(|(b, g)| b - shift * g).collect(),
            };
            let scale = 2.0 * mass / k.moment(2);
            k.taps.iter_mut().for_each(|t| *t *= scale);
            k
        }
        _ => panic!("derivative order {order} not supported"),
    }
}

/// Half-sample symmetric reflection (`d c b a | a b c d | d c b a`).
#[inline]
pub(crate) fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - i - 1;
        } else {
            return i as usize;
        }
    }
}

/// `out = input * kernel` along one axis, with reflect boundary handling.
pub(crate) fn convolve_axis(input: &[f64], out: &mut [f64], dims: Dims, axis: usize, k: &Kernel1d) {
    let (nx, ny, nz) = (dims.nx, dims.ny, dims.nz);
    let r = k.radius as isize;
    match axis {
        0 => out.par_chunks_mut(nx).zip(input.par_chunks(nx)).for_each_init(
            || vec![0.0; nx + 2 * k.radius],
            |padded, (row_out, row_in)| {
                for (j, p) in padded.iter_mut().enumerate() {
                    *p = row_in[reflect(j as isize - r, nx)];
                }
                // out[x] = sum_q k(q) in(x - q) = sum_t taps[t] padded[x + 2R - t]
                for (x, o) in row_out.iter_mut().enumerate() {
                    let window = &padded[x..x + 2 * k.radius + 1];
                    *o = window.iter().rev().zip(&k.taps).map(|(a, b)| a * b).sum();
                }
            },
        ),
        1 => {
            let plane = nx * ny;
            out.par_chunks_mut(plane)
                .zip(input.par_chunks(plane))
                .for_each(|(pl_out, pl_in)| {
                    for y in 0..ny {
                        let row_out = &mut pl_out[y * nx..(y + 1) * nx];
                        row_out.fill(0.0);
                        for (t, &w) in k.taps.iter().enumerate() {
                            let src = reflect(y as isize - (t as isize - r), ny);
                            let row_in = &pl_in[src * nx..(src + 1) * nx];
                            row_out.iter_mut().zip(row_in).for_each(|(o, &v)| *o += w * v);
                        }
                    }
                });
        }
        2 => {
            let plane = nx * ny;
            out.par_chunks_mut(plane).enumerate().for_each(|(z, pl_out)| {
                pl_out.fill(0.0);
                for (t, &w) in k.taps.iter().enumerate() {
                    let src = reflect(z as isize - (t as isize - r), nz);
                    let pl_in = &input[src * plane..(src + 1) * plane];
                    pl_out.iter_mut().zip(pl_in).for_each(|(o, &v)| *o += w * v);
                }
            });
        }
        _ => unreachable!("axis index out of range"),
    }
}

/// Applies one kernel per axis (x, then y, then z) and returns the result in f64.
pub(crate) fn separable(data: &[f32], dims: Dims, kernels: [&Kernel1d; 3]) -> Vec<f64> {
    let mut a: Vec<f64> = data.iter().map(|&v| v as f64).collect();
    let mut b = vec![0.0; a.len()];
    for (axis, k) in kernels.iter().enumerate() {
        convolve_axis(&a, &mut b, dims, axis, k);
        std::mem::swap(&mut a, &mut b);
    }
    a
}
