//! Hessian-based crack filters.
//!
//! Second derivatives are computed as `sigma * (I * d²G/dp_i dp_j)` where
//! `G(p, sigma) = (2 pi sigma)^(-3/2) exp(-|p|^2 / (2 sigma^2))`. The
//! normalization deliberately differs from the unit-mass Gaussian; the
//! binarization rule is invariant to the constant.

mod eigen;
mod filters;
pub mod kernel;

pub use eigen::{eigenvalues_sym3, EigenTriple, SymMat3};
pub use filters::{
    frangi_response, frangi_value, mhe_response, multiscale_frangi, multiscale_mhe, multiscale_sheet, sheet_g,
    sheet_response, sheet_value, single_scale_mhe_mask, three_sigma_binarize, FrangiParams, ScaleSet, SheetParams,
};

use crate::error::{Error, Result};
use crate::volume::{Dims, ScalarVolume};
use kernel::{gaussian_kernel, separable};

/// Channel order of [`HessianVolume::channels`].
pub const CHANNELS: [(usize, usize); 6] = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)];

/// Per-voxel symmetric Hessian at one scale; six stored channels
/// `H11, H12, H13, H22, H23, H33`.
#[derive(Clone, Debug)]
pub struct HessianVolume {
    dims: Dims,
    sigma: f64,
    channels: [Vec<f32>; 6],
}

impl HessianVolume {
    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn channels(&self) -> &[Vec<f32>; 6] {
        &self.channels
    }

    /// Channel for entry `(i, j)`, zero-based, in either index order.
    pub fn channel(&self, i: usize, j: usize) -> &[f32] {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        let k = CHANNELS
            .iter()
            .position(|&c| c == (a, b))
            .expect("Hessian index out of range");
        &self.channels[k]
    }

    #[inline]
    pub fn matrix(&self, idx: usize) -> SymMat3 {
        let c = &self.channels;
        SymMat3 {
            xx: c[0][idx] as f64,
            xy: c[1][idx] as f64,
            xz: c[2][idx] as f64,
            yy: c[3][idx] as f64,
            yz: c[4][idx] as f64,
            zz: c[5][idx] as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be > 0, got {sigma}")));
    }
    Ok(())
}

fn derivative_orders(i: usize, j: usize) -> [usize; 3] {
    let mut orders = [0; 3];
    orders[i] += 1;
    orders[j] += 1;
    orders
}

/// `sigma * (I * d^(o_x+o_y+o_z) G / dx^o_x dy^o_y dz^o_z)` for orders up to 2 per axis.
pub fn gaussian_derivative(vol: &ScalarVolume, sigma: f64, orders: [usize; 3]) -> Result<Vec<f64>> {
    check_sigma(sigma)?;
    if orders.iter().any(|&o| o > 2) {
        return Err(Error::Parameter(format!("unsupported derivative orders {orders:?}")));
    }
    let kernels = [0, 1, 2].map(|o| gaussian_kernel(sigma, o));
    let mut out = separable(
        vol.data(),
        vol.dims(),
        [&kernels[orders[0]], &kernels[orders[1]], &kernels[orders[2]]],
    );
    out.iter_mut().for_each(|v| *v *= sigma);
    Ok(out)
}

/// Smoothed volume `sigma * (I * G)`, the zeroth-order companion of the Hessian.
pub fn gaussian_smooth(vol: &ScalarVolume, sigma: f64) -> Result<Vec<f64>> {
    gaussian_derivative(vol, sigma, [0, 0, 0])
}

/// Computes the Hessian channels one at a time and hands each to `visit`
/// together with its `(i, j)` index. Only one channel is resident at once.
pub fn for_each_hessian_channel(
    vol: &ScalarVolume,
    sigma: f64,
    mut visit: impl FnMut((usize, usize), Vec<f64>),
) -> Result<()> {
    check_sigma(sigma)?;
    let kernels = [0, 1, 2].map(|o| gaussian_kernel(sigma, o));
    for &(i, j) in &CHANNELS {
        let o = derivative_orders(i, j);
        let mut ch = separable(vol.data(), vol.dims(), [&kernels[o[0]], &kernels[o[1]], &kernels[o[2]]]);
        ch.iter_mut().for_each(|v| *v *= sigma);
        visit((i, j), ch);
    }
    Ok(())
}

/// Gaussian-smoothed Hessian of `vol` at scale `sigma` (separable, reflect padded,
/// truncated at `ceil(3 sigma)`).
pub fn gaussian_hessian(vol: &ScalarVolume, sigma: f64) -> Result<HessianVolume> {
    let mut channels: [Vec<f32>; 6] = Default::default();
    for_each_hessian_channel(vol, sigma, |(i, j), ch| {
        let k = CHANNELS.iter().position(|&c| c == (i, j)).unwrap();
        channels[k] = ch.into_iter().map(|v| v as f32).collect();
    })?;
    Ok(HessianVolume {
        dims: vol.dims(),
        sigma,
        channels,
    })
}

/// Maximal Hessian Entry response computed channel by channel, without
/// materializing the full [`HessianVolume`].
pub fn mhe_streaming(vol: &ScalarVolume, sigma: f64) -> Result<ScalarVolume> {
    let mut best = vec![0.0f64; vol.len()];
    for_each_hessian_channel(vol, sigma, |_, ch| {
        best.iter_mut().zip(&ch).for_each(|(b, &v)| {
            if v > *b {
                *b = v;
            }
        });
    })?;
    ScalarVolume::new(vol.dims(), best.into_iter().map(|v| v as f32).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_positive_sigma() {
        let v = ScalarVolume::filled(Dims::cube(4).unwrap(), 0.5);
        assert!(matches!(gaussian_hessian(&v, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(gaussian_hessian(&v, -1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn constant_volume_has_zero_hessian() {
        let v = ScalarVolume::filled(Dims::cube(12).unwrap(), 0.8);
        let h = gaussian_hessian(&v, 1.5).unwrap();
        for ch in h.channels() {
            assert!(ch.iter().all(|x| x.abs() < 1e-6));
        }
    }

    #[test]
    fn quadratic_ramp_matches_finite_differences() {
        let n = 24;
        let dims = Dims::cube(n).unwrap();
        let ramp = ScalarVolume::from_fn(dims, |x, _, _| (x * x) as f32 / 1000.0);
        let sigma = 1.5;
        let h = gaussian_hessian(&ramp, sigma).unwrap();
        let smooth = gaussian_smooth(&ramp, sigma).unwrap();
        let (x, y, z) = (12, 12, 12);
        let fd = smooth[dims.index(x + 1, y, z)] - 2.0 * smooth[dims.index(x, y, z)] + smooth[dims.index(x - 1, y, z)];
        let got = h.channel(0, 0)[dims.index(x, y, z)] as f64;
        assert!((got - fd).abs() <= 1e-3 * fd.abs(), "{got} vs {fd}");
        assert!(h.channel(0, 1)[dims.index(x, y, z)].abs() < 1e-7);
    }

    #[test]
    fn transposed_image_swaps_mixed_channels() {
        let dims = Dims::new(10, 13, 9).unwrap();
        let f = |x: usize, y: usize, z: usize| {
            (((x * 7 + y * 3 + z * 11) % 17) as f32 / 17.0) * ((x + 2 * y) as f32 * 0.1).sin().abs()
        };
        let v = ScalarVolume::from_fn(dims, f);
        let tdims = Dims::new(13, 10, 9).unwrap();
        let t = ScalarVolume::from_fn(tdims, |x, y, z| f(y, x, z));
        let hv = gaussian_hessian(&v, 1.2).unwrap();
        let ht = gaussian_hessian(&t, 1.2).unwrap();
        for z in 0..9 {
            for y in 0..13 {
                for x in 0..10 {
                    let a = hv.channel(0, 1)[dims.index(x, y, z)] as f64;
                    let b = ht.channel(1, 0)[tdims.index(y, x, z)] as f64;
                    assert!((a - b).abs() <= 1e-9, "{a} vs {b}");
                    let a = hv.channel(0, 0)[dims.index(x, y, z)];
                    let b = ht.channel(1, 1)[tdims.index(y, x, z)];
                    assert!((a - b).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn streaming_mhe_matches_materialized() {
        let dims = Dims::cube(14).unwrap();
        let v = ScalarVolume::from_fn(dims, |x, y, z| ((x * y + z) % 5) as f32 / 4.0);
        let a = mhe_streaming(&v, 1.0).unwrap();
        let b = mhe_response(&gaussian_hessian(&v, 1.0).unwrap());
        assert_eq!(a, b);
    }
}
