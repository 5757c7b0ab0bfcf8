use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{eigenvalues_sym3, gaussian_hessian, mhe_streaming, EigenTriple, HessianVolume};
use crate::error::{Error, Result};
use crate::volume::{BinaryVolume, ScalarVolume};

/// Frangi sensitivities. `c = None` selects half the largest Hessian norm of
/// each scale.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrangiParams {
    pub a: f64,
    pub b: f64,
    #[serde(default)]
    pub c: Option<f64>,
}

impl Default for FrangiParams {
    fn default() -> Self {
        FrangiParams {
            a: 0.3,
            b: 0.3,
            c: None,
        }
    }
}

impl FrangiParams {
    pub fn validate(&self) -> Result<()> {
        let c_ok = self.c.is_none_or(|c| c > 0.0);
        if !(self.a > 0.0 && self.b > 0.0 && c_ok) {
            return Err(Error::Parameter(format!(
                "Frangi constants must be positive, got a={}, b={}, c={:?}",
                self.a, self.b, self.c
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SheetParams {
    pub delta: f64,
    pub rho: f64,
}

impl Default for SheetParams {
    fn default() -> Self {
        SheetParams { delta: 1.0, rho: 1.0 }
    }
}

impl SheetParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta >= 0.0) || !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::Parameter(format!(
                "sheet filter needs delta >= 0 and rho in (0, 1], got delta={}, rho={}",
                self.delta, self.rho
            )));
        }
        Ok(())
    }
}

/// Nonempty, strictly ascending set of positive scales.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScaleSet(Vec<f64>);

impl ScaleSet {
    pub fn new(sigmas: Vec<f64>) -> Result<Self> {
        if sigmas.is_empty() {
            return Err(Error::Parameter("scale set must not be empty".into()));
        }
        if sigmas.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(Error::Parameter(format!("scales must be positive, got {sigmas:?}")));
        }
        if sigmas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Parameter(format!(
                "scales must be strictly ascending, got {sigmas:?}"
            )));
        }
        Ok(ScaleSet(sigmas))
    }

    pub fn single(sigma: f64) -> Result<Self> {
        ScaleSet::new(vec![sigma])
    }

    pub fn sigmas(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ScaleSet {
    fn default() -> Self {
        ScaleSet(vec![1.0, 3.0, 5.0])
    }
}

impl TryFrom<Vec<f64>> for ScaleSet {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScaleSet::new(v)
    }
}

impl From<ScaleSet> for Vec<f64> {
    fn from(s: ScaleSet) -> Self {
        s.0
    }
}

/// Frangi response for one set of eigenvalues with a resolved `c`.
pub fn frangi_value(e: EigenTriple, a: f64, b: f64, c: f64, zero_tol: f64) -> f64 {
    let EigenTriple { l1, l2, l3 } = e;
    if !(l3 > 0.0) {
        return 0.0;
    }
    let qa = (l2 / l3).abs();
    let k2 = l1 * l1 + l2 * l2 + l3 * l3;
    let plate = (-qa * qa / a).exp();
    let structure = 1.0 - (-k2 / c).exp();
    if l2.abs() <= zero_tol {
        plate * structure
    } else {
        let qb2 = l1 * l1 / (l2 * l3).abs();
        plate * (-qb2 / b).exp() * structure
    }
}

/// Sheet weighting factor, branches evaluated top-down.
pub fn sheet_g(s: f64, t: f64, delta: f64, rho: f64) -> f64 {
    let at = t.abs();
    if s <= 0.0 && at >= s.abs() {
        if at == 0.0 {
            // s = t = 0: the ratio is treated as zero.
            return 1.0;
        }
        (1.0 + s / at).powf(delta)
    } else if s > 0.0 && at >= rho * s {
        (1.0 - rho * s / at).powf(delta)
    } else {
        0.0
    }
}

pub fn sheet_value(e: EigenTriple, prm: &SheetParams) -> f64 {
    if !(e.l3 > 0.0) {
        return 0.0;
    }
    e.l3 * sheet_g(e.l1, e.l3, prm.delta, prm.rho) * sheet_g(e.l2, e.l3, prm.delta, prm.rho)
}

fn per_voxel(hv: &HessianVolume, f: impl Fn(EigenTriple, f64) -> f64 + Sync) -> ScalarVolume {
    let data: Vec<f32> = (0..hv.len())
        .into_par_iter()
        .map(|i| {
            let m = hv.matrix(i);
            // Entries come from finite f32 channels.
            let e = eigenvalues_sym3(&m).expect("finite Hessian entries");
            f(e, m.frobenius()) as f32
        })
        .collect();
    ScalarVolume::new(hv.dims(), data).expect("length preserved")
}

pub fn frangi_response(hv: &HessianVolume, prm: &FrangiParams) -> Result<ScalarVolume> {
    prm.validate()?;
    let c = match prm.c {
        Some(c) => c,
        None => {
            let max_norm = (0..hv.len())
                .into_par_iter()
                .map(|i| hv.matrix(i).frobenius())
                .reduce(|| 0.0, f64::max);
            0.5 * max_norm
        }
    };
    if c <= 0.0 {
        return Ok(ScalarVolume::filled(hv.dims(), 0.0));
    }
    let (a, b) = (prm.a, prm.b);
    Ok(per_voxel(hv, |e, norm| frangi_value(e, a, b, c, 1e-12 * (1.0 + norm))))
}

pub fn sheet_response(hv: &HessianVolume, prm: &SheetParams) -> Result<ScalarVolume> {
    prm.validate()?;
    let prm = *prm;
    Ok(per_voxel(hv, move |e, _| sheet_value(e, &prm)))
}

/// Maximal Hessian Entry filter: per voxel, the largest of the six entries and 0.
pub fn mhe_response(hv: &HessianVolume) -> ScalarVolume {
    let mut best = vec![0.0f32; hv.len()];
    for ch in hv.channels() {
        best.iter_mut().zip(ch).for_each(|(b, &v)| {
            if v > *b {
                *b = v;
            }
        });
    }
    ScalarVolume::new(hv.dims(), best).expect("length preserved")
}

/// `1{r >= mean(r) + 3 sd(r)}` with the sample deviation; all zeros when sd = 0.
pub fn three_sigma_binarize(r: &ScalarVolume) -> BinaryVolume {
    let (mean, sd) = r.mean_sd();
    if sd == 0.0 {
        return BinaryVolume::zeros(r.dims());
    }
    let thr = mean + 3.0 * sd;
    BinaryVolume::from_flags(r.dims(), r.data().iter().map(|&v| v as f64 >= thr))
}

/// Binarized MHE response at a single scale.
pub fn single_scale_mhe_mask(vol: &ScalarVolume, sigma: f64) -> Result<BinaryVolume> {
    Ok(three_sigma_binarize(&mhe_streaming(vol, sigma)?))
}

/// Union over scales of the binarized MHE masks.
pub fn multiscale_mhe(vol: &ScalarVolume, scales: &ScaleSet) -> Result<BinaryVolume> {
    let mut acc = BinaryVolume::zeros(vol.dims());
    for &sigma in scales.sigmas() {
        let mask = single_scale_mhe_mask(vol, sigma)?;
        acc.data_mut().iter_mut().zip(mask.data()).for_each(|(a, &m)| *a |= m);
    }
    Ok(acc)
}

fn voxel_max(acc: &mut ScalarVolume, next: ScalarVolume) -> ScalarVolume {
    let data = acc.data().iter().zip(next.data()).map(|(&a, &b)| a.max(b)).collect();
    ScalarVolume::new(acc.dims(), data).expect("length preserved")
}

/// Voxelwise maximum of single-scale Frangi responses.
pub fn multiscale_frangi(vol: &ScalarVolume, scales: &ScaleSet, prm: &FrangiParams) -> Result<ScalarVolume> {
    prm.validate()?;
    let mut acc = ScalarVolume::filled(vol.dims(), 0.0);
    for &sigma in scales.sigmas() {
        let resp = frangi_response(&gaussian_hessian(vol, sigma)?, prm)?;
        acc = voxel_max(&mut acc, resp);
    }
    Ok(acc)
}

/// Voxelwise maximum of single-scale sheet responses.
pub fn multiscale_sheet(vol: &ScalarVolume, scales: &ScaleSet, prm: &SheetParams) -> Result<ScalarVolume> {
    prm.validate()?;
    let mut acc = ScalarVolume::filled(vol.dims(), 0.0);
    for &sigma in scales.sigmas() {
        let resp = sheet_response(&gaussian_hessian(vol, sigma)?, prm)?;
        acc = voxel_max(&mut acc, resp);
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hessian::gaussian_hessian;
    use crate::volume::Dims;
    use proptest::prelude::*;

    fn tri(l1: f64, l2: f64, l3: f64) -> EigenTriple {
        EigenTriple { l1, l2, l3 }
    }

    #[test]
    fn frangi_hand_values() {
        assert_eq!(frangi_value(tri(0.1, 0.2, -1.0), 0.5, 0.5, 0.5, 1e-12), 0.0);
        assert_eq!(frangi_value(tri(0.0, 0.0, 0.0), 0.5, 0.5, 0.5, 1e-12), 0.0);
        let v = frangi_value(tri(0.0, 0.0, 1.0), 0.5, 0.5, 0.5, 1e-12);
        assert!((v - 0.864665).abs() < 1e-6, "{v}");
        let v = frangi_value(tri(0.0, 1.0, 1.0), 0.5, 0.5, 0.5, 1e-12);
        assert!((v - 0.132857).abs() < 1e-6, "{v}");
    }

    #[test]
    fn sheet_hand_values() {
        let p = SheetParams { delta: 1.0, rho: 1.0 };
        assert_eq!(sheet_value(tri(0.0, 0.0, -2.0), &p), 0.0);
        assert_eq!(sheet_value(tri(0.0, 0.0, 1.0), &p), 1.0);
        assert_eq!(sheet_value(tri(-1.0, -1.0, 1.0), &p), 0.0);
        // s > 0 with |t| < rho s falls through to zero
        assert_eq!(sheet_g(2.0, 1.0, 1.0, 1.0), 0.0);
    }

    #[test]
    fn mhe_takes_max_entry_floored_at_zero() {
        let dims = Dims::cube(10).unwrap();
        let v = ScalarVolume::from_fn(dims, |x, y, z| ((x + 2 * y + 3 * z) % 7) as f32 / 6.0);
        let hv = gaussian_hessian(&v, 1.0).unwrap();
        let r = mhe_response(&hv);
        for i in 0..dims.len() {
            let m = hv.matrix(i).entries().iter().fold(0.0f64, |a, &b| a.max(b));
            assert!((r.data()[i] as f64 - m).abs() < 1e-7);
        }
        let c = mhe_response(&gaussian_hessian(&ScalarVolume::filled(dims, 0.3), 2.0).unwrap());
        assert!(c.data().iter().all(|&x| x.abs() < 1e-6));
    }

    #[test]
    fn mhe_entry_example() {
        let entries = [-1.0f64, 0.2, 0.5, -3.0, 0.1, 0.0];
        let m = entries.iter().fold(0.0f64, |a, &b| a.max(b));
        assert_eq!(m, 0.5);
        let neg = [-1.0f64, -0.2, -0.5, -3.0, -0.1, -0.01];
        assert_eq!(neg.iter().fold(0.0f64, |a, &b| a.max(b)), 0.0);
    }

    #[test]
    fn three_sigma_examples() {
        let d = Dims::new(10, 10, 10).unwrap();
        assert_eq!(three_sigma_binarize(&ScalarVolume::filled(d, 0.4)).count_ones(), 0);

        let mut data = vec![0.0f32; 1000];
        data[417] = 1.0;
        let m = three_sigma_binarize(&ScalarVolume::new(d, data).unwrap());
        assert_eq!(m.count_ones(), 1);
        assert_eq!(m.data()[417], 1);

        let big = Dims::new(100, 100, 100).unwrap();
        let mut data = vec![0.0f32; 1_000_000];
        data[123_456] = 1.0;
        let m = three_sigma_binarize(&ScalarVolume::new(big, data).unwrap());
        assert_eq!(m.count_ones(), 1);
    }

    #[test]
    fn scale_set_validation() {
        assert!(ScaleSet::new(vec![]).is_err());
        assert!(ScaleSet::new(vec![1.0, 1.0]).is_err());
        assert!(ScaleSet::new(vec![3.0, 1.0]).is_err());
        assert!(ScaleSet::new(vec![0.0]).is_err());
        assert_eq!(ScaleSet::default().sigmas(), &[1.0, 3.0, 5.0]);
        let s: ScaleSet = serde_json::from_str("[1.5, 2.5]").unwrap();
        assert_eq!(s.sigmas(), &[1.5, 2.5]);
        assert!(serde_json::from_str::<ScaleSet>("[2.5, 1.5]").is_err());
    }

    #[test]
    fn multiscale_combinations() {
        let dims = Dims::cube(16).unwrap();
        let v = ScalarVolume::from_fn(
            dims,
            |x, y, z| if z == 8 && x > 3 { 0.1 } else { 0.9 } + 0.01 * ((x * y) % 3) as f32,
        );
        let one = ScaleSet::single(1.5).unwrap();
        assert_eq!(
            multiscale_mhe(&v, &one).unwrap(),
            single_scale_mhe_mask(&v, 1.5).unwrap()
        );
        let two = ScaleSet::new(vec![1.0, 2.0]).unwrap();
        let union = single_scale_mhe_mask(&v, 1.0)
            .unwrap()
            .union(&single_scale_mhe_mask(&v, 2.0).unwrap())
            .unwrap();
        assert_eq!(multiscale_mhe(&v, &two).unwrap(), union);

        let prm = FrangiParams {
            a: 0.5,
            b: 0.5,
            c: None,
        };
        let f1 = multiscale_frangi(&v, &one, &prm).unwrap();
        assert_eq!(f1, frangi_response(&gaussian_hessian(&v, 1.5).unwrap(), &prm).unwrap());
        let f2 = multiscale_frangi(&v, &two, &prm).unwrap();
        let a = frangi_response(&gaussian_hessian(&v, 1.0).unwrap(), &prm).unwrap();
        let b = frangi_response(&gaussian_hessian(&v, 2.0).unwrap(), &prm).unwrap();
        for i in 0..dims.len() {
            assert_eq!(f2.data()[i], a.data()[i].max(b.data()[i]));
        }

        let flat = ScalarVolume::filled(dims, 0.5);
        assert_eq!(multiscale_mhe(&flat, &two).unwrap().count_ones(), 0);
        assert!(multiscale_frangi(&flat, &two, &prm)
            .unwrap()
            .data()
            .iter()
            .all(|&x| x == 0.0));
    }

    #[test]
    fn frangi_range_and_sheet_sign_on_texture() {
        let dims = Dims::cube(14).unwrap();
        let v = ScalarVolume::from_fn(dims, |x, y, z| (((x * 13 + y * 7 + z * 5) % 11) as f32) / 10.0);
        let hv = gaussian_hessian(&v, 1.0).unwrap();
        let f = frangi_response(&hv, &FrangiParams::default()).unwrap();
        assert!(f.data().iter().all(|&x| (0.0..1.0).contains(&x)));
        let s = sheet_response(&hv, &SheetParams { delta: 1.5, rho: 0.8 }).unwrap();
        assert!(s.data().iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(FrangiParams {
            a: 0.0,
            b: 1.0,
            c: None
        }
        .validate()
        .is_err());
        assert!(FrangiParams {
            a: 1.0,
            b: 1.0,
            c: Some(-1.0)
        }
        .validate()
        .is_err());
        assert!(SheetParams { delta: 1.0, rho: 0.0 }.validate().is_err());
        assert!(SheetParams { delta: -1.0, rho: 1.0 }.validate().is_err());
    }

    proptest! {
        #[test]
        fn three_sigma_marks_at_most_a_ninth(values in proptest::collection::vec(0.0f32..1.0, 27..200)) {
            let n = values.len();
            let vol = ScalarVolume::new(Dims::new(n, 1, 1).unwrap(), values).unwrap();
            prop_assert!(three_sigma_binarize(&vol).count_ones() <= n / 9);
        }

        #[test]
        fn binarized_mhe_invariant_under_positive_scaling(seed in 0u64..1000, k in 0.5f32..4.0) {
            let dims = Dims::cube(10).unwrap();
            let v = ScalarVolume::from_fn(dims, |x, y, z| {
                (((x as u64 * 31 + y as u64 * 17 + z as u64 * 7 + seed) % 23) as f32) / 23.0
            });
            let scaled = ScalarVolume::new(dims, v.data().iter().map(|&x| x * k).collect()).unwrap();
            let a = mhe_streaming(&v, 1.0).unwrap();
            let b = mhe_streaming(&scaled, 1.0).unwrap();
            for (x, y) in a.data().iter().zip(b.data()) {
                prop_assert!((x * k - y).abs() <= 1e-5 * (1.0 + y.abs()));
            }
            // Thresholds scale with the response; only voxels sitting exactly on
            // the threshold could flip, so compare with a rounding allowance.
            let ma = three_sigma_binarize(&a);
            let mb = three_sigma_binarize(&b);
            let diff = ma.data().iter().zip(mb.data()).filter(|(p, q)| p != q).count();
            prop_assert!(diff <= 1);
        }
    }
}
