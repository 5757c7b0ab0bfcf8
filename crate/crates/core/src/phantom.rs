//! Synthetic test volumes: Gaussian gray noise with an optional planar crack
//! slab and spherical pores, together with the voxel-exact crack truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryVolume, Dims, ScalarVolume};

/// Voxels with `|n·p - offset| <= width / 2` belong to the crack, `n` the unit normal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrackSpec {
    pub normal: [f64; 3],
    pub offset: f64,
    pub width: f64,
    pub mean: f64,
}

/// `count` balls with radii drawn uniformly from `radius` and centres uniformly in the volume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoreSpec {
    pub count: usize,
    pub radius: [f64; 2],
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub dims: [usize; 3],
    #[serde(default)]
    pub seed: u64,
    pub mean: f64,
    pub sd: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub crack: Option<CrackSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pores: Option<PoreSpec>,
}

impl PhantomSpec {
    pub fn homogeneous(n: usize, seed: u64) -> Self {
        PhantomSpec {
            dims: [n; 3],
            seed,
            mean: 0.7,
            sd: 0.1,
            crack: None,
            pores: None,
        }
    }

    /// Planar crack of width `w` with normal `(1, 1, 1)` at distance `5n/16`
    /// from the origin, cutting off a corner of an `n^3` volume.
    pub fn planar_crack(n: usize, w: f64, seed: u64) -> Self {
        PhantomSpec {
            crack: Some(CrackSpec {
                normal: [1.0, 1.0, 1.0],
                offset: n as f64 * 5.0 / 16.0,
                width: w,
                mean: 0.3,
            }),
            ..PhantomSpec::homogeneous(n, seed)
        }
    }

    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.dims[0], self.dims[1], self.dims[2])
    }

    pub fn validate(&self) -> Result<()> {
        self.dims()?;
        let p = |m: String| Err(Error::Parameter(m));
        if !(0.0..=1.0).contains(&self.mean) {
            return p(format!("background mean {} outside [0, 1]", self.mean));
        }
        if !(self.sd >= 0.0 && self.sd.is_finite()) {
            return p(format!("noise sd {} must be finite and >= 0", self.sd));
        }
        if let Some(c) = &self.crack {
            if !(0.0 <= c.mean && c.mean < self.mean) {
                return p(format!(
                    "crack mean {} must satisfy 0 <= crack mean < background mean {}",
                    c.mean, self.mean
                ));
            }
            if !(c.width >= 1.0) {
                return p(format!("crack width {} must be >= 1", c.width));
            }
            let len = c.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(len > 1e-12 && len.is_finite()) || !c.offset.is_finite() {
                return p(format!("degenerate crack plane normal {:?}", c.normal));
            }
        }
        if let Some(pr) = &self.pores {
            if !(0.0..=1.0).contains(&pr.mean) {
                return p(format!("pore mean {} outside [0, 1]", pr.mean));
            }
            if !(pr.radius[0] > 0.0 && pr.radius[0] <= pr.radius[1] && pr.radius[1].is_finite()) {
                return p(format!("pore radius range {:?} is invalid", pr.radius));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, PartialEq)]
enum Material {
    Background,
    Crack,
    Pore,
}

/// Gray volume and crack truth; identical spec and seed give bit-identical output.
pub fn generate(spec: &PhantomSpec) -> Result<(ScalarVolume, BinaryVolume)> {
    spec.validate()?;
    let dims = spec.dims()?;
    let mut label = vec![Material::Background; dims.len()];

    if let Some(c) = &spec.crack {
        let len = c.normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        let n = c.normal.map(|v| v / len);
        let half = c.width / 2.0;
        for (i, l) in label.iter_mut().enumerate() {
            let (x, y, z) = dims.coords(i);
            let d = n[0] * x as f64 + n[1] * y as f64 + n[2] * z as f64 - c.offset;
            if d.abs() <= half {
                *l = Material::Crack;
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    if let Some(pr) = &spec.pores {
        let ext = dims.as_array().map(|v| v as f64);
        for _ in 0..pr.count {
            let centre = ext.map(|e| rng.random::<f64>() * e);
            let r = if pr.radius[1] > pr.radius[0] {
                rng.random_range(pr.radius[0]..=pr.radius[1])
            } else {
                pr.radius[0]
            };
            let lo = centre.map(|c| (c - r).floor().max(0.0) as usize);
            let hi = [0, 1, 2].map(|a| ((centre[a] + r).ceil() as usize).min(dims.as_array()[a] - 1));
            for z in lo[2]..=hi[2] {
                for y in lo[1]..=hi[1] {
                    for x in lo[0]..=hi[0] {
                        let d2 = (x as f64 - centre[0]).powi(2)
                            + (y as f64 - centre[1]).powi(2)
                            + (z as f64 - centre[2]).powi(2);
                        if d2 <= r * r {
                            label[dims.index(x, y, z)] = Material::Pore;
                        }
                    }
                }
            }
        }
    }

    let crack_mean = spec.crack.as_ref().map_or(0.0, |c| c.mean);
    let pore_mean = spec.pores.as_ref().map_or(0.0, |p| p.mean);
    let mut noise = ChaCha8Rng::seed_from_u64(spec.seed);
    noise.set_stream(1);
    let data: Vec<f32> = label
        .iter()
        .map(|l| {
            let mean = match l {
                Material::Background => spec.mean,
                Material::Crack => crack_mean,
                Material::Pore => pore_mean,
            };
            let e: f64 = StandardNormal.sample(&mut noise);
            (mean + spec.sd * e).clamp(0.0, 1.0) as f32
        })
        .collect();
    let truth = BinaryVolume::from_flags(dims, label.iter().map(|&l| l == Material::Crack));
    Ok((ScalarVolume::new(dims, data)?, truth))
}

/// Pure background noise, clamped to [0, 1].
pub fn generate_homogeneous(dims: Dims, seed: u64, mean: f64, sd: f64) -> Result<ScalarVolume> {
    let spec = PhantomSpec {
        dims: dims.as_array(),
        seed,
        mean,
        sd,
        crack: None,
        pores: None,
    };
    Ok(generate(&spec)?.0)
}
