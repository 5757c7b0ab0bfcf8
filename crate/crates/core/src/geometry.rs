//! Cube partition of a segmentation and per-cube geometric statistics.
//!
//! Each cube `q` yields the raw triple `(a, b, c)`: surface density `S/V`,
//! foreground volume `V`, and the sample standard deviation of the projection
//! areas over 13 lattice directions. The standardized field divides each
//! channel by its grid-wide sample deviation.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::stats::sample_sd;
use crate::volume::{BinaryVolume, Dims};

/// Recommended range of voxels per cube.
pub const CUBE_VOXELS_MIN: usize = 15 * 15 * 15;
pub const CUBE_VOXELS_MAX: usize = 30 * 30 * 30;

/// Split of a volume into `g^3` congruent cubes anchored at the origin.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CubePartition {
    pub g: usize,
    pub cube: Dims,
    /// Trailing voxels per axis that belong to no cube.
    pub remainder: [usize; 3],
}

impl CubePartition {
    pub fn new(dims: Dims, g: usize) -> Result<Self> {
        if g < 2 {
            return Err(Error::Parameter(format!("grid count g must be >= 2, got {g}")));
        }
        if g > dims.min_extent() {
            return Err(Error::Parameter(format!(
                "grid count g = {g} exceeds the smallest volume extent of {dims}"
            )));
        }
        let n = dims.as_array();
        let side = n.map(|v| v / g);
        Ok(CubePartition {
            g,
            cube: Dims::new(side[0], side[1], side[2])?,
            remainder: [0, 1, 2].map(|a| n[a] - g * side[a]),
        })
    }

    pub fn num_cubes(&self) -> usize {
        self.g * self.g * self.g
    }

    /// Flat cube index, x fastest.
    #[inline]
    pub fn cube_index(&self, q: [usize; 3]) -> usize {
        q[0] + self.g * (q[1] + self.g * q[2])
    }

    #[inline]
    pub fn cube_coords(&self, i: usize) -> [usize; 3] {
        [i % self.g, (i / self.g) % self.g, i / (self.g * self.g)]
    }

    pub fn origin(&self, q: [usize; 3]) -> [usize; 3] {
        let c = self.cube.as_array();
        [0, 1, 2].map(|a| q[a] * c[a])
    }

    pub fn cube_of(&self, vol: &BinaryVolume, q: [usize; 3]) -> BinaryVolume {
        vol.sub_block(self.origin(q), self.cube)
    }

    /// Message when the cube size falls outside the recommended range.
    pub fn size_warning(&self) -> Option<String> {
        let v = self.cube.len();
        (!(CUBE_VOXELS_MIN..=CUBE_VOXELS_MAX).contains(&v)).then(|| {
            format!(
                "cube size {} ({v} voxels) is outside the recommended range [15^3, 30^3]",
                self.cube
            )
        })
    }
}

pub fn partition(vol: &BinaryVolume, g: usize) -> Result<CubePartition> {
    CubePartition::new(vol.dims(), g)
}

/// Exposed voxel faces; faces on the cube boundary count as exposed.
pub fn surface_area(cube: &BinaryVolume) -> f64 {
    let d = cube.dims();
    let data = cube.data();
    let mut faces = 0usize;
    for z in 0..d.nz {
        for y in 0..d.ny {
            for x in 0..d.nx {
                if data[d.index(x, y, z)] == 0 {
                    continue;
                }
                let open = |nx: Option<usize>, ny: Option<usize>, nz: Option<usize>| match (nx, ny, nz) {
                    (Some(a), Some(b), Some(c)) if a < d.nx && b < d.ny && c < d.nz => data[d.index(a, b, c)] == 0,
                    _ => true,
                };
                faces += open(x.checked_sub(1), Some(y), Some(z)) as usize
                    + open(Some(x + 1), Some(y), Some(z)) as usize
                    + open(Some(x), y.checked_sub(1), Some(z)) as usize
                    + open(Some(x), Some(y + 1), Some(z)) as usize
                    + open(Some(x), Some(y), z.checked_sub(1)) as usize
                    + open(Some(x), Some(y), Some(z + 1)) as usize;
            }
        }
    }
    faces as f64
}

pub fn foreground_volume(cube: &BinaryVolume) -> f64 {
    cube.count_ones() as f64
}

/// One of the 13 lattice directions with the integer basis of its orthogonal plane.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Direction {
    pub dir: [i32; 3],
    pub basis: [[i32; 3]; 2],
}

/// The 13 pairwise non-antiparallel directions joining a voxel to its 26 neighbors.
pub const DIRECTIONS: [Direction; 13] = [
    Direction {
        dir: [1, 0, 0],
        basis: [[0, 1, 0], [0, 0, 1]],
    },
    Direction {
        dir: [0, 1, 0],
        basis: [[1, 0, 0], [0, 0, 1]],
    },
    Direction {
        dir: [0, 0, 1],
        basis: [[1, 0, 0], [0, 1, 0]],
    },
    Direction {
        dir: [1, 1, 0],
        basis: [[1, -1, 0], [0, 0, 1]],
    },
    Direction {
        dir: [1, -1, 0],
        basis: [[1, 1, 0], [0, 0, 1]],
    },
    Direction {
        dir: [1, 0, 1],
        basis: [[1, 0, -1], [0, 1, 0]],
    },
    Direction {
        dir: [1, 0, -1],
        basis: [[1, 0, 1], [0, 1, 0]],
    },
    Direction {
        dir: [0, 1, 1],
        basis: [[0, 1, -1], [1, 0, 0]],
    },
    Direction {
        dir: [0, 1, -1],
        basis: [[0, 1, 1], [1, 0, 0]],
    },
    Direction {
        dir: [1, 1, 1],
        basis: [[1, -1, 0], [1, 1, -2]],
    },
    Direction {
        dir: [1, 1, -1],
        basis: [[1, -1, 0], [1, 1, 2]],
    },
    Direction {
        dir: [1, -1, 1],
        basis: [[1, 1, 0], [1, -1, -2]],
    },
    Direction {
        dir: [-1, 1, 1],
        basis: [[1, 1, 0], [1, -1, 2]],
    },
];

/// Looks up a direction of the standard set; antipodes are accepted.
pub fn direction(dir: [i32; 3]) -> Result<&'static Direction> {
    DIRECTIONS
        .iter()
        .find(|d| d.dir == dir || d.dir == dir.map(|v| -v))
        .ok_or_else(|| Error::Parameter(format!("{dir:?} is not one of the 13 lattice directions")))
}

/// Number of distinct plane cells hit by projecting voxel centres along `dir`.
///
/// Plane coordinates are `v·e/|e|` for the two basis vectors of the
/// direction, rounded to the nearest integer.
pub fn projection_area(cube: &BinaryVolume, dir: [i32; 3]) -> Result<f64> {
    Ok(projection_area_of(cube, direction(dir)?))
}

fn projection_area_of(cube: &BinaryVolume, d: &Direction) -> f64 {
    let dims = cube.dims();
    let unit = d.basis.map(|e| {
        let n = e.iter().map(|&v| (v * v) as f64).sum::<f64>().sqrt();
        e.map(|v| v as f64 / n)
    });
    let mut cells: Vec<u64> = Vec::new();
    for (i, &v) in cube.data().iter().enumerate() {
        if v == 0 {
            continue;
        }
        let (x, y, z) = dims.coords(i);
        let p = [x as f64, y as f64, z as f64];
        let coord = |e: &[f64; 3]| {
            let s = p[0] * e[0] + p[1] * e[1] + p[2] * e[2];
            (s + 0.5).floor() as i64
        };
        let s = coord(&unit[0]);
        let t = coord(&unit[1]);
        cells.push(((s as i32 as u32 as u64) << 32) | (t as i32 as u32 as u64));
    }
    cells.sort_unstable();
    cells.dedup();
    cells.len() as f64
}

/// Raw `(a, b, c)` of one cube.
pub fn cube_features(cube: &BinaryVolume) -> [f64; 3] {
    let v = foreground_volume(cube);
    if v == 0.0 {
        return [0.0; 3];
    }
    let a = surface_area(cube) / v;
    let areas: Vec<f64> = DIRECTIONS.iter().map(|d| projection_area_of(cube, d)).collect();
    [a, v, sample_sd(&areas)]
}

/// The 3-variate field over the `g^3` cube lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureGrid {
    pub g: usize,
    pub raw: Vec<[f64; 3]>,
    pub standardized: Vec<[f64; 3]>,
    /// Grid-wide sample deviation of each raw channel.
    pub scale: [f64; 3],
}

impl FeatureGrid {
    /// Standardizes raw triples given in cube-index order.
    pub fn from_raw(g: usize, raw: Vec<[f64; 3]>) -> Result<Self> {
        if raw.len() != g * g * g {
            return Err(Error::Input(format!(
                "feature grid with g = {g} needs {} cubes, got {}",
                g * g * g,
                raw.len()
            )));
        }
        let scale = [0, 1, 2].map(|k| {
            let col: Vec<f64> = raw.iter().map(|t| t[k]).collect();
            sample_sd(&col)
        });
        let standardized = raw
            .iter()
            .map(|t| [0, 1, 2].map(|k| if scale[k] > 0.0 { t[k] / scale[k] } else { 0.0 }))
            .collect();
        Ok(FeatureGrid {
            g,
            raw,
            standardized,
            scale,
        })
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    #[inline]
    pub fn index(&self, q: [usize; 3]) -> usize {
        q[0] + self.g * (q[1] + self.g * q[2])
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("# g={}\nqx,qy,qz,a,b,c,a_std,b_std,c_std\n", self.g);
        for (i, (r, s)) in self.raw.iter().zip(&self.standardized).enumerate() {
            let g = self.g;
            let q = [i % g, (i / g) % g, i / (g * g)];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                q[0] + 1,
                q[1] + 1,
                q[2] + 1,
                r[0],
                r[1],
                r[2],
                s[0],
                s[1],
                s[2]
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(Error::at(path))
    }

    /// Reads a grid written by [`FeatureGrid::write_csv`]; standardization is recomputed.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(Error::at(path))?;
        let bad = |line: usize, msg: &str| Error::Input(format!("{}:{line}: {msg}", path.display()));
        let mut g = None;
        let mut rows: Vec<([usize; 3], [f64; 3])> = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(Error::at(path))?;
            let line = line.trim();
            if let Some(v) = line.strip_prefix("# g=") {
                g = Some(v.parse::<usize>().map_err(|_| bad(n + 1, "bad grid header"))?);
                continue;
            }
            if line.is_empty() || line.starts_with('#') || line.starts_with("qx") {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() < 6 {
                return Err(bad(n + 1, "expected at least 6 columns"));
            }
            let q = [0, 1, 2].map(|k| f[k].parse::<usize>());
            let r = [3, 4, 5].map(|k| f[k].parse::<f64>());
            match (q, r) {
                ([Ok(a), Ok(b), Ok(c)], [Ok(x), Ok(y), Ok(z)]) if a > 0 && b > 0 && c > 0 => {
                    rows.push(([a - 1, b - 1, c - 1], [x, y, z]))
                }
                _ => return Err(bad(n + 1, "unparsable row")),
            }
        }
        let g = g.ok_or_else(|| Error::Input(format!("{}: missing `# g=` header", path.display())))?;
        let mut raw = vec![[f64::NAN; 3]; g * g * g];
        for (q, r) in rows {
            if q.iter().any(|&v| v >= g) {
                return Err(Error::Input(format!(
                    "{}: cube index {q:?} outside g = {g}",
                    path.display()
                )));
            }
            raw[q[0] + g * (q[1] + g * q[2])] = r;
        }
        if raw.iter().any(|r| r[0].is_nan()) {
            return Err(Error::Input(format!("{}: grid is incomplete", path.display())));
        }
        FeatureGrid::from_raw(g, raw)
    }
}

/// Partitions `vol` and computes the feature field.
pub fn feature_grid(vol: &BinaryVolume, g: usize) -> Result<FeatureGrid> {
    let part = partition(vol, g)?;
    let raw: Vec<[f64; 3]> = (0..part.num_cubes())
        .into_par_iter()
        .map(|i| cube_features(&part.cube_of(vol, part.cube_coords(i))))
        .collect();
    FeatureGrid::from_raw(g, raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cube(n: usize, f: impl FnMut(usize, usize, usize) -> bool) -> BinaryVolume {
        BinaryVolume::from_fn(Dims::cube(n).unwrap(), f)
    }

    #[test]
    fn partition_sizes() {
        let p = CubePartition::new(Dims::cube(256).unwrap(), 16).unwrap();
        assert_eq!(p.cube, Dims::cube(16).unwrap());
        assert_eq!(p.remainder, [0; 3]);
        assert!(p.size_warning().is_none());
        let p = CubePartition::new(Dims::cube(600).unwrap(), 30).unwrap();
        assert_eq!(p.cube, Dims::cube(20).unwrap());
        let p = CubePartition::new(Dims::cube(257).unwrap(), 16).unwrap();
        assert_eq!(p.cube, Dims::cube(16).unwrap());
        assert_eq!(p.remainder, [1; 3]);
        assert!(CubePartition::new(Dims::cube(8).unwrap(), 9).is_err());
        assert!(CubePartition::new(Dims::cube(8).unwrap(), 1).is_err());
        assert!(CubePartition::new(Dims::cube(32).unwrap(), 8)
            .unwrap()
            .size_warning()
            .is_some());
    }

    #[test]
    fn cube_index_round_trip() {
        let p = CubePartition::new(Dims::cube(30).unwrap(), 5).unwrap();
        for i in 0..p.num_cubes() {
            assert_eq!(p.cube_index(p.cube_coords(i)), i);
        }
    }

    #[test]
    fn surface_examples() {
        assert_eq!(surface_area(&cube(5, |x, y, z| (x, y, z) == (2, 2, 2))), 6.0);
        assert_eq!(surface_area(&BinaryVolume::ones(Dims::cube(16).unwrap())), 1536.0);
        assert_eq!(surface_area(&BinaryVolume::zeros(Dims::cube(4).unwrap())), 0.0);
        // two face-adjacent voxels share one face pair
        assert_eq!(
            surface_area(&cube(4, |x, y, z| y == 1 && z == 1 && (1..3).contains(&x))),
            10.0
        );
    }

    #[test]
    fn volume_examples() {
        assert_eq!(foreground_volume(&BinaryVolume::zeros(Dims::cube(16).unwrap())), 0.0);
        assert_eq!(foreground_volume(&BinaryVolume::ones(Dims::cube(16).unwrap())), 4096.0);
        assert_eq!(foreground_volume(&cube(3, |x, y, z| (x, y, z) == (0, 2, 1))), 1.0);
    }

    #[test]
    fn direction_set_is_valid() {
        for (i, d) in DIRECTIONS.iter().enumerate() {
            let dot = |a: [i32; 3], b: [i32; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
            assert_eq!(dot(d.dir, d.basis[0]), 0);
            assert_eq!(dot(d.dir, d.basis[1]), 0);
            assert_eq!(dot(d.basis[0], d.basis[1]), 0);
            for e in &DIRECTIONS[i + 1..] {
                assert_ne!(e.dir, d.dir);
                assert_ne!(e.dir, d.dir.map(|v| -v));
            }
        }
        assert!(direction([2, 0, 0]).is_err());
        assert_eq!(direction([0, 0, -1]).unwrap().dir, [0, 0, 1]);
    }

    #[test]
    fn projection_examples() {
        let single = cube(4, |x, y, z| (x, y, z) == (1, 2, 3));
        for d in &DIRECTIONS {
            assert_eq!(projection_area(&single, d.dir).unwrap(), 1.0);
        }
        let column = cube(6, |x, y, z| x == 2 && y == 2 && z < 5);
        assert_eq!(projection_area(&column, [0, 0, 1]).unwrap(), 1.0);
        assert_eq!(projection_area(&column, [1, 0, 0]).unwrap(), 5.0);
        let plate = cube(16, |_, _, z| z == 7);
        assert_eq!(projection_area(&plate, [0, 0, 1]).unwrap(), 256.0);
        assert!(projection_area(&plate, [1, 2, 3]).is_err());
    }

    #[test]
    fn single_voxel_and_empty_features() {
        assert_eq!(cube_features(&cube(6, |_, _, _| false)), [0.0; 3]);
        assert_eq!(
            cube_features(&cube(6, |x, y, z| (x, y, z) == (3, 3, 3))),
            [6.0, 1.0, 0.0]
        );
    }

    #[test]
    fn plate_is_more_anisotropic_than_ball() {
        let plate = cube(20, |_, _, z| z == 10);
        // digital ball of about the same volume (400 voxels)
        let ball = cube(20, |x, y, z| {
            let d2 = [x, y, z].iter().map(|&v| (v as f64 - 9.5).powi(2)).sum::<f64>();
            d2 <= 4.6f64.powi(2)
        });
        let vb = foreground_volume(&ball);
        assert!((vb - 400.0).abs() < 80.0, "{vb}");
        let cp = cube_features(&plate)[2];
        let cb = cube_features(&ball)[2];
        assert!(cp > cb, "plate {cp} ball {cb}");
    }

    #[test]
    fn identical_cubes_standardize_to_zero() {
        let vol = BinaryVolume::from_fn(Dims::cube(12).unwrap(), |x, y, z| {
            x % 4 == 1 && y % 4 == 2 && z % 4 == 0
        });
        let f = feature_grid(&vol, 3).unwrap();
        assert!(f.raw.iter().all(|r| *r == f.raw[0]));
        assert!(f.standardized.iter().all(|s| *s == [0.0; 3]));
    }

    #[test]
    fn csv_round_trip() {
        let vol = BinaryVolume::from_fn(Dims::cube(12).unwrap(), |x, y, z| (x * 7 + y * 3 + z) % 5 == 0);
        let f = feature_grid(&vol, 3).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        f.write_csv(&p).unwrap();
        assert_eq!(FeatureGrid::read_csv(&p).unwrap(), f);
        std::fs::write(&p, "# g=2\n1,1,1,1,2,3\n").unwrap();
        assert!(FeatureGrid::read_csv(&p).is_err());
    }

    proptest! {
        #[test]
        fn surface_density_is_translation_invariant(
            pts in proptest::collection::vec((0usize..5, 0usize..5, 0usize..5), 1..30),
            shift in (0usize..5, 0usize..5, 0usize..5),
        ) {
            let base = cube(10, |x, y, z| pts.contains(&(x, y, z)));
            let moved = cube(10, |x, y, z| {
                x >= shift.0 && y >= shift.1 && z >= shift.2 && pts.contains(&(x - shift.0, y - shift.1, z - shift.2))
            });
            prop_assert_eq!(cube_features(&base)[0], cube_features(&moved)[0]);
            prop_assert_eq!(foreground_volume(&base), foreground_volume(&moved));
        }

        #[test]
        fn standardized_channels_have_unit_sd(
            raw in proptest::collection::vec(proptest::array::uniform3(0.0f64..50.0), 27),
        ) {
            let f = FeatureGrid::from_raw(3, raw).unwrap();
            for k in 0..3 {
                let col: Vec<f64> = f.standardized.iter().map(|s| s[k]).collect();
                prop_assert!((sample_sd(&col) - 1.0).abs() < 1e-9);
            }
        }
    }
}
