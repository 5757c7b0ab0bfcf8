//! Connected-component labelling of binary volumes.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{BinaryVolume, Dims};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Six,
    #[default]
    TwentySix,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            6 => Ok(Connectivity::Six),
            26 => Ok(Connectivity::TwentySix),
            other => Err(Error::Parameter(format!("connectivity must be 6 or 26, got {other}"))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Six => 6,
            Connectivity::TwentySix => 26,
        }
    }
}

impl Connectivity {
    pub fn offsets(self) -> Vec<[isize; 3]> {
        let mut out = Vec::with_capacity(26);
        for dz in -1isize..=1 {
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let manhattan = dx.abs() + dy.abs() + dz.abs();
                    let keep = match self {
                        Connectivity::Six => manhattan == 1,
                        Connectivity::TwentySix => manhattan > 0,
                    };
                    if keep {
                        out.push([dx, dy, dz]);
                    }
                }
            }
        }
        out
    }
}

#[inline]
pub(crate) fn offset(dims: Dims, p: [usize; 3], d: [isize; 3]) -> Option<[usize; 3]> {
    let x = p[0] as isize + d[0];
    let y = p[1] as isize + d[1];
    let z = p[2] as isize + d[2];
    if x < 0 || y < 0 || z < 0 || x >= dims.nx as isize || y >= dims.ny as isize || z >= dims.nz as isize {
        None
    } else {
        Some([x as usize, y as usize, z as usize])
    }
}

/// Foreground components as lists of flat voxel indices, ordered by their
/// smallest index; voxels within a component are in ascending order.
pub fn connected_components(mask: &BinaryVolume, conn: Connectivity) -> Vec<Vec<usize>> {
    let dims = mask.dims();
    let offsets = conn.offsets();
    let mut seen = vec![false; dims.len()];
    let mut out = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..dims.len() {
        if mask.data()[start] == 0 || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            comp.push(i);
            let (x, y, z) = dims.coords(i);
            for d in &offsets {
                if let Some([a, b, c]) = offset(dims, [x, y, z], *d) {
                    let j = dims.index(a, b, c);
                    if mask.data()[j] != 0 && !seen[j] {
                        seen[j] = true;
                        queue.push_back(j);
                    }
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn diagonal_voxels_depend_on_connectivity() {
        let dims = Dims::cube(3).unwrap();
        let mut m = BinaryVolume::zeros(dims);
        m.set(0, 0, 0, true);
        m.set(1, 1, 1, true);
        m.set(2, 2, 0, true);
        assert_eq!(connected_components(&m, Connectivity::Six).len(), 3);
        let c26 = connected_components(&m, Connectivity::TwentySix);
        assert_eq!(c26.len(), 1);
        assert_eq!(c26[0].len(), 3);
    }

    #[test]
    fn offsets_counts() {
        assert_eq!(Connectivity::Six.offsets().len(), 6);
        assert_eq!(Connectivity::TwentySix.offsets().len(), 26);
        assert!(Connectivity::try_from(18).is_err());
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryVolume::zeros(Dims::cube(4).unwrap());
        assert!(connected_components(&m, Connectivity::TwentySix).is_empty());
    }
}
