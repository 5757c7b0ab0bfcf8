//! Hessian-seeded percolation: region growing from candidate crack voxels
//! under a rising gray-value threshold.
//!
//! Every connected component of the candidate mask `H` is grown on its own
//! inside the window `E = {b : |b - c|_inf <= M}` around the component's
//! rounded centroid `c`:
//!
//! 1. `P` starts as the component and `t = max_P I + eps`.
//! 2. A sweep examines every neighbor `q ∈ E \ P` of `P` and admits, all at
//!    once, those with `I(q) < t`.
//! 3. `t <- max(max(max_P I, t) + eps, t)`.
//! 4. Sweeps repeat until `P` touches the window boundary `|b - c|_inf = M`,
//!    no candidates remain, or a sweep admits nothing while `t` cannot rise.
//!
//! The cluster is accepted as crack when at least a fraction `r` of `P`
//! consists of candidate-like voxels: members of `H`, or voxels already
//! darker than the initial threshold `t0`. Rejected clusters contribute
//! nothing to the output; their voxels examined at most `tau_max` times are
//! reported as material.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::components::{connected_components, offset, Connectivity};
use crate::error::{Error, Result};
use crate::volume::{check_dims, BinaryVolume, Dims, ScalarVolume};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PercolationParams {
    /// Threshold increment per sweep, in gray units of the volume.
    pub epsilon: f64,
    /// Half-width `M` of the growth window.
    pub window: usize,
    /// Acceptance ratio `r`.
    pub ratio: f64,
    pub tau_max: u32,
    #[serde(default)]
    pub connectivity: Connectivity,
}

impl Default for PercolationParams {
    fn default() -> Self {
        PercolationParams {
            epsilon: 0.01,
            window: 3,
            ratio: 0.6,
            tau_max: 4,
            connectivity: Connectivity::TwentySix,
        }
    }
}

impl PercolationParams {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Parameter("percolation window M must be >= 1".into()));
        }
        if !(self.ratio > 0.0 && self.ratio <= 1.0) {
            return Err(Error::Parameter(format!(
                "percolation ratio r must lie in (0, 1], got {}",
                self.ratio
            )));
        }
        if self.tau_max < 1 {
            return Err(Error::Parameter("tau_max must be >= 1".into()));
        }
        if !self.epsilon.is_finite() {
            return Err(Error::Parameter("epsilon must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum StopReason {
    ReachedBoundary,
    /// Every voxel of the window reachable from `P` has been admitted.
    Exhausted,
    /// A sweep admitted nothing and the threshold could not rise.
    Stalled,
}

/// Growth record of one seed component.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClusterTrace {
    pub seed_size: usize,
    pub centroid: [usize; 3],
    /// Threshold at the start of every sweep, plus the final value.
    pub thresholds: Vec<f64>,
    pub size: usize,
    pub ratio: f64,
    pub accepted: bool,
    pub stop: StopReason,
}

#[derive(Clone, Debug)]
pub struct PercolationOutcome {
    /// Union of accepted clusters.
    pub mask: BinaryVolume,
    /// Voxels of rejected clusters examined at most `tau_max` times.
    pub material: BinaryVolume,
    /// Voxels of rejected clusters examined more than `tau_max` times.
    pub undecided: usize,
    pub clusters: Vec<ClusterTrace>,
}

struct Grown {
    trace: ClusterTrace,
    members: Vec<usize>,
    visits: Vec<(usize, u32)>,
}

struct Window {
    centre: [usize; 3],
    lo: [usize; 3],
    hi: [usize; 3],
    half: usize,
}

impl Window {
    fn new(dims: Dims, centre: [usize; 3], half: usize) -> Self {
        let n = dims.as_array();
        let lo = [0, 1, 2].map(|a| centre[a].saturating_sub(half));
        let hi = [0, 1, 2].map(|a| (centre[a] + half).min(n[a] - 1));
        Window { centre, lo, hi, half }
    }

    fn contains(&self, p: [usize; 3]) -> bool {
        (0..3).all(|a| p[a] >= self.lo[a] && p[a] <= self.hi[a])
    }

    fn on_boundary(&self, p: [usize; 3]) -> bool {
        (0..3).map(|a| p[a].abs_diff(self.centre[a])).max().unwrap_or(0) == self.half
    }
}

fn centroid(dims: Dims, comp: &[usize]) -> [usize; 3] {
    let mut sum = [0.0f64; 3];
    for &i in comp {
        let (x, y, z) = dims.coords(i);
        sum[0] += x as f64;
        sum[1] += y as f64;
        sum[2] += z as f64;
    }
    let n = comp.len() as f64;
    sum.map(|s| (s / n).round() as usize)
}

fn next_threshold(t: f64, max_p: f64, eps: f64) -> f64 {
    (max_p.max(t) + eps).max(t)
}

fn grow(image: &ScalarVolume, seeds: &BinaryVolume, comp: &[usize], prm: &PercolationParams) -> Grown {
    let dims = image.dims();
    let gray = image.data();
    let offsets = prm.connectivity.offsets();
    let centre = centroid(dims, comp);
    let window = Window::new(dims, centre, prm.window);

    let mut members: HashSet<usize> = comp.iter().copied().collect();
    let mut order: Vec<usize> = comp.to_vec();
    let mut max_p = comp.iter().map(|&i| gray[i] as f64).fold(f64::NEG_INFINITY, f64::max);
    let t0 = max_p + prm.epsilon;
    let mut t = t0;
    let mut thresholds = Vec::new();
    let mut visits: std::collections::HashMap<usize, u32> = std::collections::HashMap::new();

    let touches = |set: &[usize]| {
        set.iter().any(|&i| {
            let (x, y, z) = dims.coords(i);
            let p = [x, y, z];
            window.contains(p) && window.on_boundary(p)
        })
    };

    let mut reached = touches(&order);
    let stop = loop {
        thresholds.push(t);
        if reached {
            break StopReason::ReachedBoundary;
        }
        let mut candidates: Vec<usize> = Vec::new();
        let mut seen = HashSet::new();
        for &i in &order {
            let (x, y, z) = dims.coords(i);
            for d in &offsets {
                if let Some(q) = offset(dims, [x, y, z], *d) {
                    if !window.contains(q) {
                        continue;
                    }
                    let j = dims.index(q[0], q[1], q[2]);
                    if !members.contains(&j) && seen.insert(j) {
                        candidates.push(j);
                    }
                }
            }
        }
        if candidates.is_empty() {
            break StopReason::Exhausted;
        }
        candidates.sort_unstable();
        for &c in &candidates {
            *visits.entry(c).or_insert(0) += 1;
        }
        let admitted: Vec<usize> = candidates.iter().copied().filter(|&j| (gray[j] as f64) < t).collect();
        if admitted.is_empty() {
            let next = next_threshold(t, max_p, prm.epsilon);
            if next <= t {
                break StopReason::Stalled;
            }
            t = next;
            continue;
        }
        for &j in &admitted {
            members.insert(j);
            max_p = max_p.max(gray[j] as f64);
        }
        order.extend_from_slice(&admitted);
        reached = touches(&admitted);
        t = next_threshold(t, max_p, prm.epsilon);
    };

    let hits = order
        .iter()
        .filter(|&&i| seeds.data()[i] != 0 || (gray[i] as f64) < t0)
        .count();
    let ratio = hits as f64 / order.len() as f64;
    let accepted = ratio >= prm.ratio;
    order.sort_unstable();
    let mut visits: Vec<(usize, u32)> = visits.into_iter().collect();
    visits.sort_unstable();
    Grown {
        trace: ClusterTrace {
            seed_size: comp.len(),
            centroid: centre,
            thresholds,
            size: order.len(),
            ratio,
            accepted,
            stop,
        },
        members: order,
        visits,
    }
}

/// Full percolation run with per-cluster traces.
pub fn percolate(
    image: &ScalarVolume,
    candidates: &BinaryVolume,
    prm: &PercolationParams,
) -> Result<PercolationOutcome> {
    prm.validate()?;
    check_dims(image.dims(), candidates.dims())?;
    let dims = image.dims();
    let comps = connected_components(candidates, prm.connectivity);
    let grown: Vec<Grown> = comps.par_iter().map(|c| grow(image, candidates, c, prm)).collect();

    let mut mask = BinaryVolume::zeros(dims);
    let mut tau = vec![0u32; 0];
    let mut rejected_members = Vec::new();
    for g in &grown {
        if g.trace.accepted {
            for &i in &g.members {
                mask.data_mut()[i] = 1;
            }
        } else {
            rejected_members.extend_from_slice(&g.members);
        }
    }
    if !rejected_members.is_empty() {
        tau = vec![0u32; dims.len()];
        for g in &grown {
            for &(i, n) in &g.visits {
                tau[i] += n;
            }
        }
    }
    let mut material = BinaryVolume::zeros(dims);
    let mut undecided = 0;
    rejected_members.sort_unstable();
    rejected_members.dedup();
    for i in rejected_members {
        if mask.data()[i] != 0 {
            continue;
        }
        if tau[i] <= prm.tau_max {
            material.data_mut()[i] = 1;
        } else {
            undecided += 1;
        }
    }
    Ok(PercolationOutcome {
        mask,
        material,
        undecided,
        clusters: grown.into_iter().map(|g| g.trace).collect(),
    })
}

/// Union of accepted percolation clusters grown from `candidates`.
pub fn hessian_percolation(
    image: &ScalarVolume,
    candidates: &BinaryVolume,
    prm: &PercolationParams,
) -> Result<BinaryVolume> {
    Ok(percolate(image, candidates, prm)?.mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(ratio: f64) -> PercolationParams {
        PercolationParams {
            epsilon: 0.05,
            window: 3,
            ratio,
            tau_max: 4,
            connectivity: Connectivity::TwentySix,
        }
    }

    #[test]
    fn empty_candidates_give_empty_output() {
        let dims = Dims::cube(5).unwrap();
        let img = ScalarVolume::filled(dims, 0.5);
        let out = hessian_percolation(&img, &BinaryVolume::zeros(dims), &params(0.5)).unwrap();
        assert_eq!(out.count_ones(), 0);
    }

    #[test]
    fn dimension_mismatch_is_an_input_error() {
        let img = ScalarVolume::filled(Dims::cube(5).unwrap(), 0.5);
        let h = BinaryVolume::zeros(Dims::cube(4).unwrap());
        assert!(matches!(
            hessian_percolation(&img, &h, &params(0.5)),
            Err(Error::Input(_))
        ));
    }

    #[test]
    fn invalid_params() {
        let mut p = params(0.5);
        p.ratio = 0.0;
        assert!(p.validate().is_err());
        p = params(0.5);
        p.window = 0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn threshold_never_decreases_with_negative_epsilon() {
        assert_eq!(next_threshold(0.5, 0.2, -0.1), 0.5);
        assert!((next_threshold(0.5, 0.9, -0.1) - 0.8).abs() < 1e-12);
        assert!((next_threshold(0.5, 0.2, 0.1) - 0.6).abs() < 1e-12);
    }

    #[test]
    fn large_component_touching_window_boundary_stops_immediately() {
        let dims = Dims::cube(12).unwrap();
        let img = ScalarVolume::filled(dims, 0.5);
        let h = BinaryVolume::from_fn(dims, |x, y, z| y == 6 && z == 6 && (1..11).contains(&x));
        let out = percolate(&img, &h, &params(0.6)).unwrap();
        assert_eq!(out.clusters.len(), 1);
        assert_eq!(out.clusters[0].stop, StopReason::ReachedBoundary);
        assert_eq!(out.mask, h);
    }

    fn plane_volume() -> ScalarVolume {
        ScalarVolume::from_fn(Dims::cube(9).unwrap(), |_, _, z| if z == 4 { 0.1 } else { 0.9 })
    }

    #[test]
    fn central_patch_grows_over_the_in_window_plane() {
        let img = plane_volume();
        let dims = img.dims();
        let h = BinaryVolume::from_fn(dims, |x, y, z| z == 4 && (3..=5).contains(&x) && (3..=5).contains(&y));
        let out = percolate(&img, &h, &params(0.5)).unwrap();
        let want = BinaryVolume::from_fn(dims, |x, y, z| z == 4 && (1..=7).contains(&x) && (1..=7).contains(&y));
        assert_eq!(out.mask, want);
        let c = &out.clusters[0];
        assert_eq!(c.centroid, [4, 4, 4]);
        assert_eq!(c.size, 49);
        assert_eq!(c.stop, StopReason::ReachedBoundary);
        // 9 -> 25 -> 49 voxels in two sweeps
        assert_eq!(c.thresholds.len(), 3);
        assert!((c.thresholds[0] - 0.15).abs() < 1e-6);
    }

    #[test]
    fn isolated_dark_voxel_is_rejected() {
        let mut img = plane_volume();
        let dims = img.dims();
        let at = dims.index(4, 4, 1);
        img.data_mut()[at] = 0.1;
        let h = BinaryVolume::from_fn(dims, |x, y, z| (x, y, z) == (4, 4, 1));
        let out = percolate(&img, &h, &params(0.6)).unwrap();
        assert_eq!(out.mask.count_ones(), 0);
        let c = &out.clusters[0];
        assert!(!c.accepted);
        assert_eq!(c.stop, StopReason::ReachedBoundary);
        // window x,y in 1..=7, z in 0..=4 (clipped at the volume face)
        assert_eq!(c.size, 7 * 7 * 5);
        assert!(c.ratio < 0.6);
        // rejected voxels are material or undecided, never crack
        assert_eq!(out.material.count_ones() + out.undecided, c.size);
    }

    proptest! {
        #[test]
        fn invariants_on_random_volumes(
            gray in proptest::collection::vec(0.0f32..1.0, 343),
            seeds in proptest::collection::vec(proptest::bool::weighted(0.05), 343),
            eps in -0.05f64..0.2,
            ratio in 0.1f64..1.0,
        ) {
            let dims = Dims::cube(7).unwrap();
            let img = ScalarVolume::new(dims, gray).unwrap();
            let h = BinaryVolume::from_flags(dims, seeds);
            let prm = PercolationParams { epsilon: eps, window: 2, ratio, tau_max: 3, connectivity: Connectivity::TwentySix };
            let out = percolate(&img, &h, &prm).unwrap();
            for c in &out.clusters {
                for w in c.thresholds.windows(2) {
                    prop_assert!(w[1] >= w[0]);
                }
                if c.accepted {
                    prop_assert!(c.ratio >= ratio);
                }
                prop_assert!(c.size <= c.seed_size + 125);
            }
            // Every seed voxel of an accepted cluster is in the output.
            let again = percolate(&img, &h, &prm).unwrap();
            prop_assert_eq!(&out.mask, &again.mask);
            // Material and crack labels never overlap.
            for (m, k) in out.material.data().iter().zip(out.mask.data()) {
                prop_assert!(!(*m == 1 && *k == 1));
            }
        }
    }
}
