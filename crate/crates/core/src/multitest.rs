//! Scan statistics over cubic windows of the feature field, empirical-null
//! p-values, Benjamini-Hochberg rejection and cube-level vote aggregation.

use std::fmt::{self, Write as _};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::FeatureGrid;
use crate::volume::{BinaryVolume, Dims};

/// Axis-aligned window of side `u` on the cube lattice; `anchor` is 0-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ScanWindow {
    pub anchor: [usize; 3],
    pub u: usize,
}

impl ScanWindow {
    pub fn contains(&self, q: [usize; 3]) -> bool {
        (0..3).all(|a| q[a] >= self.anchor[a] && q[a] < self.anchor[a] + self.u)
    }

    pub fn cells(&self) -> usize {
        self.u * self.u * self.u
    }
}

/// All `(g - u + 1)^3` windows, anchors in lexicographic `(a, b, c)` order.
pub fn enumerate_windows(g: usize, u: usize) -> Result<Vec<ScanWindow>> {
    if u < 1 || u > g {
        return Err(Error::Parameter(format!("window side u = {u} must lie in 1..={g}")));
    }
    let n = g - u + 1;
    let mut out = Vec::with_capacity(n * n * n);
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                out.push(ScanWindow { anchor: [a, b, c], u });
            }
        }
    }
    Ok(out)
}

/// Vector norm applied to the difference of means.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Norm {
    P(f64),
    #[default]
    Max,
}

impl Norm {
    pub fn apply(self, v: [f64; 3]) -> f64 {
        match self {
            Norm::Max => v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
            Norm::P(1.0) => v.iter().map(|x| x.abs()).sum(),
            Norm::P(2.0) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Norm::P(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl fmt::Display for Norm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Norm::Max => f.write_str("inf"),
            Norm::P(p) => write!(f, "{p}"),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "max" | "Inf" | "infinity" => Ok(Norm::Max),
            other => match other.parse::<f64>() {
                Ok(p) if p >= 1.0 && p.is_finite() => Ok(Norm::P(p)),
                _ => Err(Error::Parameter(format!(
                    "norm must be a number >= 1 or `inf`, got `{other}`"
                ))),
            },
        }
    }
}

impl Serialize for Norm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Norm::Max => s.serialize_str("inf"),
            Norm::P(p) => s.serialize_f64(*p),
        }
    }
}

impl<'de> Deserialize<'de> for Norm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => p.to_string().parse(),
            Raw::Text(s) => s.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

/// Inclusive prefix sums of the standardized field for O(1) window sums.
pub struct CusumScanner<'a> {
    field: &'a FeatureGrid,
    prefix: Vec<[f64; 3]>,
    total: [f64; 3],
}

impl<'a> CusumScanner<'a> {
    pub fn new(field: &'a FeatureGrid) -> Self {
        let g = field.g;
        let n = g + 1;
        let at = |x: usize, y: usize, z: usize| x + n * (y + n * z);
        let mut prefix = vec![[0.0; 3]; n * n * n];
        for z in 0..g {
            for y in 0..g {
                for x in 0..g {
                    let v = field.standardized[field.index([x, y, z])];
                    let mut s = [0.0; 3];
                    for k in 0..3 {
                        s[k] = v[k]
                            + prefix[at(x, y + 1, z + 1)][k]
                            + prefix[at(x + 1, y, z + 1)][k]
                            + prefix[at(x + 1, y + 1, z)][k]
                            - prefix[at(x, y, z + 1)][k]
                            - prefix[at(x, y + 1, z)][k]
                            - prefix[at(x + 1, y, z)][k]
                            + prefix[at(x, y, z)][k];
                    }
                    prefix[at(x + 1, y + 1, z + 1)] = s;
                }
            }
        }
        let total = prefix[at(g, g, g)];
        CusumScanner { field, prefix, total }
    }

    fn block_sum(&self, w: &ScanWindow) -> [f64; 3] {
        let n = self.field.g + 1;
        let at = |x: usize, y: usize, z: usize| x + n * (y + n * z);
        let [x0, y0, z0] = w.anchor;
        let (x1, y1, z1) = (x0 + w.u, y0 + w.u, z0 + w.u);
        let p = &self.prefix;
        [0, 1, 2].map(|k| {
            p[at(x1, y1, z1)][k] - p[at(x0, y1, z1)][k] - p[at(x1, y0, z1)][k] - p[at(x1, y1, z0)][k]
                + p[at(x0, y0, z1)][k]
                + p[at(x0, y1, z0)][k]
                + p[at(x1, y0, z0)][k]
                - p[at(x0, y0, z0)][k]
        })
    }

    /// `T = ||mean inside - mean outside||`.
    pub fn statistic(&self, w: &ScanWindow, norm: Norm) -> Result<f64> {
        let g = self.field.g;
        if (0..3).any(|a| w.anchor[a] + w.u > g) {
            return Err(Error::Parameter(format!("window {w:?} exceeds the g = {g} lattice")));
        }
        let n = self.field.len();
        let m = w.cells();
        if m >= n {
            return Err(Error::Parameter(
                "window covers the whole grid; the complement is empty".into(),
            ));
        }
        let inside = self.block_sum(w);
        let diff = [0, 1, 2].map(|k| inside[k] / m as f64 - (self.total[k] - inside[k]) / (n - m) as f64);
        Ok(norm.apply(diff))
    }

    pub fn scan(&self, windows: &[ScanWindow], norm: Norm) -> Result<Vec<f64>> {
        windows.par_iter().map(|w| self.statistic(w, norm)).collect()
    }
}

/// Single-window CUSUM statistic.
pub fn cusum(field: &FeatureGrid, w: &ScanWindow, norm: Norm) -> Result<f64> {
    CusumScanner::new(field).statistic(w, norm)
}

/// Identity of the configuration a null was calibrated under.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullMeta {
    pub g: usize,
    pub u: usize,
    pub norm: Norm,
    /// Hash of the binarization and feature settings.
    pub config: String,
}

impl NullMeta {
    pub fn check(&self, want: &NullMeta) -> Result<()> {
        let mut diffs = Vec::new();
        if self.g != want.g {
            diffs.push(format!("g {} vs {}", self.g, want.g));
        }
        if self.u != want.u {
            diffs.push(format!("u {} vs {}", self.u, want.u));
        }
        if self.norm != want.norm {
            diffs.push(format!("norm {} vs {}", self.norm, want.norm));
        }
        if self.config != want.config {
            diffs.push(format!("config {} vs {}", self.config, want.config));
        }
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(Error::Calibration(format!(
                "null does not match the query ({})",
                diffs.join(", ")
            )))
        }
    }
}

/// Sorted CUSUM values of a crack-free calibration field.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalNull {
    pub meta: NullMeta,
    values: Vec<f64>,
}

impl EmpiricalNull {
    pub fn new(meta: NullMeta, mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Calibration("empirical null is empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Calibration("empirical null contains non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalNull { meta, values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `#{null <= t}`.
    pub fn count_le(&self, t: f64) -> usize {
        self.values.partition_point(|&v| v <= t)
    }

    /// `#{null >= t}`.
    pub fn count_ge(&self, t: f64) -> usize {
        self.values.len() - self.values.partition_point(|&v| v < t)
    }

    pub fn to_csv(&self) -> String {
        let m = &self.meta;
        let mut out = format!(
            "# g={}\n# u={}\n# norm={}\n# config={}\n# n={}\nT\n",
            m.g,
            m.u,
            m.norm,
            m.config,
            self.values.len()
        );
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(Error::at(path))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(Error::at(path))?;
        let bad = |msg: String| Error::Calibration(format!("{}: {msg}", path.display()));
        let (mut g, mut u, mut norm, mut config, mut n) = (None, None, None, None, None);
        let mut values = Vec::new();
        for line in BufReader::new(file).lines() {
            let line = line.map_err(Error::at(path))?;
            let line = line.trim();
            if let Some(kv) = line.strip_prefix('#') {
                let Some((k, v)) = kv.trim().split_once('=') else {
                    continue;
                };
                let v = v.trim();
                match k.trim() {
                    "g" => g = v.parse::<usize>().ok(),
                    "u" => u = v.parse::<usize>().ok(),
                    "norm" => norm = v.parse::<Norm>().ok(),
                    "config" => config = Some(v.to_string()),
                    "n" => n = v.parse::<usize>().ok(),
                    _ => {}
                }
                continue;
            }
            if line.is_empty() || line == "T" {
                continue;
            }
            values.push(line.parse::<f64>().map_err(|_| bad(format!("bad value `{line}`")))?);
        }
        let meta = NullMeta {
            g: g.ok_or_else(|| bad("missing g".into()))?,
            u: u.ok_or_else(|| bad("missing u".into()))?,
            norm: norm.ok_or_else(|| bad("missing norm".into()))?,
            config: config.ok_or_else(|| bad("missing config".into()))?,
        };
        if let Some(n) = n {
            if n != values.len() {
                return Err(bad(format!("header says {n} values, found {}", values.len())));
            }
        }
        EmpiricalNull::new(meta, values)
    }

    /// Equal-width histogram `(lower edge, upper edge, count)`.
    pub fn histogram(&self, bins: usize) -> Vec<(f64, f64, usize)> {
        let bins = bins.max(1);
        let lo = self.values[0];
        let hi = *self.values.last().unwrap();
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        let mut counts = vec![0usize; bins];
        for &v in &self.values {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        counts
            .into_iter()
            .enumerate()
            .map(|(i, c)| (lo + i as f64 * width, lo + (i + 1) as f64 * width, c))
            .collect()
    }
}

/// CUSUM values of all side-`u` windows of a calibration field.
pub fn build_null(field: &FeatureGrid, u: usize, norm: Norm, config: &str) -> Result<EmpiricalNull> {
    let windows = enumerate_windows(field.g, u)?;
    let values = CusumScanner::new(field).scan(&windows, norm)?;
    EmpiricalNull::new(
        NullMeta {
            g: field.g,
            u,
            norm,
            config: config.to_string(),
        },
        values,
    )
}

/// How a statistic is turned into a p-value against the null sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueRule {
    /// `1 - F(T)` with the right-continuous empirical distribution; may be 0.
    Ecdf,
    /// `(1 + #{null >= T}) / (n + 1)`; never 0.
    #[default]
    AddOne,
}

impl FromStr for PValueRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ecdf" => Ok(PValueRule::Ecdf),
            "add_one" | "add-one" => Ok(PValueRule::AddOne),
            other => Err(Error::Parameter(format!("unknown p-value rule `{other}`"))),
        }
    }
}

pub fn p_value(t: f64, null: &EmpiricalNull, rule: PValueRule) -> f64 {
    let n = null.len() as f64;
    match rule {
        PValueRule::Ecdf => 1.0 - null.count_le(t) as f64 / n,
        PValueRule::AddOne => (1.0 + null.count_ge(t) as f64) / (n + 1.0),
    }
}

pub fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Step-up rejection: reject the `k` smallest p-values for the largest `k`
/// with `p_(k) <= k alpha / m`.
pub fn benjamini_hochberg(pvals: &[f64], alpha: f64) -> Result<Vec<bool>> {
    check_alpha(alpha)?;
    if let Some(p) = pvals.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Parameter(format!("p-value {p} outside [0, 1]")));
    }
    let m = pvals.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]));
    let k = (1..=m)
        .rev()
        .find(|&i| pvals[order[i - 1]] <= i as f64 * alpha / m as f64)
        .unwrap_or(0);
    let mut reject = vec![false; m];
    for &i in &order[..k] {
        reject[i] = true;
    }
    Ok(reject)
}

/// Flags cube `q` when the +1/-1 votes of the windows containing it sum to >= 0.
pub fn aggregate(rejected: &[bool], g: usize, u: usize) -> Result<BinaryVolume> {
    let windows = enumerate_windows(g, u)?;
    if windows.len() != rejected.len() {
        return Err(Error::Input(format!(
            "{} decisions for {} windows",
            rejected.len(),
            windows.len()
        )));
    }
    let dims = Dims::cube(g)?;
    let mut votes = vec![0i64; dims.len()];
    for (w, &r) in windows.iter().zip(rejected) {
        let v = if r { 1 } else { -1 };
        let [a, b, c] = w.anchor;
        for z in c..c + u {
            for y in b..b + u {
                for x in a..a + u {
                    votes[dims.index(x, y, z)] += v;
                }
            }
        }
    }
    Ok(BinaryVolume::from_flags(dims, votes.into_iter().map(|s| s >= 0)))
}

/// Per-window results and the aggregated cube mask.
#[derive(Clone, Debug)]
pub struct TestReport {
    pub g: usize,
    pub u: usize,
    pub alpha: f64,
    pub windows: Vec<ScanWindow>,
    pub statistics: Vec<f64>,
    pub pvalues: Vec<f64>,
    pub rejected: Vec<bool>,
    pub cubes: BinaryVolume,
}

impl TestReport {
    pub fn rejections(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }

    /// CSV with 1-based anchors and decisions as +1/-1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("a,b,c,u,T,p,R\n");
        for i in 0..self.windows.len() {
            let w = &self.windows[i];
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                w.anchor[0] + 1,
                w.anchor[1] + 1,
                w.anchor[2] + 1,
                w.u,
                self.statistics[i],
                self.pvalues[i],
                if self.rejected[i] { 1 } else { -1 }
            );
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(Error::at(path))
    }
}

/// Scans `field`, assigns p-values against `null` and applies BH at `alpha`.
///
/// `expect` is the configuration of the query; a null calibrated under a
/// different one is refused.
pub fn detect(
    field: &FeatureGrid,
    null: &EmpiricalNull,
    expect: &NullMeta,
    alpha: f64,
    rule: PValueRule,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if expect.g != field.g {
        return Err(Error::Input(format!(
            "field has g = {}, query expects {}",
            field.g, expect.g
        )));
    }
    null.meta.check(expect)?;
    let windows = enumerate_windows(field.g, expect.u)?;
    let statistics = CusumScanner::new(field).scan(&windows, expect.norm)?;
    let pvalues: Vec<f64> = statistics.iter().map(|&t| p_value(t, null, rule)).collect();
    let rejected = benjamini_hochberg(&pvalues, alpha)?;
    let cubes = aggregate(&rejected, field.g, expect.u)?;
    Ok(TestReport {
        g: field.g,
        u: expect.u,
        alpha,
        windows,
        statistics,
        pvalues,
        rejected,
        cubes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_grid(g: usize, seed: u64) -> FeatureGrid {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = (0..g * g * g)
            .map(|_| [rng.random(), rng.random::<f64>() * 10.0, rng.random()])
            .collect();
        FeatureGrid::from_raw(g, raw).unwrap()
    }

    fn brute(field: &FeatureGrid, w: &ScanWindow) -> f64 {
        let g = field.g;
        let (mut si, mut so, mut ni, mut no) = ([0.0; 3], [0.0; 3], 0.0, 0.0);
        for z in 0..g {
            for y in 0..g {
                for x in 0..g {
                    let v = field.standardized[field.index([x, y, z])];
                    if w.contains([x, y, z]) {
                        (0..3).for_each(|k| si[k] += v[k]);
                        ni += 1.0;
                    } else {
                        (0..3).for_each(|k| so[k] += v[k]);
                        no += 1.0;
                    }
                }
            }
        }
        (0..3).map(|k| (si[k] / ni - so[k] / no).abs()).fold(0.0, f64::max)
    }

    fn meta(g: usize, u: usize) -> NullMeta {
        NullMeta {
            g,
            u,
            norm: Norm::Max,
            config: "x".into(),
        }
    }

    #[test]
    fn window_counts() {
        assert_eq!(enumerate_windows(16, 3).unwrap().len(), 2744);
        assert_eq!(enumerate_windows(25, 3).unwrap().len(), 12167);
        assert_eq!(enumerate_windows(30, 3).unwrap().len(), 21952);
        assert_eq!(enumerate_windows(4, 4).unwrap().len(), 1);
        assert!(enumerate_windows(3, 4).is_err());
        let w = enumerate_windows(3, 2).unwrap();
        assert_eq!(w[0].anchor, [0, 0, 0]);
        assert_eq!(w[1].anchor, [0, 0, 1]);
        assert_eq!(w[7].anchor, [1, 1, 1]);
    }

    #[test]
    fn cusum_on_indicator_field() {
        let g = 5;
        let w = ScanWindow {
            anchor: [1, 2, 0],
            u: 2,
        };
        let mut grid = FeatureGrid::from_raw(g, vec![[0.0; 3]; 125]).unwrap();
        for z in 0..g {
            for y in 0..g {
                for x in 0..g {
                    if w.contains([x, y, z]) {
                        let i = grid.index([x, y, z]);
                        grid.standardized[i] = [1.0, 0.0, 0.0];
                    }
                }
            }
        }
        assert!((cusum(&grid, &w, Norm::Max).unwrap() - 1.0).abs() < 1e-15);
        let constant = FeatureGrid::from_raw(g, vec![[2.0, 3.0, 4.0]; 125]).unwrap();
        assert_eq!(cusum(&constant, &w, Norm::Max).unwrap(), 0.0);
        assert!(cusum(&constant, &ScanWindow { anchor: [0; 3], u: 5 }, Norm::Max).is_err());
    }

    #[test]
    fn cusum_matches_brute_force() {
        for seed in 0..5 {
            let f = random_grid(6, seed);
            let scan = CusumScanner::new(&f);
            for w in enumerate_windows(6, 2).unwrap() {
                assert!((scan.statistic(&w, Norm::Max).unwrap() - brute(&f, &w)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn norms() {
        assert_eq!(Norm::Max.apply([1.0, -3.0, 2.0]), 3.0);
        assert_eq!(Norm::P(1.0).apply([1.0, -3.0, 2.0]), 6.0);
        assert!((Norm::P(2.0).apply([3.0, 4.0, 0.0]) - 5.0).abs() < 1e-15);
        assert!((Norm::P(3.0).apply([1.0, 1.0, 1.0]) - 3f64.cbrt()).abs() < 1e-15);
        assert_eq!("inf".parse::<Norm>().unwrap(), Norm::Max);
        assert!("0.5".parse::<Norm>().is_err());
        let n: Norm = serde_json::from_str("2").unwrap();
        assert_eq!(n, Norm::P(2.0));
        let n: Norm = serde_json::from_str("\"inf\"").unwrap();
        assert_eq!(n, Norm::Max);
    }

    #[test]
    fn p_value_examples() {
        let null = EmpiricalNull::new(meta(4, 2), vec![4.0, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(p_value(2.5, &null, PValueRule::Ecdf), 0.5);
        assert_eq!(p_value(9.0, &null, PValueRule::Ecdf), 0.0);
        assert_eq!(p_value(0.5, &null, PValueRule::Ecdf), 1.0);
        assert_eq!(p_value(9.0, &null, PValueRule::AddOne), 0.2);
        assert_eq!(p_value(0.5, &null, PValueRule::AddOne), 1.0);
        assert_eq!(p_value(3.0, &null, PValueRule::AddOne), 0.6);
        assert!(EmpiricalNull::new(meta(4, 2), vec![]).is_err());
    }

    #[test]
    fn bh_examples() {
        assert_eq!(benjamini_hochberg(&[1.0; 4], 0.5).unwrap(), vec![false; 4]);
        let r = benjamini_hochberg(&[0.9, 0.01, 1.0, 0.3, 0.2], 0.5).unwrap();
        assert_eq!(r, vec![false, true, false, true, true]);
        assert!(benjamini_hochberg(&[0.1], 1.0).is_err());
        assert!(benjamini_hochberg(&[0.1], 0.0).is_err());
        assert!(benjamini_hochberg(&[1.5], 0.1).is_err());
        assert!(benjamini_hochberg(&[], 0.1).unwrap().is_empty());
    }

    #[test]
    fn aggregation_examples() {
        let n = enumerate_windows(4, 2).unwrap().len();
        assert_eq!(aggregate(&vec![true; n], 4, 2).unwrap().count_ones(), 64);
        assert_eq!(aggregate(&vec![false; n], 4, 2).unwrap().count_ones(), 0);
        // corner cube (0,0,0) lies in exactly one window, the first; a cube in
        // two windows with one vote each way is flagged
        let g = 3;
        let windows = enumerate_windows(g, 2).unwrap();
        let mut r = vec![false; windows.len()];
        r[0] = true;
        let m = aggregate(&r, g, 2).unwrap();
        assert!(m.get(0, 0, 0));
        // (1,0,0) is in windows anchored at (0,0,0) and (1,0,0): votes +1, -1
        assert!(m.get(1, 0, 0));
        // (1,1,1) is in all 8 windows: +1 and seven -1
        assert!(!m.get(1, 1, 1));
        assert!(aggregate(&r[1..], g, 2).is_err());
    }

    #[test]
    fn null_persistence_and_mismatch() {
        let f = random_grid(5, 3);
        let null = build_null(&f, 2, Norm::Max, "abc").unwrap();
        assert_eq!(null.len(), 64);
        assert!(null.values().windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(build_null(&f, 2, Norm::Max, "abc").unwrap(), null);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("null.csv");
        null.write_csv(&p).unwrap();
        let back = EmpiricalNull::read_csv(&p).unwrap();
        assert_eq!(back, null);
        let mut want = null.meta.clone();
        want.u = 3;
        assert!(matches!(back.meta.check(&want), Err(Error::Calibration(_))));
        let mut want = null.meta.clone();
        want.config = "zzz".into();
        assert!(matches!(
            detect(&f, &back, &want, 0.1, PValueRule::Ecdf),
            Err(Error::Calibration(_))
        ));
        let constant = FeatureGrid::from_raw(5, vec![[1.0; 3]; 125]).unwrap();
        assert!(build_null(&constant, 2, Norm::Max, "c")
            .unwrap()
            .values()
            .iter()
            .all(|&v| v == 0.0));
        let h = null.histogram(8);
        assert_eq!(h.iter().map(|b| b.2).sum::<usize>(), 64);
    }

    #[test]
    fn detect_report_shape() {
        let f = random_grid(5, 1);
        let null = build_null(&random_grid(5, 2), 2, Norm::Max, "x").unwrap();
        let rep = detect(&f, &null, &meta(5, 2), 0.5, PValueRule::AddOne).unwrap();
        assert_eq!(rep.windows.len(), 64);
        assert_eq!(rep.cubes.dims(), Dims::cube(5).unwrap());
        let csv = rep.to_csv();
        assert_eq!(csv.lines().count(), 65);
        assert!(csv.lines().nth(1).unwrap().starts_with("1,1,1,2,"));
        assert!(detect(&f, &null, &meta(5, 2), 1.5, PValueRule::AddOne).is_err());
    }

    proptest! {
        #[test]
        fn cusum_is_shift_invariant(seed in 0u64..1000) {
            let f = random_grid(5, seed);
            let mut shifted = f.clone();
            for s in shifted.standardized.iter_mut() {
                s[0] += 5.0;
                s[1] -= 3.0;
                s[2] += 7.0;
            }
            let (a, b) = (CusumScanner::new(&f), CusumScanner::new(&shifted));
            for w in enumerate_windows(5, 2).unwrap() {
                prop_assert!((a.statistic(&w, Norm::Max).unwrap() - b.statistic(&w, Norm::Max).unwrap()).abs() < 1e-12);
            }
        }

        #[test]
        fn bh_is_monotone_in_alpha(p in proptest::collection::vec(0.0f64..=1.0, 1..40), a in 0.01f64..0.98, d in 0.0f64..0.5) {
            let b = (a + d).min(0.99);
            let lo = benjamini_hochberg(&p, a).unwrap();
            let hi = benjamini_hochberg(&p, b).unwrap();
            for (x, y) in lo.iter().zip(&hi) {
                prop_assert!(!x || *y);
            }
        }

        #[test]
        fn bh_single_test(p in 0.0f64..=1.0) {
            for i in 1..100 {
                let alpha = i as f64 / 100.0;
                prop_assert_eq!(benjamini_hochberg(&[p], alpha).unwrap()[0], p <= alpha);
            }
        }

        #[test]
        fn p_value_nonincreasing(vals in proptest::collection::vec(0.0f64..10.0, 1..50), t in 0.0f64..10.0, dt in 0.0f64..3.0) {
            let null = EmpiricalNull::new(meta(4, 2), vals).unwrap();
            for rule in [PValueRule::Ecdf, PValueRule::AddOne] {
                let (p1, p2) = (p_value(t, &null, rule), p_value(t + dt, &null, rule));
                prop_assert!(p2 <= p1);
                prop_assert!((0.0..=1.0).contains(&p1));
            }
        }

        #[test]
        fn unit_windows_aggregate_to_own_decision(r in proptest::collection::vec(proptest::bool::ANY, 27)) {
            let m = aggregate(&r, 3, 1).unwrap();
            let windows = enumerate_windows(3, 1).unwrap();
            for (w, &d) in windows.iter().zip(&r) {
                let [x, y, z] = w.anchor;
                prop_assert_eq!(m.get(x, y, z), d);
            }
        }
    }
}
