//! Grid histograms as computable stand-ins for Borel probability measures.

use std::io::Write;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::space::PhaseSpace;
use crate::system::{check_point, SmoothSystem};

/// Dyadic grid with `resolution` half-open cells per axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPartition {
    space: PhaseSpace,
    resolution: usize,
}

impl GridPartition {
    pub fn new(space: PhaseSpace, resolution: usize) -> Result<Self> {
        if resolution == 0 || !resolution.is_power_of_two() {
            return Err(LabError::InvalidArgument(format!(
                "grid resolution {resolution} is not a power of two"
            )));
        }
        let cells = (resolution as u128).checked_pow(space.dim() as u32);
        if cells.is_none_or(|c| c > u32::MAX as u128) {
            return Err(LabError::InvalidArgument(format!(
                "{resolution}^{} cells is too many",
                space.dim()
            )));
        }
        Ok(Self { space, resolution })
    }

    pub fn space(&self) -> &PhaseSpace {
        &self.space
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn levels(&self) -> usize {
        self.resolution.trailing_zeros() as usize
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.pow(self.dim() as u32)
    }

    /// Euclidean diameter of a cell.
    pub fn cell_diameter(&self) -> f64 {
        (0..self.dim())
            .map(|k| {
                let (_, len) = self.space.extent(k);
                let side = len / self.resolution as f64;
                side * side
            })
            .sum::<f64>()
            .sqrt()
    }

    fn axis_index(&self, axis: usize, v: f64) -> usize {
        let (lo, len) = self.space.extent(axis);
        let t = ((v - lo) / len * self.resolution as f64).floor();
        (t.max(0.0) as usize).min(self.resolution - 1)
    }

    /// Row-major cell id, axis 0 most significant. Cells are half-open
    /// `[a, b)` except the last cell of a box axis, which also takes `hi`.
    pub fn cell_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim() {
            return Err(LabError::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        if !self.space.contains(x) {
            return Err(LabError::InvalidArgument(format!("point {x:?} outside phase space")));
        }
        Ok(self.cell_index_unchecked(x))
    }

    pub(crate) fn cell_index_unchecked(&self, x: &[f64]) -> usize {
        x.iter()
            .enumerate()
            .fold(0, |acc, (k, &v)| acc * self.resolution + self.axis_index(k, v))
    }

    /// Per-axis coordinates of a cell id.
    pub fn cell_coords(&self, mut id: usize) -> Vec<usize> {
        let d = self.dim();
        let mut c = vec![0; d];
        for k in (0..d).rev() {
            c[k] = id % self.resolution;
            id /= self.resolution;
        }
        c
    }

    /// Centre of a cell.
    pub fn cell_center(&self, id: usize) -> Vec<f64> {
        self.cell_coords(id)
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let (lo, len) = self.space.extent(k);
                lo + len * (c as f64 + 0.5) / self.resolution as f64
            })
            .collect()
    }

    /// Distance from `x` to the nearest cell face (the partition boundary).
    pub fn boundary_distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let (lo, len) = self.space.extent(k);
                let side = len / self.resolution as f64;
                let t = (v - lo) / side;
                (t - t.round()).abs() * side
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn compatible(&self, other: &GridPartition) -> bool {
        self == other
    }
}

/// Sums a cell vector from `res` to `res / 2` cells per axis.
fn halve(values: &[f64], res: usize, d: usize) -> Vec<f64> {
    let half = res / 2;
    let mut out = vec![0.0; half.pow(d as u32)];
    for (id, &v) in values.iter().enumerate() {
        let mut rem = id;
        let mut coarse = 0;
        let mut scale = 1;
        for _ in 0..d {
            coarse += ((rem % res) / 2) * scale;
            rem /= res;
            scale *= half;
        }
        out[coarse] += v;
    }
    out
}

/// A probability histogram on a [`GridPartition`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMeasure {
    partition: GridPartition,
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Normalises nonnegative weights to total mass one.
    pub fn from_weights(partition: GridPartition, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != partition.cell_count() {
            return Err(LabError::DimensionMismatch {
                expected: partition.cell_count(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(LabError::InvalidArgument("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LabError::InvalidArgument("weights have zero total mass".into()));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { partition, weights })
    }

    pub fn from_counts(partition: GridPartition, counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(LabError::InvalidArgument("empty histogram".into()));
        }
        if counts.len() != partition.cell_count() {
            return Err(LabError::DimensionMismatch {
                expected: partition.cell_count(),
                got: counts.len(),
            });
        }
        let weights = counts.iter().map(|&c| c as f64 / total as f64).collect();
        Ok(Self { partition, weights })
    }

    pub fn uniform(partition: GridPartition) -> Self {
        let n = partition.cell_count();
        Self {
            partition,
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn dirac(partition: GridPartition, cell: usize) -> Result<Self> {
        let n = partition.cell_count();
        if cell >= n {
            return Err(LabError::InvalidArgument(format!("cell {cell} out of range 0..{n}")));
        }
        let mut weights = vec![0.0; n];
        weights[cell] = 1.0;
        Ok(Self { partition, weights })
    }

    pub fn partition(&self) -> &GridPartition {
        &self.partition
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn support_size(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    /// Weights after coarsening to `2^level` cells per axis.
    pub fn coarsened(&self, level: usize) -> Result<Vec<f64>> {
        let base = self.partition.levels();
        if level > base {
            return Err(LabError::InvalidArgument(format!(
                "level {level} finer than base resolution {}",
                self.partition.resolution()
            )));
        }
        let d = self.partition.dim();
        let mut res = self.partition.resolution();
        let mut v = self.weights.clone();
        while res > 1 << level {
            v = halve(&v, res, d);
            res /= 2;
        }
        Ok(v)
    }

    /// Total variation at base resolution, `(1/2) sum |a - b|`.
    pub fn total_variation(&self, other: &GridMeasure) -> Result<f64> {
        if !self.partition.compatible(&other.partition) {
            return Err(LabError::IncompatiblePartitions(format!(
                "{:?} vs {:?}",
                self.partition, other.partition
            )));
        }
        Ok(0.5 * self.weights.iter().zip(&other.weights).map(|(a, b)| (a - b).abs()).sum::<f64>())
    }

    /// Mixture `sum_i c_i mu_i` with `c_i = 1 / len`.
    pub fn average(measures: &[GridMeasure]) -> Result<Self> {
        let first = measures
            .first()
            .ok_or_else(|| LabError::InvalidArgument("no measures to average".into()))?;
        let mut w = vec![0.0; first.weights.len()];
        for m in measures {
            if !m.partition.compatible(&first.partition) {
                return Err(LabError::IncompatiblePartitions("ensemble members differ".into()));
            }
            for (a, b) in w.iter_mut().zip(&m.weights) {
                *a += b;
            }
        }
        let k = measures.len() as f64;
        w.iter_mut().for_each(|a| *a /= k);
        Ok(Self {
            partition: first.partition.clone(),
            weights: w,
        })
    }

    /// `cell,weight` rows for positive-weight cells.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "cell,weight")?;
        for (i, x) in self.weights.iter().enumerate() {
            if *x > 0.0 {
                writeln!(w, "{i},{x:e}")?;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> MeasureSummary {
        MeasureSummary {
            resolution: self.partition.resolution(),
            dim: self.partition.dim(),
            entropy: crate::entropy::shannon_entropy(self),
            support_size: self.support_size(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeasureSummary {
    pub resolution: usize,
    pub dim: usize,
    pub entropy: f64,
    pub support_size: usize,
}

/// Depth of the multiscale total-variation proxy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasureDistanceConfig {
    pub max_depth: usize,
}

impl MeasureDistanceConfig {
    pub fn new(max_depth: usize) -> Result<Self> {
        if max_depth == 0 {
            return Err(LabError::InvalidArgument("distance depth K must be >= 1".into()));
        }
        Ok(Self { max_depth })
    }

    /// Full depth for a partition, `K = log2(resolution)` (at least 1).
    pub fn for_partition(p: &GridPartition) -> Self {
        Self {
            max_depth: p.levels().max(1),
        }
    }
}

/// `d(a, b) = sum_{k=0..K} 2^{-k} TV_k(a, b)`, with `TV_k` the total variation
/// after coarsening to `2^k` cells per axis.
pub fn weak_star_distance(a: &GridMeasure, b: &GridMeasure, cfg: &MeasureDistanceConfig) -> Result<f64> {
    if !a.partition.compatible(&b.partition) {
        return Err(LabError::IncompatiblePartitions(format!(
            "resolution {} vs {} on {:?} vs {:?}",
            a.partition.resolution(),
            b.partition.resolution(),
            a.partition.space(),
            b.partition.space()
        )));
    }
    if cfg.max_depth == 0 {
        return Err(LabError::InvalidArgument("distance depth K must be >= 1".into()));
    }
    if cfg.max_depth > a.partition.levels() {
        return Err(LabError::InvalidArgument(format!(
            "depth K = {} needs resolution >= 2^K, have {}",
            cfg.max_depth,
            a.partition.resolution()
        )));
    }
    let diff: Vec<f64> = a.weights.iter().zip(&b.weights).map(|(x, y)| x - y).collect();
    Ok(multiscale_tv(diff, a.partition.resolution(), a.partition.dim(), cfg.max_depth))
}

/// `sum_{k<=K} 2^{-k} TV_k` of a signed cell vector at base resolution `res`.
pub(crate) fn multiscale_tv(mut diff: Vec<f64>, mut res: usize, d: usize, max_depth: usize) -> f64 {
    let mut level = res.trailing_zeros() as usize;
    let mut total = 0.0;
    loop {
        if level <= max_depth {
            let tv = 0.5 * diff.iter().map(|v| v.abs()).sum::<f64>();
            total += tv * 0.5f64.powi(level as i32);
        }
        if level == 0 {
            break;
        }
        diff = halve(&diff, res, d);
        res /= 2;
        level -= 1;
    }
    total
}

/// Histogram of `f^burn_in(x), ..., f^{n-1}(x)`.
pub fn empirical_measure_after<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    n: usize,
    burn_in: usize,
    partition: &GridPartition,
) -> Result<GridMeasure> {
    if n == 0 || burn_in >= n {
        return Err(LabError::InvalidArgument(format!("need n > burn_in (n = {n}, burn_in = {burn_in})")));
    }
    if partition.space() != system.space() {
        return Err(LabError::IncompatiblePartitions("partition built on a different phase space".into()));
    }
    check_point(system.space(), x)?;
    let mut counts = vec![0u64; partition.cell_count()];
    let mut cur = x.to_vec();
    let mut next = vec![0.0; x.len()];
    let space = system.space();
    for i in 0..n {
        if i >= burn_in {
            counts[partition.cell_index_unchecked(&cur)] += 1;
        }
        if i + 1 == n {
            break;
        }
        let stepped = system.apply_into(&cur, &mut next);
        if stepped.is_err() || !space.contains(&next) {
            return Err(LabError::PartialMeasure {
                completed: i + 1,
                requested: n,
            });
        }
        std::mem::swap(&mut cur, &mut next);
    }
    GridMeasure::from_counts(partition.clone(), &counts)
}

/// Histogram of the orbit `x, ..., f^{n-1}(x)`.
pub fn empirical_measure<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    n: usize,
    partition: &GridPartition,
) -> Result<GridMeasure> {
    empirical_measure_after(system, x, n, 0, partition)
}

/// `sum_{i<n} phi(f^i x)`.
pub fn birkhoff_sum<S, F>(system: &S, x: &[f64], n: usize, observable: F) -> Result<f64>
where
    S: SmoothSystem + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return Err(LabError::InvalidArgument("Birkhoff sums need n >= 1".into()));
    }
    check_point(system.space(), x)?;
    let mut cur = x.to_vec();
    let mut next = vec![0.0; x.len()];
    let mut sum = 0.0;
    for i in 0..n {
        let v = observable(&cur);
        if !v.is_finite() {
            return Err(LabError::NonFiniteObservable { index: i });
        }
        sum += v;
        if i + 1 < n {
            system.apply_into(&cur, &mut next)?;
            if !system.space().contains(&next) {
                return Err(LabError::Escape { index: i + 1 });
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(sum)
}

/// `(1/n) sum_{i<n} phi(f^i x)`.
pub fn birkhoff_average<S, F>(system: &S, x: &[f64], n: usize, observable: F) -> Result<f64>
where
    S: SmoothSystem + ?Sized,
    F: Fn(&[f64]) -> f64,
{
    Ok(birkhoff_sum(system, x, n, observable)? / n as f64)
}

/// Ensemble estimate of a physical measure.
#[derive(Clone, Debug)]
pub struct PhysicalEstimate {
    pub mean: GridMeasure,
    /// Max pairwise weak-* proxy distance among per-IC measures.
    pub dispersion: f64,
    pub members: Vec<GridMeasure>,
    /// Indices (into the IC list) of orbits that completed.
    pub survivors: Vec<usize>,
    /// Failed ICs and why.
    pub failures: Vec<(usize, LabError)>,
}

pub fn physical_measure_estimate<S: SmoothSystem + ?Sized>(
    system: &S,
    ics: &[Vec<f64>],
    n: usize,
    burn_in: usize,
    partition: &GridPartition,
    cfg: &MeasureDistanceConfig,
) -> Result<PhysicalEstimate> {
    if ics.len() < 2 {
        return Err(LabError::InvalidArgument("ensemble needs at least 2 initial conditions".into()));
    }
    if n <= burn_in {
        return Err(LabError::InvalidArgument(format!("need n > burn_in (n = {n}, burn_in = {burn_in})")));
    }
    let results: Vec<Result<GridMeasure>> = ics
        .par_iter()
        .map(|x| empirical_measure_after(system, x, n, burn_in, partition))
        .collect();
    let mut members = Vec::new();
    let mut survivors = Vec::new();
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(m) => {
                members.push(m);
                survivors.push(i);
            }
            Err(e) => {
                log::warn!("initial condition {i} failed: {e}");
                failures.push((i, e));
            }
        }
    }
    if members.len() < 2 {
        return Err(LabError::InsufficientSurvivors {
            survivors: members.len(),
        });
    }
    let pairs: Vec<(usize, usize)> = (0..members.len())
        .flat_map(|i| (i + 1..members.len()).map(move |j| (i, j)))
        .collect();
    let dists: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| weak_star_distance(&members[i], &members[j], cfg))
        .collect::<Result<_>>()?;
    let dispersion = dists.into_iter().fold(0.0, f64::max);
    let mean = GridMeasure::average(&members)?;
    Ok(PhysicalEstimate {
        mean,
        dispersion,
        members,
        survivors,
        failures,
    })
}

/// Uniform initial conditions in the phase space.
pub fn sample_uniform<R: Rng>(space: &PhaseSpace, count: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            let u: Vec<f64> = (0..space.dim()).map(|_| rng.gen::<f64>()).collect();
            space.from_unit(&u)
        })
        .collect()
}

/// Fraction of `points` within `eta` of a cell face.
pub fn boundary_mass(partition: &GridPartition, points: &[Vec<f64>], eta: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let near = points.iter().filter(|p| partition.boundary_distance(p) < eta).count();
    near as f64 / points.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::IdentityMap;
    use crate::systems::make_cat_map;

    fn circle(res: usize) -> GridPartition {
        GridPartition::new(PhaseSpace::torus(1), res).unwrap()
    }

    #[test]
    fn rejects_non_dyadic_resolution() {
        assert!(GridPartition::new(PhaseSpace::torus(2), 12).is_err());
    }

    #[test]
    fn cell_index_half_open() {
        let p = GridPartition::new(PhaseSpace::torus(2), 4).unwrap();
        assert_eq!(p.cell_index(&[0.0, 0.0]).unwrap(), 0);
        assert_eq!(p.cell_index(&[0.25, 0.0]).unwrap(), 4);
        assert_eq!(p.cell_index(&[0.249_999, 0.5]).unwrap(), 2);
        assert_eq!(p.cell_coords(6), vec![1, 2]);
        let b = GridPartition::new(PhaseSpace::boxed(vec![0.0], vec![1.0]).unwrap(), 4).unwrap();
        assert_eq!(b.cell_index(&[1.0]).unwrap(), 3);
    }

    #[test]
    fn two_level_dirac_distance() {
        let p = circle(2);
        let a = GridMeasure::dirac(p.clone(), 0).unwrap();
        let b = GridMeasure::dirac(p, 1).unwrap();
        let d = weak_star_distance(&a, &b, &MeasureDistanceConfig::new(1).unwrap()).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn uniform_vs_dirac_distance() {
        let p = circle(4);
        let a = GridMeasure::uniform(p.clone());
        let b = GridMeasure::dirac(p, 0).unwrap();
        let d = weak_star_distance(&a, &b, &MeasureDistanceConfig::new(2).unwrap()).unwrap();
        assert!((d - 0.4375).abs() < 1e-15);
    }

    #[test]
    fn distance_rejects_mismatch() {
        let a = GridMeasure::uniform(circle(4));
        let b = GridMeasure::uniform(circle(8));
        let cfg = MeasureDistanceConfig::new(2).unwrap();
        assert!(matches!(weak_star_distance(&a, &b, &cfg), Err(LabError::IncompatiblePartitions(_))));
        assert!(weak_star_distance(&a, &a, &MeasureDistanceConfig::new(3).unwrap()).is_err());
        assert!(MeasureDistanceConfig::new(0).is_err());
    }

    #[test]
    fn fixed_point_gives_dirac() {
        let cat = make_cat_map();
        let p = GridPartition::new(PhaseSpace::torus(2), 32).unwrap();
        let m = empirical_measure(&cat, &[0.0, 0.0], 100, &p).unwrap();
        assert_eq!(m.weights()[0], 1.0);
        assert_eq!(m.support_size(), 1);
    }

    #[test]
    fn identity_gives_dirac() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let p = GridPartition::new(PhaseSpace::torus(2), 8).unwrap();
        let m = empirical_measure(&id, &[0.3, 0.7], 17, &p).unwrap();
        assert_eq!(m.weights()[p.cell_index(&[0.3, 0.7]).unwrap()], 1.0);
    }

    #[test]
    fn birkhoff_constant_and_identity() {
        let cat = make_cat_map();
        assert_eq!(birkhoff_average(&cat, &[0.1, 0.2], 1000, |_| 1.0).unwrap(), 1.0);
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let v = birkhoff_average(&id, &[0.1, 0.2], 10, |x| x[0] * 3.0).unwrap();
        assert!((v - 0.3).abs() < 1e-15);
        let err = birkhoff_average(&cat, &[0.1, 0.2], 10, |x| if x[0] > 0.35 { f64::NAN } else { 0.0 });
        assert_eq!(err, Err(LabError::NonFiniteObservable { index: 1 }));
    }

    #[test]
    fn identity_ensemble_disperses() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let p = GridPartition::new(PhaseSpace::torus(2), 4).unwrap();
        let cfg = MeasureDistanceConfig::for_partition(&p);
        let est = physical_measure_estimate(&id, &[vec![0.1, 0.1], vec![0.9, 0.9]], 10, 0, &p, &cfg).unwrap();
        assert!(est.dispersion > 0.0);
        let direct = weak_star_distance(&est.members[0], &est.members[1], &cfg).unwrap();
        assert_eq!(est.dispersion, direct);
    }

    #[test]
    fn ensemble_needs_two() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let p = GridPartition::new(PhaseSpace::torus(2), 4).unwrap();
        let cfg = MeasureDistanceConfig::for_partition(&p);
        assert!(physical_measure_estimate(&id, &[vec![0.1, 0.1]], 10, 0, &p, &cfg).is_err());
    }

    #[test]
    fn escape_reports_prefix() {
        struct Drift(PhaseSpace);
        impl SmoothSystem for Drift {
            fn space(&self) -> &PhaseSpace {
                &self.0
            }
            fn label(&self) -> &str {
                "drift"
            }
            fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
                out[0] = x[0] + 0.3;
                Ok(())
            }
        }
        let s = Drift(PhaseSpace::boxed(vec![0.0], vec![1.0]).unwrap());
        let p = GridPartition::new(s.0.clone(), 4).unwrap();
        assert_eq!(
            empirical_measure(&s, &[0.0], 10, &p),
            Err(LabError::PartialMeasure { completed: 4, requested: 10 })
        );
    }

    #[test]
    fn csv_lists_support() {
        let p = circle(4);
        let m = GridMeasure::dirac(p, 2).unwrap();
        let mut buf = Vec::new();
        m.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cell,weight\n2,1e0\n");
    }
}
