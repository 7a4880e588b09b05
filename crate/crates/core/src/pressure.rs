//! Maximal `(delta, m)`-separated sets and the separated-set pressure
//! `(1/m) log sum_z exp(S_m phi^F(z))`.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::entropy::potential_along_orbit;
use crate::error::{LabError, Result};
use crate::space::PhaseSpace;
use crate::system::{check_point, SmoothSystem};
use crate::tangent::SplittingSource;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SeparatedSet {
    pub points: Vec<Vec<f64>>,
    pub delta: f64,
    pub m: usize,
    /// `S_m phi^F` per point, filled by [`pressure_estimate`].
    pub birkhoff_sums: Option<Vec<f64>>,
}

impl SeparatedSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn orbit_segment<S: SmoothSystem + ?Sized>(system: &S, x: &[f64], m: usize) -> Result<Vec<f64>> {
    check_point(system.space(), x)?;
    let d = x.len();
    let mut flat = Vec::with_capacity(d * m);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    for i in 0..m {
        flat.extend_from_slice(&cur);
        if i + 1 < m {
            system.apply_into(&cur, &mut next)?;
            if !system.space().contains(&next) {
                return Err(LabError::Escape { index: i + 1 });
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    Ok(flat)
}

/// Whether two cached orbit segments stay `delta`-close for all `m` steps.
fn bowen_close(space: &PhaseSpace, a: &[f64], b: &[f64], d: usize, delta: f64) -> bool {
    a.chunks_exact(d)
        .zip(b.chunks_exact(d))
        .all(|(p, q)| space.distance(p, q) < delta)
}

/// Bucket grid over initial positions with cells of side at least `delta`,
/// so a Bowen-close pair always lies in neighbouring buckets.
struct Buckets {
    cells: Vec<usize>,
    torus: bool,
    map: HashMap<Vec<usize>, Vec<usize>>,
}

impl Buckets {
    fn new(space: &PhaseSpace, delta: f64) -> Option<Self> {
        let cells: Vec<usize> = (0..space.dim())
            .map(|k| (space.extent(k).1 / delta).floor() as usize)
            .collect();
        // with fewer than three cells per axis neighbours wrap onto themselves
        if cells.iter().any(|&c| c < 3) {
            return None;
        }
        Some(Self {
            cells,
            torus: space.is_torus(),
            map: HashMap::new(),
        })
    }

    fn key(&self, space: &PhaseSpace, x: &[f64]) -> Vec<usize> {
        x.iter()
            .enumerate()
            .map(|(k, &v)| {
                let (lo, len) = space.extent(k);
                let c = ((v - lo) / len * self.cells[k] as f64).floor().max(0.0) as usize;
                c.min(self.cells[k] - 1)
            })
            .collect()
    }

    fn neighbours(&self, key: &[usize]) -> Vec<Vec<usize>> {
        let d = key.len();
        let mut out = Vec::with_capacity(3usize.pow(d as u32));
        for code in 0..3usize.pow(d as u32) {
            let mut rem = code;
            let mut k = Vec::with_capacity(d);
            let mut valid = true;
            for (axis, &c) in key.iter().enumerate() {
                let off = (rem % 3) as isize - 1;
                rem /= 3;
                let n = self.cells[axis] as isize;
                let mut v = c as isize + off;
                if self.torus {
                    v = v.rem_euclid(n);
                } else if v < 0 || v >= n {
                    valid = false;
                    break;
                }
                k.push(v as usize);
            }
            if valid {
                out.push(k);
            }
        }
        out
    }
}

/// Greedy scan in input order: keep a candidate iff it lies in no kept
/// point's `(delta, m)`-Bowen ball. The result is maximal within `candidates`.
pub fn greedy_separated_set<S: SmoothSystem + ?Sized>(
    candidates: &[Vec<f64>],
    system: &S,
    delta: f64,
    m: usize,
) -> Result<SeparatedSet> {
    if m == 0 || !(delta > 0.0) {
        return Err(LabError::InvalidArgument(format!("need m >= 1 and delta > 0 (m = {m}, delta = {delta})")));
    }
    let space = system.space();
    let d = space.dim();
    let segments: Vec<Vec<f64>> = candidates
        .par_iter()
        .map(|x| orbit_segment(system, x, m))
        .collect::<Result<_>>()?;

    let mut kept: Vec<usize> = Vec::new();
    match Buckets::new(space, delta) {
        Some(mut buckets) => {
            for (i, seg) in segments.iter().enumerate() {
                let key = buckets.key(space, &seg[..d]);
                let close = buckets.neighbours(&key).iter().any(|nk| {
                    buckets
                        .map
                        .get(nk)
                        .is_some_and(|ids| ids.iter().any(|&j| bowen_close(space, seg, &segments[j], d, delta)))
                });
                if !close {
                    buckets.map.entry(key).or_default().push(i);
                    kept.push(i);
                }
            }
        }
        None => {
            for (i, seg) in segments.iter().enumerate() {
                if !kept.iter().any(|&j| bowen_close(space, seg, &segments[j], d, delta)) {
                    kept.push(i);
                }
            }
        }
    }
    Ok(SeparatedSet {
        points: kept.iter().map(|&i| candidates[i].clone()).collect(),
        delta,
        m,
        birkhoff_sums: None,
    })
}

/// `(1/m) log sum exp(s_i)`, shifted by the maximum.
pub fn pressure_from_sums(sums: &[f64], m: usize) -> Result<f64> {
    if sums.is_empty() || m == 0 {
        return Err(LabError::InvalidArgument("pressure needs a nonempty set and m >= 1".into()));
    }
    let top = sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let acc: f64 = sums.iter().map(|s| (s - top).exp()).sum();
    Ok((top + acc.ln()) / m as f64)
}

/// Fills `set.birkhoff_sums` and returns the pressure.
pub fn pressure_estimate(set: &mut SeparatedSet, system: &dyn SmoothSystem, source: &dyn SplittingSource) -> Result<f64> {
    if set.is_empty() {
        return Err(LabError::InvalidArgument("empty separated set".into()));
    }
    let m = set.m;
    let sums: Vec<f64> = set
        .points
        .par_iter()
        .map(|z| {
            potential_along_orbit(system, z, m, source)
                .map(|v| v.iter().sum())
                .map_err(|e| match e {
                    e @ LabError::SplittingFailed { .. } => e,
                    other => LabError::SplittingFailed {
                        point: z.clone(),
                        source: Box::new(other),
                    },
                })
        })
        .collect::<Result<_>>()?;
    let p = pressure_from_sums(&sums, m)?;
    set.birkhoff_sums = Some(sums);
    Ok(p)
}

/// One row of a pressure curve.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PressurePoint {
    pub m: usize,
    pub size: usize,
    pub pressure: f64,
}

/// Pressure of maximal separated sets for each `m` in `ms`.
pub fn pressure_curve(
    candidates: &[Vec<f64>],
    system: &dyn SmoothSystem,
    source: &dyn SplittingSource,
    delta: f64,
    ms: &[usize],
) -> Result<Vec<PressurePoint>> {
    ms.iter()
        .map(|&m| {
            let mut set = greedy_separated_set(candidates, system, delta, m)?;
            let pressure = pressure_estimate(&mut set, system, source)?;
            Ok(PressurePoint {
                m,
                size: set.len(),
                pressure,
            })
        })
        .collect()
}

/// `count` points of the `R_d` low-discrepancy sequence (generalised golden
/// ratio) in `[0,1)^d`, mapped into the phase space.
pub fn r2_lattice(space: &PhaseSpace, count: usize) -> Vec<Vec<f64>> {
    let d = space.dim();
    // unique positive root of x^{d+1} = x + 1
    let mut g = 2.0f64;
    for _ in 0..100 {
        g = (1.0 + g).powf(1.0 / (d as f64 + 1.0));
    }
    let alpha: Vec<f64> = (1..=d).map(|k| (1.0 / g.powi(k as i32)).fract()).collect();
    (0..count)
        .map(|i| {
            let u: Vec<f64> = alpha.iter().map(|a| (0.5 + a * (i + 1) as f64).fract()).collect();
            space.from_unit(&u)
        })
        .collect()
}

/// CSV rows `m,size,pressure` with a versioned header comment.
pub fn write_pressure_csv<W: std::io::Write>(rows: &[PressurePoint], mut w: W) -> Result<()> {
    writeln!(w, "# gibbslab pressure_curve schema=1")?;
    writeln!(w, "m,size,pressure")?;
    for r in rows {
        writeln!(w, "{},{},{:.12e}", r.m, r.size, r.pressure)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::IdentityMap;
    use crate::systems::make_cat_map;
    use crate::tangent::ConstantSplitting;

    #[test]
    fn identity_circle_example() {
        let id = IdentityMap::new(PhaseSpace::torus(1));
        let c = vec![vec![0.0], vec![0.1], vec![0.2]];
        let set = greedy_separated_set(&c, &id, 0.15, 1).unwrap();
        assert_eq!(set.points, vec![vec![0.0], vec![0.2]]);
    }

    #[test]
    fn single_candidate_kept() {
        let cat = make_cat_map();
        let set = greedy_separated_set(&[vec![0.3, 0.3]], &cat, 0.05, 4).unwrap();
        assert_eq!(set.len(), 1);
    }

    #[test]
    fn bucketed_matches_brute_force() {
        let cat = make_cat_map();
        let cands = r2_lattice(cat.space(), 3000);
        let fast = greedy_separated_set(&cands, &cat, 0.05, 3).unwrap();
        let d = 2;
        let segs: Vec<Vec<f64>> = cands.iter().map(|x| orbit_segment(&cat, x, 3).unwrap()).collect();
        let mut kept: Vec<usize> = vec![];
        for i in 0..cands.len() {
            if !kept.iter().any(|&j| bowen_close(cat.space(), &segs[i], &segs[j], d, 0.05)) {
                kept.push(i);
            }
        }
        assert_eq!(fast.len(), kept.len());
    }

    #[test]
    fn closed_forms() {
        let cat = make_cat_map();
        let src = ConstantSplitting::from_splitting(&cat.eigen_splitting(&[0.0, 0.0], 1).unwrap());
        let mut one = greedy_separated_set(&[vec![0.2, 0.7]], &cat, 0.05, 1).unwrap();
        let p = pressure_estimate(&mut one, &cat, &src).unwrap();
        assert!((p + 0.962_423_650_119_206_9).abs() < 1e-12);
        let p2 = pressure_from_sums(&[-0.3, -0.3], 1).unwrap();
        assert!((p2 - (2f64.ln() - 0.3)).abs() < 1e-12);
    }

    #[test]
    fn logsumexp_shift_invariance() {
        let s = [1000.0, 999.0, 998.5];
        let p = pressure_from_sums(&s, 3).unwrap();
        let shifted: Vec<f64> = s.iter().map(|v| v - 1000.0).collect();
        assert!((p - (pressure_from_sums(&shifted, 3).unwrap() + 1000.0 / 3.0)).abs() < 1e-12);
    }

    #[test]
    fn lattice_in_unit_cube() {
        let pts = r2_lattice(&PhaseSpace::torus(2), 100);
        assert!(pts.iter().all(|p| p.iter().all(|v| (0.0..1.0).contains(v))));
    }
}
