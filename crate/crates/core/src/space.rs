//! Phase spaces: flat tori `[0,1)^d` and axis-aligned Euclidean boxes.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseSpace {
    /// The flat torus `R^d / Z^d`, coordinates stored in `[0, 1)`.
    Torus { dim: usize },
    /// A compact box `lo <= x <= hi` with the Euclidean metric.
    Box { lo: Vec<f64>, hi: Vec<f64> },
}

impl PhaseSpace {
    pub fn torus(dim: usize) -> Self {
        PhaseSpace::Torus { dim }
    }

    pub fn boxed(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(LabError::InvalidArgument(
                "box bounds must be nonempty and of equal length".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(l, h)| !(l < h)) {
            return Err(LabError::InvalidArgument("box requires lo < hi".into()));
        }
        Ok(PhaseSpace::Box { lo, hi })
    }

    pub fn dim(&self) -> usize {
        match self {
            PhaseSpace::Torus { dim } => *dim,
            PhaseSpace::Box { lo, .. } => lo.len(),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, PhaseSpace::Torus { .. })
    }

    /// Per-axis lower corner and side length.
    pub fn extent(&self, axis: usize) -> (f64, f64) {
        match self {
            PhaseSpace::Torus { .. } => (0.0, 1.0),
            PhaseSpace::Box { lo, hi } => (lo[axis], hi[axis] - lo[axis]),
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            PhaseSpace::Torus { .. } => x.iter().all(|&v| (0.0..1.0).contains(&v)),
            PhaseSpace::Box { lo, hi } => x
                .iter()
                .zip(lo.iter().zip(hi))
                .all(|(&v, (&l, &h))| v >= l && v <= h),
        }
    }

    /// Reduce torus coordinates into `[0, 1)`. No-op on boxes.
    pub fn wrap(&self, x: &mut [f64]) {
        if self.is_torus() {
            for v in x.iter_mut() {
                *v = wrap_unit(*v);
            }
        }
    }

    /// Displacement `b - a`; on the torus the minimal-image representative in `[-1/2, 1/2)`.
    pub fn displacement(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        for ((o, &ai), &bi) in out.iter_mut().zip(a).zip(b) {
            let mut d = bi - ai;
            if self.is_torus() {
                d -= d.round();
            }
            *o = d;
        }
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let torus = self.is_torus();
        a.iter()
            .zip(b)
            .map(|(&ai, &bi)| {
                let mut d = bi - ai;
                if torus {
                    d = min_image(d);
                }
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }

    /// Maps unit-cube coordinates `u in [0,1)^d` onto the space.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        (0..self.dim())
            .map(|k| {
                let (lo, len) = self.extent(k);
                lo + len * u[k]
            })
            .collect()
    }
}

#[inline]
pub fn wrap_unit(v: f64) -> f64 {
    let w = v - v.floor();
    // `-1e-20 - floor(-1e-20)` rounds to 1.0
    if w >= 1.0 {
        0.0
    } else {
        w
    }
}

#[inline]
pub fn min_image(d: f64) -> f64 {
    let r = d - d.round();
    r.abs().min(1.0 - r.abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_keeps_unit_interval() {
        let s = PhaseSpace::torus(2);
        let mut x = [1.25, -1e-20];
        s.wrap(&mut x);
        assert_eq!(x, [0.25, 0.0]);
        assert!(s.contains(&x));
    }

    #[test]
    fn torus_distance_wraps() {
        let s = PhaseSpace::torus(2);
        let d = s.distance(&[0.05, 0.5], &[0.95, 0.5]);
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(s.distance(&[0.3, 0.7], &[0.3, 0.7]), 0.0);
    }

    #[test]
    fn box_rejects_bad_bounds() {
        assert!(PhaseSpace::boxed(vec![0.0, 1.0], vec![1.0, 1.0]).is_err());
        let b = PhaseSpace::boxed(vec![-1.0], vec![1.0]).unwrap();
        assert!(b.contains(&[1.0]));
        assert!(!b.contains(&[1.0 + 1e-9]));
    }

    #[test]
    fn displacement_is_minimal_image() {
        let s = PhaseSpace::torus(1);
        let mut out = [0.0];
        s.displacement(&[0.9], &[0.1], &mut out);
        assert!((out[0] - 0.2).abs() < 1e-12);
    }
}
