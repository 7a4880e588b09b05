//! Differentiable self-maps, orbits and Jacobians.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::ode::VectorField;
use crate::space::PhaseSpace;

/// Central finite-difference step used when a system has no analytic Jacobian.
pub const FD_STEP: f64 = 1e-6;

/// A differentiable self-map of a phase space.
///
/// Implementations are immutable after construction and must be safe to share
/// across threads.
pub trait SmoothSystem: Send + Sync {
    fn space(&self) -> &PhaseSpace;

    fn label(&self) -> &str;

    fn dim(&self) -> usize {
        self.space().dim()
    }

    /// Writes `f(x)` into `out`. Torus outputs are wrapped into `[0,1)^d`.
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()>;

    /// Analytic Jacobian, if the system provides one.
    fn analytic_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// `f(x)` and `Df(x)` together. Flows override this to integrate the
    /// variational equation alongside the state.
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        self.apply_into(x, out)?;
        Ok(jacobian_at(self, x))
    }

    fn has_inverse(&self) -> bool {
        false
    }

    fn apply_inverse_into(&self, _x: &[f64], _out: &mut [f64]) -> Result<()> {
        Err(LabError::NoInverse(self.label().to_string()))
    }

    /// Sup of operator norms of `Df` and `Df^{-1}` when known.
    fn c1_norm_bound(&self) -> Option<f64> {
        None
    }

    /// The generating vector field and RK4 step, for time-one maps of flows.
    fn vector_field(&self) -> Option<(Arc<dyn VectorField>, f64)> {
        None
    }

    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out)?;
        Ok(out)
    }

    fn apply_inverse(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; x.len()];
        self.apply_inverse_into(x, &mut out)?;
        Ok(out)
    }
}

impl<S: SmoothSystem + ?Sized> SmoothSystem for Arc<S> {
    fn space(&self) -> &PhaseSpace {
        (**self).space()
    }
    fn label(&self) -> &str {
        (**self).label()
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).apply_into(x, out)
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        (**self).analytic_jacobian(x)
    }
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        (**self).apply_with_jacobian(x, out)
    }
    fn has_inverse(&self) -> bool {
        (**self).has_inverse()
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        (**self).apply_inverse_into(x, out)
    }
    fn c1_norm_bound(&self) -> Option<f64> {
        (**self).c1_norm_bound()
    }
    fn vector_field(&self) -> Option<(Arc<dyn VectorField>, f64)> {
        (**self).vector_field()
    }
}

/// `Df(x)`: analytic when available, otherwise central differences with [`FD_STEP`].
pub fn jacobian_at<S: SmoothSystem + ?Sized>(system: &S, x: &[f64]) -> DMatrix<f64> {
    system
        .analytic_jacobian(x)
        .unwrap_or_else(|| finite_difference_jacobian(system, x, FD_STEP))
}

/// Central finite differences; one-sided at box faces. Torus output
/// differences use the minimal image so wrapping does not pollute columns.
///
/// Evaluation failures yield NaN columns.
pub fn finite_difference_jacobian<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    h: f64,
) -> DMatrix<f64> {
    let d = x.len();
    let space = system.space();
    let mut jac = DMatrix::zeros(d, d);
    let mut xp = x.to_vec();
    let mut xm = x.to_vec();
    let mut fp = vec![0.0; d];
    let mut fm = vec![0.0; d];
    let mut diff = vec![0.0; d];
    for j in 0..d {
        xp.copy_from_slice(x);
        xm.copy_from_slice(x);
        let (mut hp, mut hm) = (h, h);
        if let PhaseSpace::Box { lo, hi } = space {
            if x[j] + h > hi[j] {
                hp = 0.0;
            }
            if x[j] - h < lo[j] {
                hm = 0.0;
            }
        }
        xp[j] += hp;
        xm[j] -= hm;
        space.wrap(&mut xp);
        space.wrap(&mut xm);
        let ok = system.apply_into(&xp, &mut fp).is_ok() && system.apply_into(&xm, &mut fm).is_ok();
        space.displacement(&fm, &fp, &mut diff);
        for i in 0..d {
            jac[(i, j)] = if ok { diff[i] / (hp + hm) } else { f64::NAN };
        }
    }
    jac
}

/// An orbit segment `x, f(x), ..., f^{n-1}(x)`.
#[derive(Clone, Debug)]
pub struct Orbit {
    pub points: Vec<Vec<f64>>,
    /// `jacobians[i] = Df(points[i])` when cached.
    pub jacobians: Option<Vec<DMatrix<f64>>>,
}

impl Orbit {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Iterates `n` points starting at `x`. Box spaces report the first escape.
pub fn iterate<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    n: usize,
    cache_jacobians: bool,
) -> Result<Orbit> {
    if n == 0 {
        return Err(LabError::InvalidArgument("orbit length must be >= 1".into()));
    }
    check_point(system.space(), x)?;
    let mut points = Vec::with_capacity(n);
    let mut jacobians = cache_jacobians.then(|| Vec::with_capacity(n));
    points.push(x.to_vec());
    let mut next = vec![0.0; x.len()];
    for i in 0..n {
        let last = i + 1 == n;
        let cur = &points[i];
        match jacobians.as_mut() {
            Some(js) => {
                if last {
                    js.push(jacobian_at(system, cur));
                    break;
                }
                js.push(system.apply_with_jacobian(cur, &mut next)?);
            }
            None => {
                if last {
                    break;
                }
                system.apply_into(cur, &mut next)?;
            }
        }
        if !system.space().contains(&next) {
            return Err(LabError::Escape { index: i + 1 });
        }
        points.push(next.clone());
    }
    Ok(Orbit { points, jacobians })
}

pub(crate) fn check_point(space: &PhaseSpace, x: &[f64]) -> Result<()> {
    if x.len() != space.dim() {
        return Err(LabError::DimensionMismatch {
            expected: space.dim(),
            got: x.len(),
        });
    }
    if !space.contains(x) {
        return Err(LabError::InvalidArgument(format!("point {x:?} is outside the phase space")));
    }
    Ok(())
}

/// The identity map of a phase space; the degenerate reference case for every estimator.
#[derive(Clone, Debug)]
pub struct IdentityMap {
    space: PhaseSpace,
}

impl IdentityMap {
    pub fn new(space: PhaseSpace) -> Self {
        Self { space }
    }
}

impl SmoothSystem for IdentityMap {
    fn space(&self) -> &PhaseSpace {
        &self.space
    }
    fn label(&self) -> &str {
        "identity"
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        Some(DMatrix::identity(x.len(), x.len()))
    }
    fn has_inverse(&self) -> bool {
        true
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        out.copy_from_slice(x);
        Ok(())
    }
    fn c1_norm_bound(&self) -> Option<f64> {
        Some(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_orbit_is_constant() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let orbit = iterate(&id, &[0.3, 0.7], 5, false).unwrap();
        assert_eq!(orbit.len(), 5);
        assert!(orbit.points.iter().all(|p| p == &vec![0.3, 0.7]));
    }

    #[test]
    fn zero_length_rejected() {
        let id = IdentityMap::new(PhaseSpace::torus(1));
        assert!(iterate(&id, &[0.1], 0, false).is_err());
    }

    struct Drift(PhaseSpace);
    impl SmoothSystem for Drift {
        fn space(&self) -> &PhaseSpace {
            &self.0
        }
        fn label(&self) -> &str {
            "drift"
        }
        fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
            out[0] = x[0] + 0.4;
            Ok(())
        }
    }

    #[test]
    fn box_escape_reports_first_index() {
        let s = Drift(PhaseSpace::boxed(vec![0.0], vec![1.0]).unwrap());
        match iterate(&s, &[0.1], 10, false) {
            Err(LabError::Escape { index }) => assert_eq!(index, 3),
            other => panic!("expected escape, got {other:?}"),
        }
    }

    #[test]
    fn finite_differences_one_sided_at_box_face() {
        let s = Drift(PhaseSpace::boxed(vec![0.0], vec![1.0]).unwrap());
        let j = finite_difference_jacobian(&s, &[1.0], FD_STEP);
        assert!((j[(0, 0)] - 1.0).abs() < 1e-8);
    }
}
