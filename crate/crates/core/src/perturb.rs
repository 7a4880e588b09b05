//! C¹-small perturbation families `g = tau_eps ∘ f`.
//!
//! `tau_eps` is a displacement localised by the bump `psi(|y - c| / R)`; it is
//! the identity wherever `f(x)` lies outside the support ball, so `g(x) = f(x)`
//! holds bitwise there. The flow variant instead bumps the vector field and
//! re-integrates the time-one map.

use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::bump::{radial_bump, BUMP_MAX_SLOPE};
use crate::error::{LabError, Result};
use crate::ode::{time_one_map, VectorField};
use crate::space::PhaseSpace;
use crate::system::{jacobian_at, SmoothSystem};

/// Samples per axis of the determinant sign check.
pub const INVERTIBILITY_GRID: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PerturbationKind {
    /// `tau(y) = y + eps * psi * v`, `v` normalised.
    BumpTranslation { direction: Vec<f64> },
    /// `tau(y) = y + eps * psi * ((y - c)_along / R) * e_axis`.
    BumpShear { axis: usize, along: usize },
    /// `X_eps = X + eps * psi * v` for time-one maps of flows.
    OdeVectorFieldBump { direction: Vec<f64> },
}

#[derive(Clone)]
pub struct PerturbationFamily {
    base: Arc<dyn SmoothSystem>,
    kind: PerturbationKind,
    center: Vec<f64>,
    radius: f64,
    size: f64,
    c1_constant: f64,
}

impl std::fmt::Debug for PerturbationFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PerturbationFamily")
            .field("base", &self.base.label())
            .field("kind", &self.kind)
            .field("center", &self.center)
            .field("radius", &self.radius)
            .field("size", &self.size)
            .field("c1_constant", &self.c1_constant)
            .finish()
    }
}

impl PerturbationFamily {
    pub fn new(
        base: Arc<dyn SmoothSystem>,
        kind: PerturbationKind,
        center: Vec<f64>,
        radius: f64,
        size: f64,
    ) -> Result<Self> {
        let d = base.dim();
        if center.len() != d {
            return Err(LabError::DimensionMismatch {
                expected: d,
                got: center.len(),
            });
        }
        if !(radius > 0.0) || !(size >= 0.0) || !size.is_finite() {
            return Err(LabError::InvalidArgument(format!(
                "need radius > 0 and finite size >= 0 (radius {radius}, size {size})"
            )));
        }
        if base.space().is_torus() && radius >= 0.5 {
            return Err(LabError::InvalidArgument("torus bump radius must be < 1/2".into()));
        }
        let kind = normalise(kind, d)?;
        let c1_constant = match &kind {
            PerturbationKind::BumpTranslation { .. } | PerturbationKind::BumpShear { .. } => {
                let tau_slope = tau_slope_constant(&kind, radius);
                let df = base.c1_norm_bound().unwrap_or_else(|| sampled_df_norm(base.as_ref()));
                tau_slope * df
            }
            PerturbationKind::OdeVectorFieldBump { .. } => {
                if base.vector_field().is_none() {
                    return Err(LabError::InvalidArgument(
                        "vector-field bump requires a time-one map base".into(),
                    ));
                }
                0.0
            }
        };
        let mut family = Self {
            base,
            kind,
            center,
            radius,
            size,
            c1_constant,
        };
        if matches!(family.kind, PerturbationKind::OdeVectorFieldBump { .. }) {
            family.c1_constant = family.empirical_flow_constant()?;
        }
        Ok(family)
    }

    pub fn base(&self) -> &Arc<dyn SmoothSystem> {
        &self.base
    }

    pub fn kind(&self) -> &PerturbationKind {
        &self.kind
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn size(&self) -> f64 {
        self.size
    }

    /// `C` such that `sup |D g - D f| <= C * eps`.
    ///
    /// Analytic for the map kinds; for the vector-field bump it is measured on
    /// a fixed sample at a reference size and doubled.
    pub fn c1_constant(&self) -> f64 {
        self.c1_constant
    }

    pub fn with_size(&self, size: f64) -> Result<Self> {
        if !(size >= 0.0) || !size.is_finite() {
            return Err(LabError::InvalidArgument(format!("size {size} must be >= 0")));
        }
        let mut f = self.clone();
        f.size = size;
        Ok(f)
    }

    fn empirical_flow_constant(&self) -> Result<f64> {
        let reference = 1e-3;
        let probe = self.with_size(reference)?;
        let perturbed = perturb(&probe)?;
        let mut worst: f64 = 0.0;
        // samples inside and around the support
        let d = self.center.len();
        for k in 0..16 {
            let mut x = self.center.clone();
            for (i, xi) in x.iter_mut().enumerate() {
                let phase = (k * (i + 1)) as f64 * 0.618_033_988_749_894_9;
                *xi += self.radius * 1.5 * ((phase.fract() * 2.0) - 1.0) / (d as f64).sqrt();
            }
            if !self.base.space().contains(&x) {
                continue;
            }
            let a = jacobian_at(self.base.as_ref(), &x);
            let b = jacobian_at(perturbed.as_ref(), &x);
            worst = worst.max((b - a).norm() / reference);
        }
        Ok(2.0 * worst.max(f64::EPSILON))
    }
}

fn normalise(kind: PerturbationKind, d: usize) -> Result<PerturbationKind> {
    let unit = |v: Vec<f64>| -> Result<Vec<f64>> {
        if v.len() != d {
            return Err(LabError::DimensionMismatch {
                expected: d,
                got: v.len(),
            });
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 0.0) {
            return Err(LabError::InvalidArgument("direction must be nonzero".into()));
        }
        Ok(v.into_iter().map(|x| x / n).collect())
    };
    Ok(match kind {
        PerturbationKind::BumpTranslation { direction } => PerturbationKind::BumpTranslation {
            direction: unit(direction)?,
        },
        PerturbationKind::OdeVectorFieldBump { direction } => PerturbationKind::OdeVectorFieldBump {
            direction: unit(direction)?,
        },
        PerturbationKind::BumpShear { axis, along } => {
            if axis >= d || along >= d {
                return Err(LabError::InvalidArgument("shear axes out of range".into()));
            }
            PerturbationKind::BumpShear { axis, along }
        }
    })
}

/// `sup |D tau - I| / eps`.
fn tau_slope_constant(kind: &PerturbationKind, radius: f64) -> f64 {
    match kind {
        PerturbationKind::BumpTranslation { .. } => BUMP_MAX_SLOPE / radius,
        PerturbationKind::BumpShear { .. } => {
            // |grad psi| t + psi <= (1 - t^2)^2 (1 + 5 t^2), maximised by a dense scan
            let sup = (0..=100_000)
                .map(|i| {
                    let t = i as f64 / 100_000.0;
                    let s = 1.0 - t * t;
                    s * s * (1.0 + 5.0 * t * t)
                })
                .fold(0.0, f64::max);
            sup * (1.0 + 1e-6) / radius
        }
        PerturbationKind::OdeVectorFieldBump { .. } => 0.0,
    }
}

fn sampled_df_norm(system: &dyn SmoothSystem) -> f64 {
    let d = system.dim();
    let mut worst: f64 = 0.0;
    for k in 0..64 {
        let u: Vec<f64> = (0..d)
            .map(|i| ((k as f64 + 0.5) * (0.754_877_666 + 0.569_840_29 * i as f64)).fract())
            .collect();
        let x = system.space().from_unit(&u);
        let j = jacobian_at(system, &x);
        if j.iter().all(|v| v.is_finite()) {
            worst = worst.max(j.norm());
        }
    }
    worst
}

/// The post-composition `tau_eps ∘ f`.
#[derive(Clone)]
pub struct PostComposed {
    base: Arc<dyn SmoothSystem>,
    kind: PerturbationKind,
    center: Vec<f64>,
    radius: f64,
    size: f64,
    label: String,
}

impl PostComposed {
    /// Applies `tau` in place. Returns false (leaving `y` untouched) outside the support.
    fn displace(&self, y: &mut [f64]) -> bool {
        let d = y.len();
        let space = self.base.space();
        let mut v = vec![0.0; d];
        space.displacement(&self.center, y, &mut v);
        let mut grad = vec![0.0; d];
        let Some(psi) = radial_bump(&v, self.radius, &mut grad) else {
            return false;
        };
        match &self.kind {
            PerturbationKind::BumpTranslation { direction } => {
                for (yi, di) in y.iter_mut().zip(direction) {
                    *yi += self.size * psi * di;
                }
            }
            PerturbationKind::BumpShear { axis, along } => {
                y[*axis] += self.size * psi * v[*along] / self.radius;
            }
            PerturbationKind::OdeVectorFieldBump { .. } => unreachable!(),
        }
        space.wrap(y);
        true
    }

    /// `D tau(y)`.
    fn tau_jacobian(&self, y: &[f64]) -> DMatrix<f64> {
        let d = y.len();
        let mut jac = DMatrix::identity(d, d);
        let mut v = vec![0.0; d];
        self.base.space().displacement(&self.center, y, &mut v);
        let mut grad = vec![0.0; d];
        let Some(psi) = radial_bump(&v, self.radius, &mut grad) else {
            return jac;
        };
        match &self.kind {
            PerturbationKind::BumpTranslation { direction } => {
                for i in 0..d {
                    for j in 0..d {
                        jac[(i, j)] += self.size * direction[i] * grad[j];
                    }
                }
            }
            PerturbationKind::BumpShear { axis, along } => {
                for j in 0..d {
                    jac[(*axis, j)] += self.size * grad[j] * v[*along] / self.radius;
                }
                jac[(*axis, *along)] += self.size * psi / self.radius;
            }
            PerturbationKind::OdeVectorFieldBump { .. } => unreachable!(),
        }
        jac
    }

    /// Solves `tau(y) = z` by fixed-point iteration (a contraction below the threshold).
    fn undisplace(&self, z: &[f64]) -> Vec<f64> {
        let d = z.len();
        let space = self.base.space();
        let mut y = z.to_vec();
        for _ in 0..200 {
            let mut ty = y.clone();
            self.displace(&mut ty);
            let mut r = vec![0.0; d];
            space.displacement(&ty, z, &mut r);
            let err = r.iter().map(|x| x.abs()).fold(0.0, f64::max);
            for (yi, ri) in y.iter_mut().zip(&r) {
                *yi += ri;
            }
            space.wrap(&mut y);
            if err < 1e-15 {
                break;
            }
        }
        y
    }

    /// Rejects `eps` when `det D tau` is nonpositive anywhere on the sample grid.
    /// Since `det Dg(x) = det D tau(f x) det Df(x)` and `f` is onto, this is the
    /// sign-change check for `g` itself.
    fn check_invertible(&self) -> Result<()> {
        let space = self.base.space().clone();
        let d = space.dim();
        let n = INVERTIBILITY_GRID;
        let total = n.pow(d as u32);
        let mut u = vec![0.0; d];
        let mut v = vec![0.0; d];
        let mut grad = vec![0.0; d];
        for idx in 0..total {
            let mut rem = idx;
            for ui in u.iter_mut() {
                *ui = ((rem % n) as f64 + 0.5) / n as f64;
                rem /= n;
            }
            let y = space.from_unit(&u);
            space.displacement(&self.center, &y, &mut v);
            if radial_bump(&v, self.radius, &mut grad).is_none() {
                continue;
            }
            let det = self.tau_jacobian(&y).determinant();
            if !(det > 0.0) {
                return Err(LabError::PerturbationRejected {
                    size: self.size,
                    reason: format!("det D(perturbed) changes sign near {y:?} (det tau = {det:.3e})"),
                });
            }
        }
        Ok(())
    }
}

impl SmoothSystem for PostComposed {
    fn space(&self) -> &PhaseSpace {
        self.base.space()
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.base.apply_into(x, out)?;
        self.displace(out);
        Ok(())
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let df = self.base.analytic_jacobian(x)?;
        let y = self.base.apply(x).ok()?;
        Some(self.tau_jacobian(&y) * df)
    }
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        let df = self.base.apply_with_jacobian(x, out)?;
        let dt = self.tau_jacobian(out);
        self.displace(out);
        Ok(dt * df)
    }
    fn has_inverse(&self) -> bool {
        self.base.has_inverse()
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let y = self.undisplace(x);
        self.base.apply_inverse_into(&y, out)
    }
}

/// `X + eps * psi(|x - c| / R) * v`.
struct BumpedField {
    inner: Arc<dyn VectorField>,
    center: Vec<f64>,
    radius: f64,
    size: f64,
    direction: Vec<f64>,
}

impl VectorField for BumpedField {
    fn dim(&self) -> usize {
        self.inner.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.inner.eval(x, out);
        let v: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut grad = vec![0.0; x.len()];
        if let Some(psi) = radial_bump(&v, self.radius, &mut grad) {
            for (o, d) in out.iter_mut().zip(&self.direction) {
                *o += self.size * psi * d;
            }
        }
    }
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        self.inner.jacobian_into(x, out);
        let d = x.len();
        let v: Vec<f64> = x.iter().zip(&self.center).map(|(a, b)| a - b).collect();
        let mut grad = vec![0.0; d];
        if radial_bump(&v, self.radius, &mut grad).is_some() {
            for i in 0..d {
                for j in 0..d {
                    out[i * d + j] += self.size * self.direction[i] * grad[j];
                }
            }
        }
    }
}

/// Builds the perturbed system `g_eps` of a family.
pub fn perturb(family: &PerturbationFamily) -> Result<Arc<dyn SmoothSystem>> {
    let label = format!("{}+{:?}@{}", family.base.label(), family.kind, family.size);
    match &family.kind {
        PerturbationKind::OdeVectorFieldBump { direction } => {
            let (field, step) = family
                .base
                .vector_field()
                .ok_or_else(|| LabError::InvalidArgument("base is not a time-one map".into()))?;
            let bumped = BumpedField {
                inner: field,
                center: family.center.clone(),
                radius: family.radius,
                size: family.size,
                direction: direction.clone(),
            };
            let map = time_one_map(Arc::new(bumped), family.base.space().clone(), step, label)?;
            Ok(Arc::new(map))
        }
        _ => {
            let sys = PostComposed {
                base: family.base.clone(),
                kind: family.kind.clone(),
                center: family.center.clone(),
                radius: family.radius,
                size: family.size,
                label,
            };
            if family.size > 0.0 {
                sys.check_invertible()?;
            }
            Ok(Arc::new(sys))
        }
    }
}
