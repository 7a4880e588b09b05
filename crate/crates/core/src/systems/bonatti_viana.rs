//! A Bonatti–Viana type deformation of the linear Anosov map on `T^4`.
//!
//! With `A = diag(A0^2, A0^3)` symmetric, its unit eigenvectors `e1..e4`
//! (eigenvalues `l1 < l2 < 1/3 < 3 < l3 < l4`) are orthonormal and the map is
//! built in eigencoordinates:
//!
//! * near the fixed point `p` a pitchfork along `e2`:
//!   `F_p(y) = A y + k psi(|y - p| / r) a tanh(u / a) e2`, `u = <y - p, e2>`,
//!   which raises the `e2` multiplier at `p` to `l2 + k > 1` and creates the
//!   fixed points `p1, p2 = p +- u* e2` where the `e2` multiplier is below one;
//! * near `p1` a twist `T(x) = p1 + R(theta psi(|x - p1| / r')) (x - p1)`
//!   rotating the contracting plane `span(e1, e2)`, pre-composed so that
//!   `Df(p1)` has a complex contracting pair;
//! * the mirror construction at `q` along `e3` in the expanding plane, with
//!   strength chosen so that the inverse sees the same pitchfork as at `p`.
//!
//! Every deformation is supported inside `B_r(p)` or `B_r(q)`; elsewhere the
//! map is evaluated by exactly the same code path as the linear map.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::bump::radial_bump;
use crate::error::{LabError, Result};
use crate::linalg::spectral_norm;
use crate::space::PhaseSpace;
use crate::system::SmoothSystem;
use crate::systems::linear::{make_anosov_t4, mat_vec_wrapped, LinearToralMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BvSpec {
    /// Fixed point of `A` carrying the stable-index pitchfork.
    pub p: Vec<f64>,
    /// Fixed point of `A` carrying the mirrored construction.
    pub q: Vec<f64>,
    /// Deformation radius `r`.
    pub radius: f64,
    /// Twist radius `r'` around `p1` (and `q1`).
    pub inner_radius: f64,
    /// Saturation width `a` of the pitchfork profile at `p`.
    pub branch_width: f64,
    /// Added `e2` multiplier at `p`; the bifurcation needs `> 1 - l2`.
    pub pitchfork_strength: f64,
    /// Twist angle at `p1` and `q1` (radians).
    pub rotation_angle: f64,
}

impl Default for BvSpec {
    fn default() -> Self {
        Self {
            p: vec![0.0; 4],
            q: vec![0.8, 0.6, 0.0, 0.0],
            radius: 0.1,
            inner_radius: 0.005,
            branch_width: 0.004,
            pitchfork_strength: 1.6,
            rotation_angle: 1.2,
        }
    }
}

/// One localised pitchfork-plus-twist deformation.
#[derive(Clone, Debug)]
struct Deformation {
    center: Vec<f64>,
    radius: f64,
    /// Eigendirection carrying the pitchfork.
    axis: DVector<f64>,
    /// Signed strength: `+k` at `p`, `-k_q` at `q`.
    strength: f64,
    width: f64,
    /// Branch fixed point `center + u* axis` (None without a bifurcation).
    branch: Option<Vec<f64>>,
    branch_offset: f64,
    twist: Option<Twist>,
}

#[derive(Clone, Debug)]
struct Twist {
    center: Vec<f64>,
    radius: f64,
    angle: f64,
    a: DVector<f64>,
    b: DVector<f64>,
}

fn torus_disp(from: &[f64], to: &[f64]) -> Vec<f64> {
    from.iter()
        .zip(to)
        .map(|(a, b)| {
            let d = b - a;
            d - d.round()
        })
        .collect()
}

impl Twist {
    /// `(T(x) - x, DT(x))`, or `None` outside the twist ball.
    fn eval(&self, x: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let d = x.len();
        let w = torus_disp(&self.center, x);
        let mut grad = vec![0.0; d];
        let psi = radial_bump(&w, self.radius, &mut grad)?;
        let alpha = self.angle * psi;
        let (s, c) = alpha.sin_cos();
        let wv = DVector::from_column_slice(&w);
        let wa = self.a.dot(&wv);
        let wb = self.b.dot(&wv);
        // R(alpha) w - w, rotation acting in span(a, b)
        let delta = &self.a * ((c - 1.0) * wa - s * wb) + &self.b * (s * wa + (c - 1.0) * wb);
        let plane = &self.a * self.a.transpose() + &self.b * self.b.transpose();
        let gen = &self.b * self.a.transpose() - &self.a * self.b.transpose();
        let rot = DMatrix::identity(d, d) + &plane * (c - 1.0) + &gen * s;
        let drot_w = (&plane * (-s) + &gen * c) * &wv;
        let grad_alpha = DVector::from_column_slice(&grad) * self.angle;
        let jac = rot + drot_w * grad_alpha.transpose();
        Some((delta.iter().copied().collect(), jac))
    }
}

impl Deformation {
    /// `(F(y) - A y, DF(y) - A)` for the pitchfork part, `None` outside the ball.
    fn pitchfork(&self, y: &[f64]) -> Option<(Vec<f64>, DMatrix<f64>)> {
        let d = y.len();
        let v = torus_disp(&self.center, y);
        let mut grad = vec![0.0; d];
        let psi = radial_bump(&v, self.radius, &mut grad)?;
        let u = self.axis.dot(&DVector::from_column_slice(&v));
        let th = (u / self.width).tanh();
        let g = self.width * th;
        let dg = 1.0 - th * th;
        let disp: Vec<f64> = self.axis.iter().map(|e| self.strength * psi * g * e).collect();
        // grad of psi * g(u) = g grad psi + psi g'(u) axis
        let grad_v = DVector::from_column_slice(&grad) * g + &self.axis * (psi * dg);
        let jac = &self.axis * grad_v.transpose() * self.strength;
        Some((disp, jac))
    }

    fn contains(&self, x: &[f64]) -> bool {
        let v = torus_disp(&self.center, x);
        v.iter().map(|a| a * a).sum::<f64>() < self.radius * self.radius
    }
}

/// The deformed map `f_BV`.
#[derive(Clone, Debug)]
pub struct BonattiViana {
    linear: LinearToralMap,
    spec: BvSpec,
    at_p: Deformation,
    at_q: Deformation,
    lambda_cs: f64,
    lambda_cu: f64,
}

/// Solves `l u + k a tanh(u / a) psi(u / r) = u` for the positive branch.
fn branch_offset(multiplier: f64, strength: f64, width: f64, radius: f64) -> Option<f64> {
    let h = |u: f64| {
        let t = u / radius;
        let psi = if t < 1.0 { (1.0 - t * t).powi(3) } else { 0.0 };
        multiplier * u + strength * width * (u / width).tanh() * psi - u
    };
    // h > 0 just right of 0 iff the origin repels along the axis; the branch
    // is the first sign change on (0, r).
    let n = 20_000;
    let mut prev = h(radius / n as f64);
    let dir = prev.signum();
    for i in 2..n {
        let u = radius * i as f64 / n as f64;
        let cur = h(u);
        if cur.signum() != dir && dir != 0.0 {
            let (mut lo, mut hi) = (radius * (i - 1) as f64 / n as f64, u);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if h(mid).signum() == dir {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return Some(0.5 * (lo + hi));
        }
        prev = cur;
    }
    let _ = prev;
    None
}

/// Builds `f_BV` from the `T^4` Anosov map.
pub fn make_bonatti_viana(spec: &BvSpec) -> Result<BonattiViana> {
    let linear = make_anosov_t4()?;
    let eig = linear.eigen().clone();
    let [l1, l2, l3, l4]: [f64; 4] = eig.values.clone().try_into().expect("four eigenvalues");
    let _ = (l1, l4);
    let e = |k: usize| DVector::from_column_slice(&eig.vectors[k]);

    for (name, pt) in [("p", &spec.p), ("q", &spec.q)] {
        if pt.len() != 4 {
            return Err(LabError::Construction(format!("{name} must have 4 coordinates")));
        }
        let image = linear.apply(pt)?;
        if PhaseSpace::torus(4).distance(pt, &image) > 1e-12 {
            return Err(LabError::Construction(format!("{name} = {pt:?} is not a fixed point of A")));
        }
    }
    let sep = PhaseSpace::torus(4).distance(&spec.p, &spec.q);
    if !(spec.radius > 0.0) || 2.0 * spec.radius >= sep {
        return Err(LabError::Construction(format!(
            "balls B_r(p), B_r(q) must be disjoint (r = {}, |p - q| = {sep})",
            spec.radius
        )));
    }
    if spec.pitchfork_strength < 0.0 || !(spec.branch_width > 0.0) {
        return Err(LabError::Construction("need pitchfork_strength >= 0, branch_width > 0".into()));
    }
    let bifurcates = spec.pitchfork_strength > 0.0;
    if bifurcates && l2 + spec.pitchfork_strength <= 1.0 {
        return Err(LabError::Construction(format!(
            "pitchfork_strength {} below the bifurcation threshold {}",
            spec.pitchfork_strength,
            1.0 - l2
        )));
    }

    // p side: weak stable direction e2
    let k_p = spec.pitchfork_strength;
    let u_p = if bifurcates {
        Some(
            branch_offset(l2, k_p, spec.branch_width, spec.radius)
                .ok_or_else(|| LabError::Construction("no pitchfork branch inside B_r(p)".into()))?,
        )
    } else {
        None
    };
    // q side: the inverse's weak stable multiplier 1/l3 is raised by the same k
    let k_q = if bifurcates { l3 - 1.0 / (1.0 / l3 + k_p) } else { 0.0 };
    let width_q = spec.branch_width * l3;
    let u_q = if bifurcates {
        Some(
            branch_offset(l3, -k_q, width_q, spec.radius)
                .ok_or_else(|| LabError::Construction("no pitchfork branch inside B_r(q)".into()))?,
        )
    } else {
        None
    };

    let make = |center: &Vec<f64>, axis: DVector<f64>, strength: f64, width: f64, u: Option<f64>, plane: (DVector<f64>, DVector<f64>)| -> Result<Deformation> {
        let branch = u.map(|u| {
            let mut b: Vec<f64> = center.iter().zip(axis.iter()).map(|(c, a)| c + u * a).collect();
            PhaseSpace::torus(4).wrap(&mut b);
            b
        });
        let twist = match (&branch, u) {
            (Some(b), Some(u)) if spec.rotation_angle != 0.0 => {
                if spec.inner_radius >= u || u + spec.inner_radius >= spec.radius {
                    return Err(LabError::Construction(format!(
                        "twist ball B_r'(p1) must lie in B_r(p) and exclude p (r' = {}, u* = {u})",
                        spec.inner_radius
                    )));
                }
                Some(Twist {
                    center: b.clone(),
                    radius: spec.inner_radius,
                    angle: spec.rotation_angle,
                    a: plane.0,
                    b: plane.1,
                })
            }
            _ => None,
        };
        Ok(Deformation {
            center: center.clone(),
            radius: spec.radius,
            axis,
            strength,
            width,
            branch,
            branch_offset: u.unwrap_or(0.0),
            twist,
        })
    };
    let at_p = make(&spec.p, e(1), k_p, spec.branch_width, u_p, (e(0), e(1)))?;
    let at_q = make(&spec.q, e(2), -k_q, width_q, u_q, (e(2), e(3)))?;

    let mut bv = BonattiViana {
        linear,
        spec: spec.clone(),
        at_p,
        at_q,
        lambda_cs: 0.0,
        lambda_cu: 0.0,
    };
    bv.check_invertible()?;
    let (cs, cu) = bv.center_rates();
    bv.lambda_cs = cs;
    bv.lambda_cu = cu;
    Ok(bv)
}

impl BonattiViana {
    pub fn spec(&self) -> &BvSpec {
        &self.spec
    }

    pub fn linear(&self) -> &LinearToralMap {
        &self.linear
    }

    /// `p1`, the branch fixed point carrying the twist.
    pub fn p1(&self) -> Option<&[f64]> {
        self.at_p.branch.as_deref()
    }

    pub fn p_branch_offset(&self) -> f64 {
        self.at_p.branch_offset
    }

    pub fn q1(&self) -> Option<&[f64]> {
        self.at_q.branch.as_deref()
    }

    /// `sup_{B_r(p)} log |Df|E^cs|` with `E^cs = span(e1, e2)` of `A`.
    pub fn lambda_cs(&self) -> f64 {
        self.lambda_cs
    }

    /// `sup_{B_r(q)} log |Df^{-1}|E^cu|` with `E^cu = span(e3, e4)` of `A`.
    pub fn lambda_cu(&self) -> f64 {
        self.lambda_cu
    }

    pub fn deformation_contains(&self, x: &[f64]) -> bool {
        self.at_p.contains(x) || self.at_q.contains(x)
    }

    /// Eigen-splitting `E = span(e1, e2)`, `F = span(e4, e3)` of `A`.
    pub fn linear_splitting(&self) -> crate::tangent::TangentSplitting {
        self.linear.eigen_splitting(&[0.0; 4], 2).expect("dim 2 of 4")
    }

    fn deformation_for(&self, x: &[f64]) -> Option<&Deformation> {
        if self.at_p.contains(x) {
            Some(&self.at_p)
        } else if self.at_q.contains(x) {
            Some(&self.at_q)
        } else {
            None
        }
    }

    fn eval(&self, x: &[f64], want_jac: bool) -> (Vec<f64>, Option<DMatrix<f64>>) {
        let a = self.linear.matrix();
        let mut out = vec![0.0; 4];
        let Some(def) = self.deformation_for(x) else {
            mat_vec_wrapped(a, x, &mut out);
            return (out, want_jac.then(|| a.clone()));
        };
        // y = T(x)
        let (mut y, dt) = match def.twist.as_ref().and_then(|t| t.eval(x)) {
            Some((delta, dt)) => (x.iter().zip(&delta).map(|(a, b)| a + b).collect::<Vec<_>>(), Some(dt)),
            None => (x.to_vec(), None),
        };
        PhaseSpace::torus(4).wrap(&mut y);
        let mut ay = vec![0.0; 4];
        // unwrapped A y so the displacement can be added before the final wrap
        for i in 0..4 {
            ay[i] = (0..4).map(|j| a[(i, j)] * y[j]).sum();
        }
        let mut dfy = want_jac.then(|| a.clone());
        if let Some((disp, dj)) = def.pitchfork(&y) {
            for (o, dv) in ay.iter_mut().zip(&disp) {
                *o += dv;
            }
            if let Some(m) = dfy.as_mut() {
                *m += dj;
            }
        }
        for (o, v) in out.iter_mut().zip(&ay) {
            *o = crate::space::wrap_unit(*v);
        }
        let jac = match (dfy, dt) {
            (Some(m), Some(dt)) => Some(m * dt),
            (m, _) => m,
        };
        (out, jac)
    }

    /// Sign check of `det Df` on a grid inside both deformation balls.
    fn check_invertible(&self) -> Result<()> {
        for def in [&self.at_p, &self.at_q] {
            let n = 17;
            let mut idx = [0usize; 4];
            loop {
                let x: Vec<f64> = (0..4)
                    .map(|k| def.center[k] + def.radius * (2.0 * idx[k] as f64 / (n - 1) as f64 - 1.0))
                    .map(crate::space::wrap_unit)
                    .collect();
                let (_, jac) = self.eval(&x, true);
                let det = jac.expect("requested").determinant();
                if !(det > 0.0) {
                    return Err(LabError::Construction(format!(
                        "det Df_BV = {det:.3e} <= 0 near {x:?}; map is not a diffeomorphism"
                    )));
                }
                if !advance(&mut idx, n) {
                    break;
                }
            }
            // the pitchfork axis is where the profile is steepest
            for i in 0..=4000 {
                let u = def.radius * (2.0 * i as f64 / 4000.0 - 1.0);
                let mut x: Vec<f64> = def.center.iter().zip(def.axis.iter()).map(|(c, a)| c + u * a).collect();
                PhaseSpace::torus(4).wrap(&mut x);
                let det = self.eval(&x, true).1.expect("requested").determinant();
                if !(det > 0.0) {
                    return Err(LabError::Construction(format!(
                        "det Df_BV = {det:.3e} <= 0 on the pitchfork axis; map is not a diffeomorphism"
                    )));
                }
            }
        }
        Ok(())
    }

    fn center_rates(&self) -> (f64, f64) {
        let eig = self.linear.eigen();
        let col = |k: usize| DVector::from_column_slice(&eig.vectors[k]);
        let ecs = DMatrix::from_columns(&[col(0), col(1)]);
        let ecu = DMatrix::from_columns(&[col(2), col(3)]);
        let mut cs = f64::NEG_INFINITY;
        let mut cu = f64::NEG_INFINITY;
        for (def, is_p) in [(&self.at_p, true), (&self.at_q, false)] {
            let n = 9;
            let mut idx = [0usize; 4];
            let mut pts: Vec<Vec<f64>> = vec![def.center.clone()];
            if let Some(b) = &def.branch {
                pts.push(b.clone());
            }
            loop {
                let x: Vec<f64> = (0..4)
                    .map(|k| def.center[k] + def.radius * (2.0 * idx[k] as f64 / (n - 1) as f64 - 1.0))
                    .map(crate::space::wrap_unit)
                    .collect();
                if def.contains(&x) {
                    pts.push(x);
                }
                if !advance(&mut idx, n) {
                    break;
                }
            }
            for x in pts {
                let jac = self.eval(&x, true).1.expect("requested");
                if is_p {
                    cs = cs.max(spectral_norm(&(&jac * &ecs)).ln());
                } else if let Some(inv) = jac.try_inverse() {
                    cu = cu.max(spectral_norm(&(inv * &ecu)).ln());
                }
            }
        }
        (cs, cu)
    }
}

fn advance(idx: &mut [usize; 4], n: usize) -> bool {
    for i in idx.iter_mut() {
        *i += 1;
        if *i < n {
            return true;
        }
        *i = 0;
    }
    false
}

impl SmoothSystem for BonattiViana {
    fn space(&self) -> &PhaseSpace {
        self.linear.space()
    }
    fn label(&self) -> &str {
        "bonatti_viana"
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        if self.deformation_for(x).is_none() {
            // identical arithmetic to the linear map
            return self.linear.apply_into(x, out);
        }
        out.copy_from_slice(&self.eval(x, false).0);
        Ok(())
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.eval(x, true).1
    }
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        let (y, jac) = self.eval(x, true);
        out.copy_from_slice(&y);
        Ok(jac.expect("requested"))
    }
    fn has_inverse(&self) -> bool {
        true
    }
    /// Damped Newton on `f(y) = x` from the linear preimage; the step is
    /// halved until the residual decreases, since the saturating pitchfork
    /// profile makes undamped steps overshoot.
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let torus = PhaseSpace::torus(4);
        let mut y = self.linear.apply_inverse(x)?;
        if self.deformation_for(&y).is_none() && self.apply(&y)? == x {
            out.copy_from_slice(&y);
            return Ok(());
        }
        let residual = |y: &[f64]| -> (DVector<f64>, f64) {
            let r = DVector::from_vec(torus_disp(x, &self.eval(y, false).0));
            let n = r.amax();
            (r, n)
        };
        let (mut r, mut norm) = residual(&y);
        for _ in 0..200 {
            if norm < 1e-15 {
                break;
            }
            let jac = self.eval(&y, true).1.expect("requested");
            let step = jac
                .lu()
                .solve(&r)
                .ok_or_else(|| LabError::InvalidArgument("singular Df_BV in inverse".into()))?;
            let mut t = 1.0;
            loop {
                let mut trial: Vec<f64> = y.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                torus.wrap(&mut trial);
                let (r_new, n_new) = residual(&trial);
                if n_new < norm || t < 1e-12 {
                    y = trial;
                    r = r_new;
                    norm = n_new;
                    break;
                }
                t *= 0.5;
            }
        }
        if !(norm < 1e-12) {
            return Err(LabError::InvalidArgument(format!(
                "inverse of f_BV did not converge at {x:?} (residual {norm:.3e})"
            )));
        }
        out.copy_from_slice(&y);
        Ok(())
    }
    fn c1_norm_bound(&self) -> Option<f64> {
        None
    }
}

/// Fixed points of `f` in `B_radius(center)` by Newton's method from a seed grid
/// with `seeds_per_axis^d` points; converged roots closer than `1e-8` are merged.
pub fn newton_fixed_points<S: SmoothSystem + ?Sized>(
    system: &S,
    center: &[f64],
    radius: f64,
    seeds_per_axis: usize,
) -> Vec<Vec<f64>> {
    let space = system.space();
    let d = center.len();
    let mut found: Vec<Vec<f64>> = Vec::new();
    let total = seeds_per_axis.pow(d as u32);
    for idx in 0..total {
        let mut rem = idx;
        let mut x: Vec<f64> = center.to_vec();
        for xi in x.iter_mut() {
            let k = rem % seeds_per_axis;
            rem /= seeds_per_axis;
            *xi += radius * (2.0 * (k as f64 + 0.5) / seeds_per_axis as f64 - 1.0);
        }
        space.wrap(&mut x);
        if space.distance(&x, center) >= radius {
            continue;
        }
        let mut converged = false;
        for _ in 0..60 {
            let mut fx = vec![0.0; d];
            let Ok(jac) = system.apply_with_jacobian(&x, &mut fx) else {
                break;
            };
            let mut r = vec![0.0; d];
            space.displacement(&x, &fx, &mut r);
            let res = r.iter().map(|v| v.abs()).fold(0.0, f64::max);
            if res < 1e-13 {
                converged = true;
                break;
            }
            let g = jac - DMatrix::identity(d, d);
            let Some(step) = g.lu().solve(&DVector::from_vec(r)) else {
                break;
            };
            for (xi, s) in x.iter_mut().zip(step.iter()) {
                *xi -= s;
            }
            space.wrap(&mut x);
            if space.distance(&x, center) >= 2.0 * radius {
                break;
            }
        }
        if converged
            && space.distance(&x, center) < radius
            && !found.iter().any(|f| space.distance(f, &x) < 1e-8)
        {
            found.push(x);
        }
    }
    found
}

/// Number of eigenvalues of modulus below one.
pub fn stable_index(jac: &DMatrix<f64>) -> usize {
    jac.complex_eigenvalues().iter().filter(|z| z.norm() < 1.0).count()
}
