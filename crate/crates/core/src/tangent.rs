//! Lyapunov spectra, dominated splittings, cone fields and Bowen balls.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::linalg::{min_principal_angle, min_singular_value, orthonormality_defect, orthonormalize, qr_positive, spectral_norm, subspace_distance};
use crate::system::{check_point, jacobian_at, Orbit, SmoothSystem};

/// Steps between QR re-orthonormalisations.
pub const DEFAULT_REORTHONORMALIZATION: usize = 10;

/// Frame agreement required before a splitting estimate is accepted.
pub const DEFAULT_SPLITTING_TOL: f64 = 1e-6;

/// Smallest principal angle allowed between `E` and `F`.
pub const DEFAULT_ANGLE_FLOOR: f64 = 1e-8;

/// Log condition-number growth allowed between two QR steps. Beyond this the
/// frame is re-orthonormalised before the period ends, since a collapsed
/// frame loses the small exponents to rounding.
pub const MAX_LOG_SPREAD: f64 = 20.0;

/// Boundary directions sampled by [`cone_contraction`].
pub const CONE_SAMPLES: usize = 64;

#[derive(Clone, Debug, Serialize)]
pub struct LyapunovResult {
    /// Descending.
    pub exponents: Vec<f64>,
    pub orbit_length: usize,
    pub reorthonormalization_period: usize,
    /// QR steps taken before the period ended because of [`MAX_LOG_SPREAD`].
    pub early_reorthonormalizations: usize,
}

impl LyapunovResult {
    pub fn sum(&self) -> f64 {
        self.exponents.iter().sum()
    }
}

/// A pair of complementary subspaces at a point, as orthonormal frames.
#[derive(Clone, Debug)]
pub struct TangentSplitting {
    pub basepoint: Vec<f64>,
    /// `d x (d - dim F)`.
    pub e_frame: DMatrix<f64>,
    /// `d x dim F`.
    pub f_frame: DMatrix<f64>,
    pub convergence_residual: f64,
}

impl TangentSplitting {
    pub fn dim_f(&self) -> usize {
        self.f_frame.ncols()
    }

    pub fn validate(&self, angle_floor: f64) -> Result<()> {
        let defect = orthonormality_defect(&self.e_frame).max(orthonormality_defect(&self.f_frame));
        if defect > 1e-10 {
            return Err(LabError::InvalidArgument(format!("frames not orthonormal ({defect:e})")));
        }
        let angle = min_principal_angle(&self.e_frame, &self.f_frame);
        if angle <= angle_floor {
            return Err(LabError::NoDomination { residual: angle });
        }
        Ok(())
    }
}

/// Lyapunov exponents by periodic QR re-orthonormalisation of an evolved frame.
pub fn lyapunov_spectrum<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    n: usize,
    period: usize,
) -> Result<LyapunovResult> {
    if period == 0 || n < 10 * period {
        return Err(LabError::InvalidArgument(format!(
            "need n >= 10 * period (n = {n}, period = {period})"
        )));
    }
    check_point(system.space(), x)?;
    let d = x.len();
    let mut q = DMatrix::<f64>::identity(d, d);
    let mut sums = vec![0.0; d];
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    let mut spread = 0.0;
    let mut since = 0;
    let mut early = 0;
    for i in 0..n {
        let jac = system.apply_with_jacobian(&cur, &mut next)?;
        spread += log_condition(&jac);
        q = jac * q;
        std::mem::swap(&mut cur, &mut next);
        since += 1;
        let forced = spread > MAX_LOG_SPREAD && since < period;
        if since == period || i + 1 == n || forced {
            if forced && i + 1 != n {
                early += 1;
            }
            spread = 0.0;
            since = 0;
            let (qn, r) = qr_positive(&q);
            for k in 0..d {
                let rk = r[(k, k)];
                if !(rk > 1e-300) || !rk.is_finite() {
                    return Err(LabError::DegenerateFrame { step: i + 1, value: rk });
                }
                sums[k] += rk.ln();
            }
            q = qn;
        }
    }
    let mut exponents: Vec<f64> = sums.into_iter().map(|s| s / n as f64).collect();
    exponents.sort_by(|a, b| b.total_cmp(a));
    Ok(LyapunovResult {
        exponents,
        orbit_length: n,
        reorthonormalization_period: period,
        early_reorthonormalizations: early,
    })
}

fn log_condition(jac: &DMatrix<f64>) -> f64 {
    let sv = jac.singular_values();
    let (hi, lo) = sv.iter().fold((0.0f64, f64::INFINITY), |(h, l), &v| (h.max(v), l.min(v)));
    if lo > 0.0 {
        (hi / lo).ln()
    } else {
        f64::INFINITY
    }
}

/// Deterministic generic `d x k` frame; distinct `salt`s give frames in general position.
pub(crate) fn generic_frame(d: usize, k: usize, salt: u64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(d, k, |i, j| {
        let t = (salt as f64 + 1.0) * 12.9898 + (i as f64 + 1.0) * 78.233 + (j as f64 + 1.0) * 37.719;
        (t.sin() * 43_758.545_312_3).fract() - 0.5 + if i == j { 0.25 } else { 0.0 }
    });
    orthonormalize(&m)
}

fn push_forward(jacobians: impl Iterator<Item = DMatrix<f64>>, mut frame: DMatrix<f64>) -> DMatrix<f64> {
    for j in jacobians {
        frame = orthonormalize(&(j * frame));
    }
    frame
}

fn push_backward(jacobians: impl Iterator<Item = DMatrix<f64>>, mut frame: DMatrix<f64>) -> Result<DMatrix<f64>> {
    for j in jacobians {
        let lu = j.lu();
        let solved = lu
            .solve(&frame)
            .ok_or_else(|| LabError::InvalidArgument("singular Jacobian along orbit".into()))?;
        frame = orthonormalize(&solved);
    }
    Ok(frame)
}

/// Estimates `E ⊕ F` at `x` with `dim F = dim_f`.
///
/// `F` is a generic frame pushed forward along the backward orbit
/// `f^{-n}(x), ..., x`; `E` is a generic frame pulled back along the forward
/// orbit `f^n(x), ..., x`. Two independent starting frames are used for each
/// bundle and must agree to `tol`, otherwise no gap is present.
pub fn estimate_splitting<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    n: usize,
    dim_f: usize,
    tol: f64,
) -> Result<TangentSplitting> {
    let d = x.len();
    if dim_f == 0 || dim_f >= d {
        return Err(LabError::InvalidArgument(format!("dim_f must be in 1..{d}")));
    }
    if n < 100 {
        return Err(LabError::InvalidArgument("splitting estimation needs n >= 100".into()));
    }
    if !system.has_inverse() {
        return Err(LabError::NoInverse(system.label().to_string()));
    }
    check_point(system.space(), x)?;

    let mut backward = Vec::with_capacity(n);
    let mut cur = x.to_vec();
    for _ in 0..n {
        let prev = system.apply_inverse(&cur)?;
        backward.push(prev.clone());
        cur = prev;
    }
    let back_jacs: Vec<DMatrix<f64>> = backward.iter().rev().map(|y| jacobian_at(system, y)).collect();
    let f_a = push_forward(back_jacs.iter().cloned(), generic_frame(d, dim_f, 1));
    let f_b = push_forward(back_jacs.iter().cloned(), generic_frame(d, dim_f, 2));

    let mut fwd_jacs = Vec::with_capacity(n);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    for _ in 0..n {
        fwd_jacs.push(system.apply_with_jacobian(&cur, &mut next)?);
        std::mem::swap(&mut cur, &mut next);
    }
    let e_a = push_backward(fwd_jacs.iter().rev().cloned(), generic_frame(d, d - dim_f, 3))?;
    let e_b = push_backward(fwd_jacs.iter().rev().cloned(), generic_frame(d, d - dim_f, 4))?;

    let residual = subspace_distance(&f_a, &f_b).max(subspace_distance(&e_a, &e_b));
    if !(residual <= tol) {
        return Err(LabError::NoDomination { residual });
    }
    let splitting = TangentSplitting {
        basepoint: x.to_vec(),
        e_frame: e_a,
        f_frame: f_a,
        convergence_residual: residual,
    };
    splitting.validate(DEFAULT_ANGLE_FLOOR)?;
    Ok(splitting)
}

/// `F` frames along a forward orbit, for systems where only forward iteration
/// is usable. A generic frame is pushed through `burn_in` transient steps,
/// then recorded at each of the `n` orbit points.
///
/// Returns the orbit (starting after the transient) and one frame per point.
pub fn forward_frames<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    burn_in: usize,
    n: usize,
    dim_f: usize,
) -> Result<(Orbit, Vec<DMatrix<f64>>)> {
    let d = x.len();
    if dim_f == 0 || dim_f > d {
        return Err(LabError::InvalidArgument(format!("dim_f must be in 1..={d}")));
    }
    check_point(system.space(), x)?;
    let mut frame = generic_frame(d, dim_f, 1);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    for step in 0..burn_in {
        let j = system.apply_with_jacobian(&cur, &mut next)?;
        if !system.space().contains(&next) {
            return Err(LabError::Escape { index: step + 1 });
        }
        frame = orthonormalize(&(j * frame));
        std::mem::swap(&mut cur, &mut next);
    }
    let mut points = Vec::with_capacity(n);
    let mut frames = Vec::with_capacity(n);
    for step in 0..n {
        points.push(cur.clone());
        frames.push(frame.clone());
        if step + 1 == n {
            break;
        }
        let j = system.apply_with_jacobian(&cur, &mut next)?;
        if !system.space().contains(&next) {
            return Err(LabError::Escape { index: burn_in + step + 1 });
        }
        frame = orthonormalize(&(j * frame));
        std::mem::swap(&mut cur, &mut next);
    }
    Ok((Orbit { points, jacobians: None }, frames))
}

/// Where splittings come from: analytic frames for linear maps, estimation otherwise.
pub trait SplittingSource: Sync {
    fn splitting_at(&self, system: &dyn SmoothSystem, x: &[f64]) -> Result<TangentSplitting>;

    fn dim_f(&self) -> usize;
}

/// The same frames at every point (eigen-splittings of linear maps).
#[derive(Clone, Debug)]
pub struct ConstantSplitting {
    pub e_frame: DMatrix<f64>,
    pub f_frame: DMatrix<f64>,
}

impl ConstantSplitting {
    pub fn from_splitting(s: &TangentSplitting) -> Self {
        Self {
            e_frame: s.e_frame.clone(),
            f_frame: s.f_frame.clone(),
        }
    }
}

impl SplittingSource for ConstantSplitting {
    fn splitting_at(&self, _system: &dyn SmoothSystem, x: &[f64]) -> Result<TangentSplitting> {
        Ok(TangentSplitting {
            basepoint: x.to_vec(),
            e_frame: self.e_frame.clone(),
            f_frame: self.f_frame.clone(),
            convergence_residual: 0.0,
        })
    }

    fn dim_f(&self) -> usize {
        self.f_frame.ncols()
    }
}

/// [`estimate_splitting`] at every requested point.
#[derive(Clone, Copy, Debug)]
pub struct EstimatedSplitting {
    pub n: usize,
    pub dim_f: usize,
    pub tol: f64,
}

impl SplittingSource for EstimatedSplitting {
    fn splitting_at(&self, system: &dyn SmoothSystem, x: &[f64]) -> Result<TangentSplitting> {
        estimate_splitting(system, x, self.n, self.dim_f, self.tol).map_err(|e| LabError::SplittingFailed {
            point: x.to_vec(),
            source: Box::new(e),
        })
    }

    fn dim_f(&self) -> usize {
        self.dim_f
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DominationReport {
    pub ok: bool,
    /// `max_i |(Df|F)^{-1}| |Df|E|` over the orbit.
    pub worst_ratio: f64,
}

/// Checks `|Df|E(x)| |(Df|F(x))^{-1}| < 1` at every orbit point.
pub fn domination_check<S: SmoothSystem + ?Sized>(
    system: &S,
    orbit: &Orbit,
    splittings: &[TangentSplitting],
) -> Result<DominationReport> {
    if splittings.len() != orbit.len() {
        return Err(LabError::LengthMismatch(format!(
            "{} splittings for an orbit of {} points",
            splittings.len(),
            orbit.len()
        )));
    }
    let mut worst: f64 = 0.0;
    for (i, (x, s)) in orbit.points.iter().zip(splittings).enumerate() {
        let jac = match &orbit.jacobians {
            Some(js) => js[i].clone(),
            None => jacobian_at(system, x),
        };
        let e_norm = spectral_norm(&(&jac * &s.e_frame));
        let f_conorm = min_singular_value(&(&jac * &s.f_frame));
        if !(f_conorm > 0.0) {
            return Ok(DominationReport {
                ok: false,
                worst_ratio: f64::INFINITY,
            });
        }
        worst = worst.max(e_norm / f_conorm);
    }
    Ok(DominationReport {
        ok: worst < 1.0,
        worst_ratio: worst,
    })
}

/// A cone `{ v_F + v_E : |v_E| <= aperture |v_F| }` around an `F` frame.
#[derive(Clone, Debug)]
pub struct ConeSpec {
    pub center: DMatrix<f64>,
    pub aperture: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConeReport {
    /// Per-step geometric mean of `max ratio / aperture`.
    pub factor: f64,
    /// Largest `|E-part| / |F-part|` of an image boundary vector.
    pub max_image_ratio: f64,
    /// False when some image left the unit-aperture cone.
    pub invariant: bool,
}

/// Points on the unit sphere of `R^k`: `+-1` for `k = 1`, equal angles for
/// `k = 2`, a Fibonacci lattice for `k = 3`, normalised lattice points beyond.
fn sphere_mesh(k: usize, count: usize) -> Vec<Vec<f64>> {
    match k {
        0 => vec![vec![]],
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count)
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / count as f64;
                vec![a.cos(), a.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let y = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - y * y).sqrt();
                    let th = golden * i as f64;
                    vec![r * th.cos(), y, r * th.sin()]
                })
                .collect()
        }
        _ => (0..count)
            .map(|i| {
                let v: Vec<f64> = (0..k)
                    .map(|j| ((i as f64 + 0.5) * (0.754_877_666 + 0.569_840_29 * j as f64)).fract() - 0.5)
                    .collect();
                let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
                v.into_iter().map(|a| a / n).collect()
            })
            .collect(),
    }
}

/// Boundary directions `(u_F, u_E)` of a cone, about [`CONE_SAMPLES`] of them.
fn cone_boundary(dim_f: usize, dim_e: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let (nf, ne) = match (dim_f, dim_e) {
        (1, 1) => (2, 2),
        (1, _) => (2, CONE_SAMPLES / 2),
        (_, 1) => (CONE_SAMPLES / 2, 2),
        _ => (8, CONE_SAMPLES / 8),
    };
    let fs = sphere_mesh(dim_f, nf);
    let es = sphere_mesh(dim_e, ne);
    fs.iter()
        .flat_map(|f| es.iter().map(move |e| (f.clone(), e.clone())))
        .collect()
}

/// Measured contraction of a cone under `Df^n`.
///
/// Each boundary vector `v = F u_F + aperture E u_E` is mapped by `Df^n(x)` and
/// decomposed along the splitting at `f^n(x)`; the worst `|E|/|F|` ratio
/// divided by the aperture, to the power `1/n`, is the per-step factor.
pub fn cone_contraction(
    system: &dyn SmoothSystem,
    x: &[f64],
    cone: &ConeSpec,
    n: usize,
    source: &dyn SplittingSource,
) -> Result<ConeReport> {
    if n == 0 || !(cone.aperture > 0.0) {
        return Err(LabError::InvalidArgument("need n >= 1 and aperture > 0".into()));
    }
    let here = source.splitting_at(system, x)?;
    let dim_f = cone.center.ncols();
    if here.dim_f() != dim_f {
        return Err(LabError::DimensionMismatch {
            expected: here.dim_f(),
            got: dim_f,
        });
    }
    let d = x.len();
    let mut jac = DMatrix::<f64>::identity(d, d);
    let mut cur = x.to_vec();
    let mut next = vec![0.0; d];
    for _ in 0..n {
        jac = system.apply_with_jacobian(&cur, &mut next)? * jac;
        std::mem::swap(&mut cur, &mut next);
    }
    let there = source.splitting_at(system, &cur)?;
    let mut basis = DMatrix::zeros(d, d);
    basis.columns_mut(0, d - dim_f).copy_from(&there.e_frame);
    basis.columns_mut(d - dim_f, dim_f).copy_from(&there.f_frame);
    let lu = basis.lu();

    let mut max_ratio: f64 = 0.0;
    for (uf, ue) in cone_boundary(dim_f, d - dim_f) {
        let vf = &cone.center * nalgebra::DVector::from_column_slice(&uf);
        let ve = &here.e_frame * nalgebra::DVector::from_column_slice(&ue);
        let v = vf + ve * cone.aperture;
        let w = &jac * v;
        let c = lu
            .solve(&w)
            .ok_or(LabError::NoDomination { residual: 0.0 })?;
        let ce = c.rows(0, d - dim_f).norm();
        let cf = c.rows(d - dim_f, dim_f).norm();
        let ratio = if cf > 0.0 { ce / cf } else { f64::INFINITY };
        max_ratio = max_ratio.max(ratio);
    }
    Ok(ConeReport {
        factor: (max_ratio / cone.aperture).powf(1.0 / n as f64),
        max_image_ratio: max_ratio,
        invariant: max_ratio <= 1.0,
    })
}

/// `d(f^i x, f^i y) < delta` for all `0 <= i < n`.
pub fn bowen_ball_contains<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    y: &[f64],
    delta: f64,
    n: usize,
) -> Result<bool> {
    let space = system.space();
    let d = x.len();
    let (mut a, mut b) = (x.to_vec(), y.to_vec());
    let (mut na, mut nb) = (vec![0.0; d], vec![0.0; d]);
    for i in 0..n {
        if space.distance(&a, &b) >= delta {
            return Ok(false);
        }
        if i + 1 < n {
            system.apply_into(&a, &mut na)?;
            system.apply_into(&b, &mut nb)?;
            std::mem::swap(&mut a, &mut na);
            std::mem::swap(&mut b, &mut nb);
        }
    }
    Ok(true)
}

/// First index `i` with `d(f^i x, f^i y) >= delta`, searching `i < limit`.
pub fn bowen_exit_index<S: SmoothSystem + ?Sized>(
    system: &S,
    x: &[f64],
    y: &[f64],
    delta: f64,
    limit: usize,
) -> Result<Option<usize>> {
    let space = system.space();
    let (mut a, mut b) = (x.to_vec(), y.to_vec());
    for i in 0..limit {
        if space.distance(&a, &b) >= delta {
            return Ok(Some(i));
        }
        a = system.apply(&a)?;
        b = system.apply(&b)?;
    }
    Ok(None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::PhaseSpace;
    use crate::system::{iterate, IdentityMap};
    use crate::systems::linear::{make_anosov_t4, make_cat_map};

    const LOG_LAMBDA: f64 = 0.962_423_650_119_206_9;

    #[test]
    fn identity_has_zero_exponents() {
        let id = IdentityMap::new(PhaseSpace::torus(3));
        let r = lyapunov_spectrum(&id, &[0.1, 0.2, 0.3], 100, 10).unwrap();
        assert_eq!(r.exponents, vec![0.0; 3]);
    }

    #[test]
    fn lyapunov_needs_long_enough_orbit() {
        let cat = make_cat_map();
        assert!(lyapunov_spectrum(&cat, &[0.1, 0.2], 99, 10).is_err());
    }

    #[test]
    fn cat_map_exponents() {
        let cat = make_cat_map();
        let r = lyapunov_spectrum(&cat, &[0.1, 0.2], 10_000, 10).unwrap();
        assert!((r.exponents[0] - LOG_LAMBDA).abs() < 1e-3);
        assert!((r.exponents[1] + LOG_LAMBDA).abs() < 1e-3);
    }

    #[test]
    fn t4_exponents_survive_period_ten() {
        let t4 = crate::systems::make_anosov_t4().unwrap();
        let r = lyapunov_spectrum(&t4, &[0.1, 0.2, 0.3, 0.4], 20_000, 10).unwrap();
        let want = [3.0, 2.0, -2.0, -3.0].map(|k| k * LOG_LAMBDA);
        for (got, want) in r.exponents.iter().zip(want) {
            assert!((got - want).abs() < 1e-3, "{got} vs {want}");
        }
        assert!(r.early_reorthonormalizations > 0);
    }

    #[test]
    fn cat_unstable_direction() {
        let cat = make_cat_map();
        let s = estimate_splitting(&cat, &[0.3, 0.4], 200, 1, DEFAULT_SPLITTING_TOL).unwrap();
        let oracle = DMatrix::from_column_slice(2, 1, &[1.0, 0.618_033_988_749_895]).normalize();
        assert!(subspace_distance(&s.f_frame, &oracle) < 1e-6);
        let stable = DMatrix::from_column_slice(2, 1, &[-0.618_033_988_749_895, 1.0]).normalize();
        assert!(subspace_distance(&s.e_frame, &stable) < 1e-6);
    }

    #[test]
    fn t4_expanding_plane() {
        let m = make_anosov_t4().unwrap();
        let s = estimate_splitting(&m, &[0.1, 0.2, 0.3, 0.4], 200, 2, DEFAULT_SPLITTING_TOL).unwrap();
        let eig = m.eigen_splitting(&[0.0; 4], 2).unwrap();
        assert!(subspace_distance(&s.f_frame, &eig.f_frame) < 1e-6);
        assert!(subspace_distance(&s.e_frame, &eig.e_frame) < 1e-6);
    }

    #[test]
    fn identity_has_no_domination() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let err = estimate_splitting(&id, &[0.2, 0.3], 100, 1, DEFAULT_SPLITTING_TOL).unwrap_err();
        assert!(matches!(err, LabError::NoDomination { .. }));
        let id3 = IdentityMap::new(PhaseSpace::torus(3));
        for dim_f in [1, 2] {
            assert!(estimate_splitting(&id3, &[0.2, 0.3, 0.4], 100, dim_f, DEFAULT_SPLITTING_TOL).is_err());
        }
    }

    #[test]
    fn cat_domination_ratio() {
        let cat = make_cat_map();
        let orbit = iterate(&cat, &[0.1, 0.7], 20, false).unwrap();
        let s: Vec<_> = orbit.points.iter().map(|p| cat.eigen_splitting(p, 1).unwrap()).collect();
        let rep = domination_check(&cat, &orbit, &s).unwrap();
        assert!(rep.ok);
        assert!((rep.worst_ratio - 0.145_898_033_750_315_5).abs() < 1e-12);
    }

    #[test]
    fn identity_domination_fails() {
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let orbit = iterate(&id, &[0.1, 0.7], 5, false).unwrap();
        let cat = make_cat_map();
        let s: Vec<_> = orbit.points.iter().map(|p| cat.eigen_splitting(p, 1).unwrap()).collect();
        let rep = domination_check(&id, &orbit, &s).unwrap();
        assert!(!rep.ok);
        assert!((rep.worst_ratio - 1.0).abs() < 1e-12);
        assert!(domination_check(&id, &orbit, &s[..3]).is_err());
    }

    #[test]
    fn cat_cone_factor() {
        let cat = make_cat_map();
        let src = ConstantSplitting::from_splitting(&cat.eigen_splitting(&[0.0, 0.0], 1).unwrap());
        let cone = ConeSpec {
            center: src.f_frame.clone(),
            aperture: 0.5,
        };
        let rep = cone_contraction(&cat, &[0.2, 0.3], &cone, 1, &src).unwrap();
        assert!((rep.factor - 0.145_898_033_750_315_5).abs() < 1e-6);
        assert!(rep.invariant);
        let id = IdentityMap::new(PhaseSpace::torus(2));
        let rep = cone_contraction(&id, &[0.2, 0.3], &cone, 3, &src).unwrap();
        assert!((rep.factor - 1.0).abs() < 1e-12);
    }

    #[test]
    fn bowen_ball_cases() {
        let cat = make_cat_map();
        let x = [0.0, 0.0];
        let y = [0.01, 0.0];
        assert!(bowen_ball_contains(&cat, &x, &y, 0.05, 1).unwrap());
        assert!(bowen_ball_contains(&cat, &x, &y, 0.05, 2).unwrap());
        assert!(!bowen_ball_contains(&cat, &x, &y, 0.05, 3).unwrap());
        assert_eq!(bowen_exit_index(&cat, &x, &y, 0.05, 10).unwrap(), Some(2));
        assert!(bowen_ball_contains(&cat, &x, &x, 1e-9, 50).unwrap());
        let id = IdentityMap::new(PhaseSpace::torus(2));
        assert!(bowen_ball_contains(&id, &x, &y, 0.011, 100).unwrap());
        assert!(!bowen_ball_contains(&id, &x, &y, 0.01, 100).unwrap());
    }
}
