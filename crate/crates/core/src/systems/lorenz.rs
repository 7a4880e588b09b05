//! Lorenz-63 and its RK4 time-one map.
//!
//! The trapping region is the absorbing ball of the Lyapunov function
//! `V = x^2 + y^2 + (z - c)^2`, `c = sigma + rho`: outside the ellipsoid
//! `sigma x^2 + y^2 + beta (z - c/2)^2 <= beta c^2 / 4` we have `dV/dt < 0`, so every
//! ball `V <= R^2` with `R^2 >= max_ellipsoid V` is forward invariant. The phase
//! space is the bounding box of that ball.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::ode::{time_one_map, TimeOneMap, VectorField, DEFAULT_RK4_STEP};
use crate::space::PhaseSpace;
use crate::system::SmoothSystem;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LorenzSpec {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
    /// Explicit phase-space box; by default the bounding box of the absorbing ball.
    pub trapping_region: Option<TrappingBox>,
    pub step: f64,
    /// Relative margin added to the absorbing-ball radius.
    pub ball_margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrappingBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl Default for LorenzSpec {
    fn default() -> Self {
        Self {
            sigma: 10.0,
            rho: 28.0,
            beta: 8.0 / 3.0,
            trapping_region: None,
            step: DEFAULT_RK4_STEP,
            ball_margin: 0.02,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LorenzField {
    pub sigma: f64,
    pub rho: f64,
    pub beta: f64,
}

impl VectorField for LorenzField {
    fn dim(&self) -> usize {
        3
    }
    fn eval(&self, v: &[f64], out: &mut [f64]) {
        let (x, y, z) = (v[0], v[1], v[2]);
        out[0] = self.sigma * (y - x);
        out[1] = x * (self.rho - z) - y;
        out[2] = x * y - self.beta * z;
    }
    fn jacobian_into(&self, v: &[f64], out: &mut [f64]) {
        let (x, y, z) = (v[0], v[1], v[2]);
        out.copy_from_slice(&[
            -self.sigma,
            self.sigma,
            0.0,
            self.rho - z,
            -1.0,
            -x,
            y,
            x,
            -self.beta,
        ]);
    }
}

/// Escape statistics from the construction-time validation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrappingValidation {
    pub trajectories: usize,
    pub time_units: usize,
    pub escaped: usize,
    pub left_ball: usize,
}

impl TrappingValidation {
    pub fn all_trapped(&self) -> bool {
        self.escaped == 0 && self.left_ball == 0
    }
}

/// The Lorenz time-one map together with its absorbing ball.
#[derive(Clone, Debug)]
pub struct Lorenz {
    map: TimeOneMap,
    field: LorenzField,
    ball_center: [f64; 3],
    ball_radius: f64,
}

/// `sqrt(max V)` over the dissipation ellipsoid, by a dense angular scan.
pub fn absorbing_radius(sigma: f64, rho: f64, beta: f64) -> f64 {
    let c = sigma + rho;
    let k = (beta * c * c / 4.0).sqrt();
    let (n_t, n_p) = (720, 1440);
    let mut best: f64 = 0.0;
    for i in 0..=n_t {
        let th = std::f64::consts::PI * i as f64 / n_t as f64;
        for j in 0..n_p {
            let ph = 2.0 * std::f64::consts::PI * j as f64 / n_p as f64;
            let x = k * th.sin() * ph.cos() / sigma.sqrt();
            let y = k * th.sin() * ph.sin();
            let z = c / 2.0 + k * th.cos() / beta.sqrt();
            best = best.max(x * x + y * y + (z - c) * (z - c));
        }
    }
    best.sqrt()
}

pub fn make_lorenz(spec: &LorenzSpec) -> Result<Lorenz> {
    if !(spec.sigma > 0.0 && spec.rho > 0.0 && spec.beta > 0.0) {
        return Err(LabError::Construction("sigma, rho, beta must be positive".into()));
    }
    let field = LorenzField {
        sigma: spec.sigma,
        rho: spec.rho,
        beta: spec.beta,
    };
    let c = spec.sigma + spec.rho;
    let radius = absorbing_radius(spec.sigma, spec.rho, spec.beta) * (1.0 + spec.ball_margin.max(0.0));
    let ball_center = [0.0, 0.0, c];
    let space = match &spec.trapping_region {
        Some(b) => PhaseSpace::boxed(b.lo.clone(), b.hi.clone())?,
        None => PhaseSpace::boxed(vec![-radius, -radius, c - radius], vec![radius, radius, c + radius])?,
    };
    let eig = origin_eigenvalues(&field);
    if eig.iter().any(|v| v.abs() < 1e-9) {
        return Err(LabError::Construction(format!("origin is not hyperbolic: {eig:?}")));
    }
    let map = time_one_map(Arc::new(field), space, spec.step, "lorenz")?;
    Ok(Lorenz {
        map,
        field,
        ball_center,
        ball_radius: radius,
    })
}

/// Eigenvalues of the field Jacobian at the origin, sorted ascending.
pub fn origin_eigenvalues(field: &LorenzField) -> Vec<f64> {
    let j = field.jacobian(&[0.0; 3]);
    let mut v: Vec<f64> = j.complex_eigenvalues().iter().map(|z| z.re).collect();
    v.sort_by(f64::total_cmp);
    v
}

impl Lorenz {
    pub fn field(&self) -> &LorenzField {
        &self.field
    }

    pub fn time_one(&self) -> &TimeOneMap {
        &self.map
    }

    pub fn ball_center(&self) -> [f64; 3] {
        self.ball_center
    }

    pub fn ball_radius(&self) -> f64 {
        self.ball_radius
    }

    pub fn in_ball(&self, x: &[f64]) -> bool {
        let d2: f64 = x.iter().zip(&self.ball_center).map(|(a, b)| (a - b) * (a - b)).sum();
        d2 <= self.ball_radius * self.ball_radius
    }

    /// Uniform sample in the absorbing ball.
    pub fn sample_initial_conditions(&self, count: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let u: [f64; 3] = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            if u.iter().map(|v| v * v).sum::<f64>() <= 1.0 {
                out.push((0..3).map(|k| self.ball_center[k] + self.ball_radius * u[k]).collect());
            }
        }
        out
    }

    /// Integrates `ics` for `time_units`, checking box containment after every
    /// RK4 step and ball containment after every unit of time.
    pub fn validate_trapping(&self, ics: &[Vec<f64>], time_units: usize) -> TrappingValidation {
        use rayon::prelude::*;
        let steps = (1.0 / self.map.step()).round() as usize;
        let results: Vec<(bool, bool)> = ics
            .par_iter()
            .map(|x0| {
                let mut x = x0.clone();
                let mut next = vec![0.0; 3];
                let mut left = false;
                for _ in 0..time_units {
                    for _ in 0..steps {
                        if self.map.flow_steps(&x, 1, &mut next).is_err() || !self.map.space().contains(&next) {
                            return (true, true);
                        }
                        std::mem::swap(&mut x, &mut next);
                    }
                    left |= !self.in_ball(&x);
                }
                (false, left)
            })
            .collect();
        let report = TrappingValidation {
            trajectories: ics.len(),
            time_units,
            escaped: results.iter().filter(|r| r.0).count(),
            left_ball: results.iter().filter(|r| r.1).count(),
        };
        if !report.all_trapped() {
            log::warn!(
                "lorenz trapping region: {} of {} trajectories escaped the box, {} left the ball",
                report.escaped,
                report.trajectories,
                report.left_ball
            );
        }
        report
    }

    /// `log |det Dphi_1 restricted to F|` along a forward orbit, with `F` the
    /// pushed-forward 2-frame (the centre-unstable bundle).
    pub fn cu_volume_rates(&self, x: &[f64], burn_in: usize, n: usize) -> Result<Vec<f64>> {
        let (orbit, frames) = crate::tangent::forward_frames(&self.map, x, burn_in, n, 2)?;
        orbit
            .points
            .iter()
            .zip(&frames)
            .map(|(p, f)| crate::entropy::potential_phi_f(&self.map, p, f).map(|v| -v))
            .collect()
    }
}

impl SmoothSystem for Lorenz {
    fn space(&self) -> &PhaseSpace {
        self.map.space()
    }
    fn label(&self) -> &str {
        "lorenz"
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.map.apply_into(x, out)
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        self.map.analytic_jacobian(x)
    }
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        self.map.apply_with_jacobian(x, out)
    }
    fn has_inverse(&self) -> bool {
        true
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        self.map.apply_inverse_into(x, out)
    }
    fn vector_field(&self) -> Option<(Arc<dyn VectorField>, f64)> {
        self.map.vector_field()
    }
}

/// Field trace `-(sigma + 1 + beta)`, the volume contraction rate.
pub fn field_trace(field: &LorenzField, x: &[f64]) -> f64 {
    field.jacobian(x).trace()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_spectrum() {
        let l = make_lorenz(&LorenzSpec::default()).unwrap();
        let e = origin_eigenvalues(l.field());
        let expect = [-22.827_723_451_163_457, -8.0 / 3.0, 11.827_723_451_163_457];
        for (a, b) in e.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn trace_is_constant() {
        let l = make_lorenz(&LorenzSpec::default()).unwrap();
        for x in [[0.0, 0.0, 0.0], [1.0, -3.0, 20.0], [-8.0, 4.0, 30.0]] {
            assert!((field_trace(l.field(), &x) + 41.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn origin_is_fixed() {
        let l = make_lorenz(&LorenzSpec::default()).unwrap();
        assert_eq!(l.apply(&[0.0; 3]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn absorbing_radius_value() {
        let r = absorbing_radius(10.0, 28.0, 8.0 / 3.0);
        assert!((r - 39.246).abs() < 5e-3, "{r}");
    }

    #[test]
    fn step_halving_is_order_four() {
        let a = make_lorenz(&LorenzSpec::default()).unwrap();
        let b = make_lorenz(&LorenzSpec {
            step: 5e-4,
            ..LorenzSpec::default()
        })
        .unwrap();
        let x = [1.0, 1.0, 20.0];
        let d = a.space().distance(&a.apply(&x).unwrap(), &b.apply(&x).unwrap());
        assert!(d < 1e-8, "{d}");
    }

    #[test]
    fn short_trapping_run() {
        let l = make_lorenz(&LorenzSpec::default()).unwrap();
        let ics = l.sample_initial_conditions(4, 3);
        assert!(ics.iter().all(|x| l.in_ball(x) && l.space().contains(x)));
        assert!(l.validate_trapping(&ics, 20).all_trapped());
    }
}
