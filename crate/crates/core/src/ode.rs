//! Vector fields and their RK4 time-one maps.
//!
//! The Jacobian of a time-one map is obtained by integrating the variational
//! equation `dJ/dt = DX(x(t)) J` with the same RK4 scheme as the state, so the
//! returned matrix is the exact derivative of the discrete map up to roundoff.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{LabError, Result};
use crate::space::PhaseSpace;
use crate::system::SmoothSystem;

/// Default RK4 step for time-one maps.
pub const DEFAULT_RK4_STEP: f64 = 1e-3;

pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64], out: &mut [f64]);

    /// Row-major `d x d` Jacobian of the field.
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]);

    fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim();
        let mut buf = vec![0.0; d * d];
        self.jacobian_into(x, &mut buf);
        DMatrix::from_row_slice(d, d, &buf)
    }
}

/// `x' = B x` for a constant matrix `B`.
#[derive(Clone, Debug)]
pub struct LinearField {
    pub matrix: DMatrix<f64>,
}

impl VectorField for LinearField {
    fn dim(&self) -> usize {
        self.matrix.nrows()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..x.len()).map(|j| self.matrix[(i, j)] * x[j]).sum();
        }
    }
    fn jacobian_into(&self, _x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        for i in 0..d {
            for j in 0..d {
                out[i * d + j] = self.matrix[(i, j)];
            }
        }
    }
}

/// The vector field `-X`, used to integrate time-one inverses.
struct Reversed<'a>(&'a dyn VectorField);

impl VectorField for Reversed<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn eval(&self, x: &[f64], out: &mut [f64]) {
        self.0.eval(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
    fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
        self.0.jacobian_into(x, out);
        out.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Integrates the field for `steps` RK4 steps of size `h`.
pub fn rk4_flow(field: &dyn VectorField, x: &[f64], h: f64, steps: usize, out: &mut [f64]) -> Result<()> {
    let d = field.dim();
    let mut y = x.to_vec();
    let mut k = vec![vec![0.0; d]; 4];
    let mut tmp = vec![0.0; d];
    for s in 0..steps {
        field.eval(&y, &mut k[0]);
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        field.eval(&tmp, &mut k[1]);
        for i in 0..d {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        field.eval(&tmp, &mut k[2]);
        for i in 0..d {
            tmp[i] = y[i] + h * k[2][i];
        }
        field.eval(&tmp, &mut k[3]);
        for i in 0..d {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Integration { time: (s + 1) as f64 * h });
        }
    }
    out.copy_from_slice(&y);
    Ok(())
}

/// Integrates state and variational matrix together; returns the flow Jacobian.
pub fn rk4_flow_with_jacobian(
    field: &dyn VectorField,
    x: &[f64],
    h: f64,
    steps: usize,
    out: &mut [f64],
) -> Result<DMatrix<f64>> {
    let d = field.dim();
    let n = d + d * d;
    // state layout: [x (d), J row-major (d*d)]
    let mut y = vec![0.0; n];
    y[..d].copy_from_slice(x);
    for i in 0..d {
        y[d + i * d + i] = 1.0;
    }
    let mut k = vec![vec![0.0; n]; 4];
    let mut tmp = vec![0.0; n];
    let mut dx = vec![0.0; d * d];

    let rhs = |state: &[f64], out: &mut [f64], dx: &mut [f64]| {
        let (xs, js) = state.split_at(d);
        let (ox, oj) = out.split_at_mut(d);
        field.eval(xs, ox);
        field.jacobian_into(xs, dx);
        for i in 0..d {
            for j in 0..d {
                let mut acc = 0.0;
                for l in 0..d {
                    acc += dx[i * d + l] * js[l * d + j];
                }
                oj[i * d + j] = acc;
            }
        }
    };

    for s in 0..steps {
        rhs(&y, &mut k[0], &mut dx);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[0][i];
        }
        rhs(&tmp, &mut k[1], &mut dx);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * h * k[1][i];
        }
        rhs(&tmp, &mut k[2], &mut dx);
        for i in 0..n {
            tmp[i] = y[i] + h * k[2][i];
        }
        rhs(&tmp, &mut k[3], &mut dx);
        for i in 0..n {
            y[i] += h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]);
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(LabError::Integration { time: (s + 1) as f64 * h });
        }
    }
    out.copy_from_slice(&y[..d]);
    Ok(DMatrix::from_row_slice(d, d, &y[d..]))
}

/// The time-one map of a vector field, integrated with fixed-step RK4.
#[derive(Clone)]
pub struct TimeOneMap {
    field: Arc<dyn VectorField>,
    space: PhaseSpace,
    step: f64,
    steps: usize,
    label: String,
}

impl std::fmt::Debug for TimeOneMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TimeOneMap")
            .field("label", &self.label)
            .field("step", &self.step)
            .finish()
    }
}

/// Builds the RK4 time-one map of `field`. `step` must divide 1 evenly.
pub fn time_one_map(
    field: Arc<dyn VectorField>,
    space: PhaseSpace,
    step: f64,
    label: impl Into<String>,
) -> Result<TimeOneMap> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(LabError::InvalidArgument(format!("RK4 step {step} outside (0, 1]")));
    }
    let steps = (1.0 / step).round() as usize;
    if ((steps as f64) * step - 1.0).abs() > 1e-9 {
        return Err(LabError::InvalidArgument(format!("RK4 step {step} does not divide 1")));
    }
    if field.dim() != space.dim() {
        return Err(LabError::DimensionMismatch {
            expected: space.dim(),
            got: field.dim(),
        });
    }
    Ok(TimeOneMap {
        field,
        space,
        step,
        steps,
        label: label.into(),
    })
}

impl TimeOneMap {
    pub fn field(&self) -> &Arc<dyn VectorField> {
        &self.field
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    /// Flow for an arbitrary number of RK4 steps (time `steps * step`).
    pub fn flow_steps(&self, x: &[f64], steps: usize, out: &mut [f64]) -> Result<()> {
        rk4_flow(self.field.as_ref(), x, self.step, steps, out)
    }
}

impl SmoothSystem for TimeOneMap {
    fn space(&self) -> &PhaseSpace {
        &self.space
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        rk4_flow(self.field.as_ref(), x, self.step, self.steps, out)
    }
    fn analytic_jacobian(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let mut out = vec![0.0; x.len()];
        rk4_flow_with_jacobian(self.field.as_ref(), x, self.step, self.steps, &mut out).ok()
    }
    fn apply_with_jacobian(&self, x: &[f64], out: &mut [f64]) -> Result<DMatrix<f64>> {
        rk4_flow_with_jacobian(self.field.as_ref(), x, self.step, self.steps, out)
    }
    fn has_inverse(&self) -> bool {
        true
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        rk4_flow(&Reversed(self.field.as_ref()), x, self.step, self.steps, out)
    }
    fn vector_field(&self) -> Option<(Arc<dyn VectorField>, f64)> {
        Some((self.field.clone(), self.step))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expm_series(b: &DMatrix<f64>) -> DMatrix<f64> {
        // scaling and squaring with a 20-term Taylor series
        let s = 10;
        let scaled = b / 2f64.powi(s);
        let d = b.nrows();
        let mut term = DMatrix::identity(d, d);
        let mut sum = DMatrix::identity(d, d);
        for k in 1..20 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    fn unbounded(d: usize) -> PhaseSpace {
        PhaseSpace::boxed(vec![-1e6; d], vec![1e6; d]).unwrap()
    }

    #[test]
    fn zero_field_is_identity() {
        let field = Arc::new(LinearField {
            matrix: DMatrix::zeros(3, 3),
        });
        let map = time_one_map(field, unbounded(3), 1e-3, "zero").unwrap();
        let x = [0.1, -2.0, 3.5];
        let mut out = [0.0; 3];
        let jac = map.apply_with_jacobian(&x, &mut out).unwrap();
        assert_eq!(out, x);
        assert_eq!(jac, DMatrix::identity(3, 3));
    }

    #[test]
    fn linear_field_jacobian_matches_matrix_exponential() {
        let b = DMatrix::from_row_slice(3, 3, &[-0.5, 1.0, 0.0, -1.0, -0.5, 0.2, 0.3, 0.0, 0.4]);
        let map = time_one_map(Arc::new(LinearField { matrix: b.clone() }), unbounded(3), 1e-3, "lin").unwrap();
        let mut out = [0.0; 3];
        let jac = map.apply_with_jacobian(&[1.0, 2.0, 3.0], &mut out).unwrap();
        let oracle = expm_series(&b);
        assert!((&jac - &oracle).amax() < 1e-8, "{}", (&jac - &oracle).amax());
    }

    #[test]
    fn step_must_divide_one() {
        let field = Arc::new(LinearField {
            matrix: DMatrix::zeros(1, 1),
        });
        assert!(time_one_map(field.clone(), unbounded(1), 0.3, "x").is_err());
        assert!(time_one_map(field, unbounded(1), 0.25, "x").is_ok());
    }

    #[test]
    fn blowup_reports_integration_error() {
        struct Quadratic;
        impl VectorField for Quadratic {
            fn dim(&self) -> usize {
                1
            }
            fn eval(&self, x: &[f64], out: &mut [f64]) {
                out[0] = x[0] * x[0];
            }
            fn jacobian_into(&self, x: &[f64], out: &mut [f64]) {
                out[0] = 2.0 * x[0];
            }
        }
        let mut out = [0.0];
        let err = rk4_flow(&Quadratic, &[1e100], 1e-3, 1000, &mut out).unwrap_err();
        assert!(matches!(err, LabError::Integration { .. }));
    }
}
