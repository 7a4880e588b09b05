//! Small dense linear-algebra helpers over `nalgebra::DMatrix`.

use nalgebra::{DMatrix, DVector};

/// Thin QR with a nonnegative `R` diagonal. Returns `(Q, R)`.
pub fn qr_positive(m: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let qr = m.clone().qr();
    let mut q = qr.q();
    let mut r = qr.r();
    for k in 0..r.nrows().min(r.ncols()) {
        if r[(k, k)] < 0.0 {
            r.row_mut(k).neg_mut();
            q.column_mut(k).neg_mut();
        }
    }
    (q, r)
}

/// Orthonormal basis of the column span (column order preserved).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    qr_positive(m).0
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(0.0, f64::max)
}

/// Smallest singular value of a tall matrix (`rows >= cols`).
pub fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    singular_values(m).iter().copied().fold(f64::INFINITY, f64::min)
}

fn singular_values(m: &DMatrix<f64>) -> DVector<f64> {
    // eigenvalues of the small Gram matrix are cheaper and exact enough here
    let gram = m.transpose() * m;
    gram.symmetric_eigenvalues().map(|v| v.max(0.0).sqrt())
}

/// Unit vector spanning the (numerical) kernel: right singular vector of the smallest singular value.
pub fn null_vector(m: &DMatrix<f64>) -> DVector<f64> {
    let svd = m.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let (k, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    v_t.row(k).transpose().normalize()
}

/// Orthogonal projector onto the span of an orthonormal frame.
pub fn projector(frame: &DMatrix<f64>) -> DMatrix<f64> {
    frame * frame.transpose()
}

/// Sine of the largest principal angle between two equal-dimension subspaces
/// given by orthonormal frames.
pub fn subspace_distance(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let diff = projector(a) - projector(b);
    diff.symmetric_eigenvalues().iter().map(|v| v.abs()).fold(0.0, f64::max)
}

/// Smallest principal angle (radians) between the spans of two orthonormal frames.
pub fn min_principal_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let c = a.transpose() * b;
    let largest_cos = spectral_norm(&c).min(1.0);
    largest_cos.acos()
}

/// Distance of a frame from orthonormality, `max |F^T F - I|`.
pub fn orthonormality_defect(frame: &DMatrix<f64>) -> f64 {
    let k = frame.ncols();
    (frame.transpose() * frame - DMatrix::identity(k, k)).amax()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qr_positive_diagonal() {
        let m = DMatrix::from_row_slice(3, 2, &[-1.0, 2.0, 0.5, -3.0, 2.0, 1.0]);
        let (q, r) = qr_positive(&m);
        assert!((0..2).all(|k| r[(k, k)] >= 0.0));
        assert!((&q * &r - &m).amax() < 1e-12);
        assert!(orthonormality_defect(&q) < 1e-12);
    }

    #[test]
    fn subspace_distance_of_axes() {
        let e1 = DMatrix::from_column_slice(2, 1, &[1.0, 0.0]);
        let e2 = DMatrix::from_column_slice(2, 1, &[0.0, 1.0]);
        let diag = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]).normalize();
        assert!((subspace_distance(&e1, &e2) - 1.0).abs() < 1e-12);
        assert!(subspace_distance(&e1, &e1) < 1e-15);
        assert!((subspace_distance(&e1, &diag) - (0.5f64).sqrt()).abs() < 1e-12);
        assert!((min_principal_angle(&e1, &diag) - std::f64::consts::FRAC_PI_4).abs() < 1e-12);
    }

    #[test]
    fn null_vector_of_rank_deficient() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        let v = null_vector(&m);
        assert!((&m * &v).amax() < 1e-12);
    }
}
