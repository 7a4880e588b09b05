use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::linalg::{null_vector, orthonormalize, spectral_norm};
use crate::space::PhaseSpace;
use crate::system::SmoothSystem;
use crate::tangent::TangentSplitting;

/// Integer matrix of a toral automorphism.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearToralSpec {
    pub matrix: Vec<Vec<i64>>,
}

/// Real eigenvalues sorted ascending, with unit eigenvectors.
#[derive(Clone, Debug)]
pub struct EigenData {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
}

/// `x -> A x mod 1` on `T^d`.
#[derive(Clone, Debug)]
pub struct LinearToralMap {
    matrix: DMatrix<f64>,
    inverse: DMatrix<f64>,
    integer: Vec<Vec<i64>>,
    eigen: EigenData,
    space: PhaseSpace,
    c1_bound: f64,
    label: String,
}

impl LinearToralMap {
    /// Requires `|det A| = 1` and a real, simple spectrum.
    pub fn new(spec: &LinearToralSpec, label: impl Into<String>) -> Result<Self> {
        let d = spec.matrix.len();
        if d == 0 || spec.matrix.iter().any(|r| r.len() != d) {
            return Err(LabError::Construction("matrix must be square and nonempty".into()));
        }
        let matrix = DMatrix::from_fn(d, d, |i, j| spec.matrix[i][j] as f64);
        let det = matrix.determinant();
        if (det.abs() - 1.0).abs() > 1e-9 {
            return Err(LabError::Construction(format!("|det A| = {} != 1", det.abs())));
        }
        let inverse = matrix
            .clone()
            .try_inverse()
            .ok_or_else(|| LabError::Construction("matrix not invertible".into()))?
            .map(f64::round);
        if (&matrix * &inverse - DMatrix::identity(d, d)).amax() > 1e-9 {
            return Err(LabError::Construction("inverse is not an integer matrix".into()));
        }
        let eigen = eigen_data(&matrix)?;
        let c1_bound = spectral_norm(&matrix).max(spectral_norm(&inverse));
        Ok(Self {
            matrix,
            inverse,
            integer: spec.matrix.clone(),
            eigen,
            space: PhaseSpace::torus(d),
            c1_bound,
            label: label.into(),
        })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn integer_matrix(&self) -> &[Vec<i64>] {
        &self.integer
    }

    pub fn eigen(&self) -> &EigenData {
        &self.eigen
    }

    /// `F` = span of the `dim_f` eigendirections of largest modulus, `E` = the rest.
    pub fn eigen_splitting(&self, x: &[f64], dim_f: usize) -> Result<TangentSplitting> {
        let d = self.matrix.nrows();
        if dim_f == 0 || dim_f >= d {
            return Err(LabError::InvalidArgument(format!("dim_f must be in 1..{d}")));
        }
        let col = |k: usize| nalgebra::DVector::from_column_slice(&self.eigen.vectors[k]);
        let e_cols: Vec<_> = (0..d - dim_f).map(col).collect();
        let f_cols: Vec<_> = (d - dim_f..d).rev().map(col).collect();
        Ok(TangentSplitting {
            basepoint: x.to_vec(),
            e_frame: orthonormalize(&DMatrix::from_columns(&e_cols)),
            f_frame: orthonormalize(&DMatrix::from_columns(&f_cols)),
            convergence_residual: 0.0,
        })
    }
}

impl SmoothSystem for LinearToralMap {
    fn space(&self) -> &PhaseSpace {
        &self.space
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn apply_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        mat_vec_wrapped(&self.matrix, x, out);
        Ok(())
    }
    fn analytic_jacobian(&self, _x: &[f64]) -> Option<DMatrix<f64>> {
        Some(self.matrix.clone())
    }
    fn has_inverse(&self) -> bool {
        true
    }
    fn apply_inverse_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        mat_vec_wrapped(&self.inverse, x, out);
        Ok(())
    }
    fn c1_norm_bound(&self) -> Option<f64> {
        Some(self.c1_bound)
    }
}

/// `A x mod 1`. Shared with the Bonatti–Viana map so the two agree bitwise off the deformation.
pub(crate) fn mat_vec_wrapped(a: &DMatrix<f64>, x: &[f64], out: &mut [f64]) {
    let d = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..d {
            acc += a[(i, j)] * x[j];
        }
        *o = crate::space::wrap_unit(acc);
    }
}

fn eigen_data(a: &DMatrix<f64>) -> Result<EigenData> {
    let eig = a.complex_eigenvalues();
    if eig.iter().any(|z| z.im.abs() > 1e-9) {
        return Err(LabError::Construction("spectrum must be real".into()));
    }
    let mut values: Vec<f64> = eig.iter().map(|z| z.re).collect();
    values.sort_by(|a, b| a.abs().total_cmp(&b.abs()));
    if values.windows(2).any(|w| (w[1].abs() - w[0].abs()).abs() < 1e-9) {
        return Err(LabError::Construction("eigenvalue moduli must be distinct".into()));
    }
    let d = a.nrows();
    let vectors = values
        .iter()
        .map(|&lam| {
            let mut v = null_vector(&(a - DMatrix::identity(d, d) * lam));
            // deterministic orientation: largest component positive
            let k = v.iamax();
            if v[k] < 0.0 {
                v = -v;
            }
            v.iter().copied().collect()
        })
        .collect();
    Ok(EigenData { values, vectors })
}

/// The cat map `[[2,1],[1,1]]` on `T^2`.
pub fn make_cat_map() -> LinearToralMap {
    LinearToralMap::new(
        &LinearToralSpec {
            matrix: vec![vec![2, 1], vec![1, 1]],
        },
        "cat",
    )
    .expect("cat matrix is a hyperbolic automorphism")
}

/// `diag(A0^2, A0^3)` on `T^4`, `A0` the cat matrix. Eigenvalues
/// `lambda^-3 < lambda^-2 < 1/3 < 3 < lambda^2 < lambda^3`, `lambda = (3 + sqrt 5) / 2`.
pub fn make_anosov_t4() -> Result<LinearToralMap> {
    let spec = LinearToralSpec {
        matrix: vec![
            vec![5, 3, 0, 0],
            vec![3, 2, 0, 0],
            vec![0, 0, 13, 8],
            vec![0, 0, 8, 5],
        ],
    };
    let map = LinearToralMap::new(&spec, "anosov_t4")?;
    check_t4_spectrum(&map.eigen.values)?;
    Ok(map)
}

/// `0 < l1 < l2 < 1/3 < 3 < l3 < l4`.
pub fn check_t4_spectrum(values: &[f64]) -> Result<()> {
    let ok = values.len() == 4
        && 0.0 < values[0]
        && values[0] < values[1]
        && values[1] < 1.0 / 3.0
        && 3.0 < values[2]
        && values[2] < values[3];
    if ok {
        Ok(())
    } else {
        Err(LabError::Construction(format!(
            "spectrum {values:?} violates 0 < l1 < l2 < 1/3 < 3 < l3 < l4"
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::iterate;

    const GOLDEN: f64 = 2.618_033_988_749_895; // (3 + sqrt 5) / 2

    #[test]
    fn cat_map_eigen_data() {
        let cat = make_cat_map();
        let e = cat.eigen();
        assert!((e.values[1] - GOLDEN).abs() < 1e-12);
        assert!((e.values[1].ln() - 0.962_423_650_119_206_9).abs() < 1e-12);
        let v = &e.vectors[1];
        assert!((v[1] / v[0] - 0.618_033_988_749_895).abs() < 1e-12);
    }

    #[test]
    fn cat_map_orbits() {
        let cat = make_cat_map();
        let orbit = iterate(&cat, &[0.0, 0.0], 10, false).unwrap();
        assert!(orbit.points.iter().all(|p| p == &vec![0.0, 0.0]));
        let orbit = iterate(&cat, &[0.1, 0.2], 2, false).unwrap();
        assert!((orbit.points[1][0] - 0.4).abs() < 1e-15);
        assert!((orbit.points[1][1] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn t4_spectrum() {
        let m = make_anosov_t4().unwrap();
        let expect = [0.055_728_090_000_841_2, 0.145_898_033_750_315_5, 6.854_101_966_249_685, 17.944_271_909_999_16];
        for (a, b) in m.eigen().values.iter().zip(expect) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
        assert!(check_t4_spectrum(&[0.05, 0.4, 6.0, 17.0]).is_err());
    }

    #[test]
    fn inverse_round_trips() {
        let m = make_anosov_t4().unwrap();
        let x = [0.123, 0.456, 0.789, 0.321];
        let y = m.apply(&x).unwrap();
        let back = m.apply_inverse(&y).unwrap();
        assert!(m.space().distance(&x, &back) < 1e-9);
    }

    #[test]
    fn rejects_non_unimodular() {
        let spec = LinearToralSpec {
            matrix: vec![vec![2, 0], vec![0, 1]],
        };
        assert!(LinearToralMap::new(&spec, "bad").is_err());
    }
}
