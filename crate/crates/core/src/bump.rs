//! The compactly supported C² bump `psi(t) = (1 - t^2)^3` on `[0, 1)`, zero beyond.

/// `sup |psi'(t)|`, attained at `t = 1/sqrt(5)`: `6 / sqrt(5) * (4/5)^2`.
pub const BUMP_MAX_SLOPE: f64 = 1.717_300_206_719_838_6;

#[inline]
pub fn bump(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        s * s * s
    }
}

#[inline]
pub fn bump_slope(t: f64) -> f64 {
    if t >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        -6.0 * t * s * s
    }
}

/// `psi(|v| / r)` and its gradient with respect to `v`, where `v` is the
/// displacement from the bump centre. Returns `None` outside the support.
///
/// The gradient is `-6 (1 - t^2)^2 v / r^2`, smooth through `v = 0`.
pub fn radial_bump(v: &[f64], radius: f64, grad: &mut [f64]) -> Option<f64> {
    let r2: f64 = v.iter().map(|x| x * x).sum();
    let t2 = r2 / (radius * radius);
    if t2 >= 1.0 {
        return None;
    }
    let s = 1.0 - t2;
    let coef = -6.0 * s * s / (radius * radius);
    for (g, &vi) in grad.iter_mut().zip(v) {
        *g = coef * vi;
    }
    Some(s * s * s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_slope_constant_matches_dense_scan() {
        let scan = (0..=200_000)
            .map(|i| bump_slope(i as f64 / 200_000.0).abs())
            .fold(0.0, f64::max);
        assert!((scan - BUMP_MAX_SLOPE).abs() < 1e-9);
        let exact = 6.0 / 5f64.sqrt() * 0.64;
        assert!((exact - BUMP_MAX_SLOPE).abs() < 1e-15);
    }

    #[test]
    fn bump_is_c1_at_boundary() {
        assert_eq!(bump(1.0), 0.0);
        assert!(bump(1.0 - 1e-6) < 1e-15);
        assert!(bump_slope(1.0 - 1e-6).abs() < 1e-10);
        assert_eq!(bump(0.0), 1.0);
    }

    #[test]
    fn radial_gradient_matches_finite_differences() {
        let v = [0.03, -0.02, 0.01];
        let r = 0.1;
        let mut g = [0.0; 3];
        radial_bump(&v, r, &mut g).unwrap();
        let f = |w: &[f64]| {
            let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            bump(n / r)
        };
        for k in 0..3 {
            let h = 1e-7;
            let mut p = v;
            let mut m = v;
            p[k] += h;
            m[k] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-6);
        }
    }
}
